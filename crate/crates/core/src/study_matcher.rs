//! Pairs a pathology report with the imaging study closest to it in time.

use std::cmp::Reverse;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::types::StudyKind;

pub const DEFAULT_MAX_GAP_DAYS: i64 = 183;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchWindow {
    pub max_gap_days: i64,
}

impl Default for MatchWindow {
    fn default() -> Self {
        MatchWindow {
            max_gap_days: DEFAULT_MAX_GAP_DAYS,
        }
    }
}

impl MatchWindow {
    pub fn new(max_gap_days: i64) -> crate::Result<Self> {
        if max_gap_days <= 0 {
            return Err(crate::Error::validation("max_gap_days must be positive"));
        }
        Ok(MatchWindow { max_gap_days })
    }
}

/// Anything with an id, a kind and an acquisition date.
pub trait DatedStudy {
    fn study_id(&self) -> &str;
    fn kind(&self) -> StudyKind;
    fn date(&self) -> NaiveDate;
}

/// Selects the study of `kind` nearest to `pathology_date` within the window.
///
/// Equal gaps prefer the study dated on or before the pathology date; any
/// remaining tie goes to the later date and then the smaller study id, so
/// the result does not depend on input order.
pub fn match_study<'a, S: DatedStudy>(
    pathology_date: NaiveDate,
    studies: &'a [S],
    kind: StudyKind,
    window: MatchWindow,
) -> Option<&'a S> {
    studies
        .iter()
        .filter(|s| s.kind() == kind)
        .filter_map(|s| {
            let gap = (s.date() - pathology_date).num_days();
            (gap.abs() <= window.max_gap_days).then_some((s, gap))
        })
        .min_by_key(|(s, gap)| (gap.abs(), *gap > 0, Reverse(s.date()), s.study_id()))
        .map(|(s, _)| s)
}
