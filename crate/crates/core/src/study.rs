//! Imaging studies as the pipeline sees them: decoded frames plus metadata.

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::raster::Raster;
use crate::study_matcher::DatedStudy;
use crate::types::{Site, StudyKind};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImageRef {
    pub study_id: String,
    pub image_id: String,
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.study_id, self.image_id)
    }
}

#[derive(Debug, Clone)]
pub struct StudyImage {
    pub image_id: String,
    /// `Err` holds the decode failure; such frames are skipped, not fatal.
    pub raster: Result<Raster, String>,
}

#[derive(Debug, Clone)]
pub struct Study {
    pub study_id: String,
    pub kind: StudyKind,
    pub date: NaiveDate,
    pub site: Site,
    pub images: Vec<StudyImage>,
}

impl Study {
    pub fn image_ref(&self, index: usize) -> ImageRef {
        ImageRef {
            study_id: self.study_id.clone(),
            image_id: self.images[index].image_id.clone(),
        }
    }
}

impl DatedStudy for Study {
    fn study_id(&self) -> &str {
        &self.study_id
    }
    fn kind(&self) -> StudyKind {
        self.kind
    }
    fn date(&self) -> NaiveDate {
        self.date
    }
}

/// `meta.json` stored next to each study's frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyMeta {
    pub kind: StudyKind,
    pub date: NaiveDate,
    pub site: Site,
}
