//! Nodule measurements from the Findings section of thyroid ultrasound reports.
//!
//! Only "<noun> measures A x B x C cm" statements whose noun is `nodule`
//! are kept, so lobe and isthmus sizes never leak into the output.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::types::Laterality;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportNodule {
    pub laterality: Laterality,
    pub ordinal: Option<u32>,
    pub dims_cm: Vec<f64>,
    /// 1-based line number in the report.
    pub source_line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RadiologyParse {
    pub nodules: Vec<ReportNodule>,
    pub diagnostics: Vec<String>,
}

fn measures_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\b([a-z]+)\s+measures\s+(?:up\s+to\s+|approximately\s+|about\s+)?(\d+(?:\.\d+)?)(?:\s*x\s*(\d+(?:\.\d+)?))?(?:\s*x\s*(\d+(?:\.\d+)?))?\s*(cm|mm)\b",
        )
        .expect("valid regex")
    })
}

fn ordinal_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bnodule\s*#\s*(\d+)").expect("valid regex"))
}

fn header(line: &str) -> Option<String> {
    let t = line.trim().trim_matches('*').trim();
    let head = t.strip_suffix(':')?;
    if head.is_empty() || head.len() > 24 || head.contains(|c: char| c.is_ascii_digit()) {
        return None;
    }
    Some(head.trim().to_ascii_lowercase())
}

fn subsection_laterality(head: &str) -> Option<Laterality> {
    match head {
        "right lobe" | "right" | "right thyroid lobe" => Some(Laterality::Right),
        "left lobe" | "left" | "left thyroid lobe" => Some(Laterality::Left),
        "isthmus" => Some(Laterality::Isthmus),
        _ => None,
    }
}

fn inline_laterality(line: &str) -> Option<Laterality> {
    let lower = line.to_ascii_lowercase();
    lower
        .split(|c: char| !c.is_ascii_alphabetic())
        .find_map(|w| match w {
            "right" => Some(Laterality::Right),
            "left" => Some(Laterality::Left),
            "isthmus" | "isthmic" => Some(Laterality::Isthmus),
            _ => None,
        })
}

fn nodule_measurements(line: &str) -> Option<Vec<f64>> {
    // markdown emphasis may sit between "measures" and the numbers
    let line = line.replace('*', "");
    for cap in measures_regex().captures_iter(&line) {
        if !cap[1].eq_ignore_ascii_case("nodule") {
            continue;
        }
        let scale = if cap[5].eq_ignore_ascii_case("mm") { 0.1 } else { 1.0 };
        let dims: Vec<f64> = (2..=4)
            .filter_map(|i| cap.get(i))
            .filter_map(|m| m.as_str().parse::<f64>().ok())
            .map(|v| ((v * scale) * 100.0).round() / 100.0)
            .collect();
        if !dims.is_empty() && dims.iter().all(|&d| d > 0.0 && d < 20.0) {
            return Some(dims);
        }
    }
    None
}

pub fn has_findings_section(report: &str) -> bool {
    report
        .lines()
        .any(|l| header(l).is_some_and(|h| h == "findings"))
}

/// Every nodule measurement in the Findings section, tagged with laterality.
pub fn parse_findings(report: &str) -> RadiologyParse {
    let mut out = RadiologyParse::default();
    let lines: Vec<&str> = report.lines().collect();
    let Some(start) = lines
        .iter()
        .position(|l| header(l).is_some_and(|h| h == "findings"))
    else {
        out.diagnostics.push("no Findings section".into());
        return out;
    };
    let end = lines[start + 1..]
        .iter()
        .position(|l| header(l).is_some_and(|h| h == "impression"))
        .map_or(lines.len(), |p| start + 1 + p);

    let has_subsections = lines[start + 1..end]
        .iter()
        .any(|l| header(l).as_deref().and_then(subsection_laterality).is_some());

    let mut current: Option<Laterality> = None;
    for (idx, line) in lines.iter().enumerate().take(end).skip(start + 1) {
        if let Some(h) = header(line) {
            if let Some(l) = subsection_laterality(&h) {
                current = Some(l);
                continue;
            }
        }
        let Some(dims) = nodule_measurements(line) else {
            continue;
        };
        let laterality = if has_subsections {
            current
        } else {
            inline_laterality(line)
        };
        let Some(laterality) = laterality else {
            out.diagnostics
                .push(format!("line {}: nodule measurement without laterality", idx + 1));
            continue;
        };
        let ordinal = ordinal_regex()
            .captures(line)
            .and_then(|c| c[1].parse().ok());
        out.nodules.push(ReportNodule {
            laterality,
            ordinal,
            dims_cm: dims,
            source_line: idx + 1,
        });
    }
    out
}

pub fn extract_nodule_measurements(report: &str, laterality: Laterality) -> RadiologyParse {
    let mut parse = parse_findings(report);
    parse.nodules.retain(|n| n.laterality == laterality);
    parse
}

pub fn count_nodules_on_side(report: &str, laterality: Laterality) -> usize {
    extract_nodule_measurements(report, laterality).nodules.len()
}
