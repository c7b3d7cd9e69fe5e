//! Rule-based extraction of nodule records from thyroid cytopathology reports.
//!
//! The parser first reads the `Specimen:` section, where each thyroid
//! specimen line gives laterality, location and nodule label. It then finds
//! the per-specimen diagnosis anchors later in the report (lines that start
//! with the thyroid keyword) and classifies the text that follows each one.
//! Specimens and anchors pair up in document order.
//!
//! Vocabulary and diagnosis phrases come from a JSON rules file; the bundled
//! default lives in `rules/pathology_rules.json`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Diagnosis, Laterality};

const DEFAULT_RULES: &str = include_str!("../rules/pathology_rules.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisRule {
    pub class: Diagnosis,
    pub phrases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathologyRules {
    pub specimen_anchor: String,
    pub specimen_headers: Vec<String>,
    pub descriptor_stop_words: Vec<String>,
    pub laterality: BTreeMap<Laterality, Vec<String>>,
    pub location: BTreeMap<String, Vec<String>>,
    /// Checked in order; the first class with a matching phrase wins.
    pub diagnosis: Vec<DiagnosisRule>,
}

impl PathologyRules {
    pub fn from_json(json: &str) -> Result<Self> {
        let rules: PathologyRules =
            serde_json::from_str(json).map_err(|e| Error::json("pathology rules", e))?;
        if rules.specimen_anchor.trim().is_empty() {
            return Err(Error::validation("pathology rules: empty specimen anchor"));
        }
        Ok(rules.lowercased())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&json)
    }

    fn lowercased(mut self) -> Self {
        let lower = |v: &mut Vec<String>| v.iter_mut().for_each(|s| *s = s.to_lowercase());
        self.specimen_anchor = self.specimen_anchor.to_lowercase();
        lower(&mut self.specimen_headers);
        lower(&mut self.descriptor_stop_words);
        self.laterality.values_mut().for_each(lower);
        self.location.values_mut().for_each(lower);
        self.diagnosis.iter_mut().for_each(|r| lower(&mut r.phrases));
        self
    }

    fn laterality_of(&self, token: &str) -> Option<Laterality> {
        self.laterality
            .iter()
            .find(|(_, syn)| syn.iter().any(|s| s == token))
            .map(|(l, _)| *l)
    }

    fn location_of(&self, token: &str) -> Option<&str> {
        self.location
            .iter()
            .find(|(_, syn)| syn.iter().any(|s| s == token))
            .map(|(l, _)| l.as_str())
    }
}

impl Default for PathologyRules {
    fn default() -> Self {
        PathologyRules::from_json(DEFAULT_RULES).expect("bundled pathology rules are valid")
    }
}

fn default_rules() -> &'static PathologyRules {
    static RULES: OnceLock<PathologyRules> = OnceLock::new();
    RULES.get_or_init(PathologyRules::default)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    /// 1-based line of the specimen entry.
    pub specimen_line: usize,
    /// 1-based line of the diagnosis anchor.
    pub diagnosis_line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoduleRecord {
    pub laterality: Laterality,
    pub location: Option<String>,
    pub label: Option<String>,
    pub diagnosis: Diagnosis,
    pub source_span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecimenDescriptor {
    pub laterality: Laterality,
    pub location: Option<String>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpecimenError {
    NoAnchor,
    NoLaterality,
    /// More than one laterality on the line, e.g. "right and left".
    MultipleLateralities(Vec<Laterality>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathologyParse {
    pub records: Vec<NoduleRecord>,
    pub diagnostics: Vec<String>,
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '#' || c == '-'))
        .flat_map(|t| {
            // keep "ultrasound-guided" whole, but split "-" separators
            if t.chars().all(|c| c == '-') {
                vec![]
            } else {
                vec![t.trim_matches('-')]
            }
        })
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Text after the first occurrence of the anchor keyword, or `None`.
fn after_anchor<'a>(line: &'a str, rules: &PathologyRules) -> Option<&'a str> {
    let lower = line.to_lowercase();
    let idx = lower.find(&rules.specimen_anchor)?;
    // lowercasing ASCII keeps byte offsets; fall back to the whole line otherwise
    let start = idx + rules.specimen_anchor.len();
    if lower.len() == line.len() {
        Some(&line[start..])
    } else {
        Some(line)
    }
}

fn descriptor_tokens(rest: &str, rules: &PathologyRules) -> Vec<String> {
    tokens(rest)
        .take_while(|t| !rules.descriptor_stop_words.iter().any(|s| s == t))
        .collect()
}

fn parse_descriptor_tokens(
    toks: &[String],
    rules: &PathologyRules,
) -> std::result::Result<SpecimenDescriptor, SpecimenError> {
    let mut lats: Vec<Laterality> = Vec::new();
    let mut location = None;
    let mut label = None;
    for t in toks {
        if let Some(l) = rules.laterality_of(t) {
            if !lats.contains(&l) {
                lats.push(l);
            }
        } else if let Some(loc) = rules.location_of(t) {
            location.get_or_insert_with(|| loc.to_string());
        } else if let Some(d) = t.strip_prefix('#') {
            if let Ok(n) = d.parse::<u32>() {
                label.get_or_insert_with(|| format!("#{n}"));
            }
        }
    }
    if label.is_none() {
        if let Some(n) = toks.last().and_then(|t| t.parse::<u32>().ok()) {
            label = Some(format!("#{n}"));
        }
    }
    match lats.len() {
        0 => Err(SpecimenError::NoLaterality),
        1 => Ok(SpecimenDescriptor {
            laterality: lats[0],
            location,
            label,
        }),
        _ => Err(SpecimenError::MultipleLateralities(lats)),
    }
}

/// Laterality, location and label from a line carrying the thyroid keyword.
pub fn parse_specimen_line_with(
    line: &str,
    rules: &PathologyRules,
) -> std::result::Result<SpecimenDescriptor, SpecimenError> {
    let rest = after_anchor(line, rules).ok_or(SpecimenError::NoAnchor)?;
    parse_descriptor_tokens(&descriptor_tokens(rest, rules), rules)
}

pub fn parse_specimen_line(line: &str) -> std::result::Result<SpecimenDescriptor, SpecimenError> {
    parse_specimen_line_with(line, default_rules())
}

/// First line (in order) containing a diagnosis phrase decides the class.
pub fn classify_diagnosis_with(lines: &[&str], rules: &PathologyRules) -> Option<Diagnosis> {
    lines.iter().find_map(|line| {
        let lower = line.to_lowercase();
        rules
            .diagnosis
            .iter()
            .find(|r| r.phrases.iter().any(|p| lower.contains(p.as_str())))
            .map(|r| r.class)
    })
}

pub fn classify_diagnosis(lines: &[&str]) -> Option<Diagnosis> {
    classify_diagnosis_with(lines, default_rules())
}

fn enumerator_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*[A-Za-z]\)\s*(-\s*)?").expect("valid regex"))
}

fn is_specimen_continuation(line: &str) -> bool {
    enumerator_regex()
        .find(line)
        .is_some_and(|m| m.as_str().contains('-'))
}

fn strip_enumerator(line: &str) -> &str {
    match enumerator_regex().find(line) {
        Some(m) => &line[m.end()..],
        None => line.trim_start(),
    }
}

fn specimen_header_rest<'a>(line: &'a str, rules: &PathologyRules) -> Option<&'a str> {
    let trimmed = line.trim_start();
    let colon = trimmed.find(':')?;
    let head = trimmed[..colon].trim().to_lowercase();
    rules
        .specimen_headers
        .iter()
        .any(|h| *h == head)
        .then(|| &trimmed[colon + 1..])
}

/// A diagnosis anchor starts (after any "A)" enumerator) with the thyroid
/// keyword followed by a comma.
fn is_diagnosis_anchor(line: &str, rules: &PathologyRules) -> bool {
    let body = strip_enumerator(line).to_lowercase();
    body.strip_prefix(rules.specimen_anchor.as_str())
        .is_some_and(|rest| rest.trim_start().starts_with(','))
}

struct Specimen {
    line: usize,
    desc: SpecimenDescriptor,
    /// Set when the entry came from splitting a multi-laterality line.
    split: bool,
}

/// Date from the `Collected:` header field.
pub fn parse_collected_date(text: &str) -> Option<NaiveDate> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?i)collected:\s*(\d{4}-\d{2}-\d{2})").expect("valid regex")
    });
    re.captures(text)?.get(1)?.as_str().parse().ok()
}

pub fn parse_pathology_with(report: &str, rules: &PathologyRules) -> PathologyParse {
    let lines: Vec<&str> = report.lines().collect();
    let mut out = PathologyParse::default();

    let mut specimens: Vec<Specimen> = Vec::new();
    let mut section_end = 0usize;
    let push_entry = |idx: usize, text: &str, out: &mut PathologyParse, specimens: &mut Vec<Specimen>| {
        match parse_specimen_line_with(text, rules) {
            Ok(desc) => specimens.push(Specimen {
                line: idx + 1,
                desc,
                split: false,
            }),
            Err(SpecimenError::NoAnchor) => out
                .diagnostics
                .push(format!("line {}: non-thyroid specimen skipped", idx + 1)),
            Err(SpecimenError::NoLaterality) => out
                .diagnostics
                .push(format!("line {}: thyroid specimen without laterality skipped", idx + 1)),
            Err(SpecimenError::MultipleLateralities(lats)) => {
                let rest = after_anchor(text, rules).unwrap_or(text);
                let toks = descriptor_tokens(rest, rules);
                for lat in lats {
                    let filtered: Vec<String> = toks
                        .iter()
                        .filter(|t| rules.laterality_of(t).map_or(true, |l| l == lat))
                        .cloned()
                        .collect();
                    if let Ok(desc) = parse_descriptor_tokens(&filtered, rules) {
                        specimens.push(Specimen {
                            line: idx + 1,
                            desc,
                            split: true,
                        });
                    }
                }
            }
        }
    };

    if let Some(header_idx) = lines
        .iter()
        .position(|l| specimen_header_rest(l, rules).is_some())
    {
        let rest = specimen_header_rest(lines[header_idx], rules).unwrap_or("");
        if !rest.trim().is_empty() {
            push_entry(header_idx, rest, &mut out, &mut specimens);
        }
        section_end = header_idx + 1;
        while section_end < lines.len() && is_specimen_continuation(lines[section_end]) {
            push_entry(section_end, lines[section_end], &mut out, &mut specimens);
            section_end += 1;
        }
    }

    let anchors: Vec<usize> = (section_end..lines.len())
        .filter(|&i| is_diagnosis_anchor(lines[i], rules))
        .collect();

    if specimens.is_empty() {
        if section_end == 0 {
            // no specimen section: the diagnosis anchors describe the specimens
            for &i in &anchors {
                push_entry(i, strip_enumerator(lines[i]), &mut out, &mut specimens);
            }
        }
        if specimens.is_empty() {
            return out;
        }
    }

    if specimens.iter().any(|s| s.split) && anchors.len() < specimens.len() {
        out.diagnostics.push(
            "multi-laterality specimen line without matching diagnosis sections skipped".into(),
        );
        specimens.retain(|s| !s.split);
    }

    for (k, spec) in specimens.iter().enumerate() {
        let Some(&anchor) = anchors.get(k) else {
            out.diagnostics.push(format!(
                "line {}: no diagnosis section for specimen",
                spec.line
            ));
            continue;
        };
        let next_anchor = anchors.get(k + 1).copied().unwrap_or(lines.len());
        let anchor_rest = after_anchor(lines[anchor], rules).unwrap_or("");
        let anchor_toks = descriptor_tokens(anchor_rest, rules);
        let mut diag_lines: Vec<&str> = vec![remainder_after_descriptor(anchor_rest, rules)];
        diag_lines.extend(lines[anchor + 1..next_anchor].iter().take(3));
        let Some(diagnosis) = classify_diagnosis_with(&diag_lines, rules) else {
            out.diagnostics.push(format!(
                "line {}: unclassified diagnosis, specimen dropped",
                anchor + 1
            ));
            continue;
        };
        let mut desc = spec.desc.clone();
        if let Ok(from_anchor) = parse_descriptor_tokens(&anchor_toks, rules) {
            if from_anchor.laterality == desc.laterality {
                if desc.location.is_none() {
                    desc.location = from_anchor.location;
                }
                if desc.label.is_none() {
                    desc.label = from_anchor.label;
                }
            }
        }
        out.records.push(NoduleRecord {
            laterality: desc.laterality,
            location: desc.location,
            label: desc.label,
            diagnosis,
            source_span: SourceSpan {
                specimen_line: spec.line,
                diagnosis_line: anchor + 1,
            },
        });
    }
    out
}

/// Anchor-line text after the procedure words, where single-line reports
/// put the diagnosis.
fn remainder_after_descriptor<'a>(rest: &'a str, rules: &PathologyRules) -> &'a str {
    let lower = rest.to_lowercase();
    if lower.len() != rest.len() {
        return rest;
    }
    rules
        .descriptor_stop_words
        .iter()
        .filter_map(|w| lower.find(w.as_str()))
        .min()
        .map_or("", |i| &rest[i..])
}

pub fn parse_pathology(report: &str) -> PathologyParse {
    parse_pathology_with(report, default_rules())
}
