//! Seeded synthetic corpus: reports, rendered studies and a ground-truth
//! manifest.
//!
//! Every case is generated from its own RNG stream derived from the corpus
//! seed and the case index, so cases can be produced in any order (or in
//! parallel) with byte-identical results.

mod generate;
mod render;
mod reports;
mod write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Diagnosis, Laterality, Site, StudyKind};

pub use generate::{generate_case_spec, generate_manifest, GeneratedCase};
pub use render::{band_top, render_image, stamp_text, SiteStyle};
pub use reports::{write_pathology_report, write_radiology_report};
pub use write::{gen_corpus, generate_case, load_manifest, MANIFEST_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseProfile {
    pub banner_dropout_prob: f64,
    pub distractor_caliper_prob: f64,
    pub site_style_variation: bool,
    pub date_jitter_days: u32,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        NoiseProfile::zero()
    }
}

impl NoiseProfile {
    pub fn zero() -> Self {
        NoiseProfile {
            banner_dropout_prob: 0.0,
            distractor_caliper_prob: 0.0,
            site_style_variation: false,
            date_jitter_days: 0,
        }
    }

    /// Banner dropout and stray caliper marks at 30% each, as seen at
    /// sites with less consistent annotation practice.
    pub fn site2_style() -> Self {
        NoiseProfile {
            banner_dropout_prob: 0.3,
            distractor_caliper_prob: 0.3,
            site_style_variation: false,
            date_jitter_days: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("banner_dropout_prob", self.banner_dropout_prob),
            ("distractor_caliper_prob", self.distractor_caliper_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name} must be in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Relative weights of the three acquisition sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiteMix {
    pub site1: f64,
    pub site2: f64,
    pub site3: f64,
}

impl Default for SiteMix {
    fn default() -> Self {
        SiteMix {
            site1: 70.0,
            site2: 20.0,
            site3: 13.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_cases: usize,
    pub seed: u64,
    pub noise: NoiseProfile,
    pub site_mix: SiteMix,
    pub image_width: usize,
    pub image_height: usize,
    /// Window the in-range studies are kept inside before jitter.
    pub max_gap_days: i64,
    /// Chance that a single-side FNA study also holds a measured image of
    /// the opposite lobe.
    pub fna_extra_caliper_prob: f64,
    /// Chance per lobe that a diagnostic study holds a measured lobe image.
    pub lobe_image_prob: f64,
    /// Chance that the diagnostic study shows nodules that were not biopsied.
    pub extra_nodule_prob: f64,
    /// Chance of an additional diagnostic study outside the window.
    pub decoy_study_prob: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_cases: 200,
            seed: 42,
            noise: NoiseProfile::zero(),
            site_mix: SiteMix::default(),
            image_width: 800,
            image_height: 600,
            max_gap_days: crate::study_matcher::DEFAULT_MAX_GAP_DAYS,
            fna_extra_caliper_prob: 0.25,
            lobe_image_prob: 0.3,
            extra_nodule_prob: 0.3,
            decoy_study_prob: 0.15,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cases == 0 {
            return Err(Error::validation("n_cases must be at least 1"));
        }
        self.noise.validate()?;
        let mix = [self.site_mix.site1, self.site_mix.site2, self.site_mix.site3];
        if mix.iter().any(|w| !(*w >= 0.0)) || mix.iter().sum::<f64>() <= 0.0 {
            return Err(Error::validation("site_mix weights must be non-negative with a positive sum"));
        }
        if self.image_width < 400 || self.image_height < 320 {
            return Err(Error::validation("images must be at least 400x320"));
        }
        if self.max_gap_days < 130 {
            return Err(Error::validation("max_gap_days must be at least 130"));
        }
        for (name, p) in [
            ("fna_extra_caliper_prob", self.fna_extra_caliper_prob),
            ("lobe_image_prob", self.lobe_image_prob),
            ("extra_nodule_prob", self.extra_nodule_prob),
            ("decoy_study_prob", self.decoy_study_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name} must be in [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: GeneratorConfig =
            serde_json::from_str(json).map_err(|e| Error::json("generator config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoduleTruth {
    pub nodule_id: String,
    pub laterality: Laterality,
    pub location: Option<String>,
    pub label: Option<String>,
    pub diagnosis: Diagnosis,
    pub dims_cm: [f64; 3],
    /// (transverse, longitudinal) image ids.
    pub key_images: (String, String),
}

/// A nodule seen on the diagnostic study that was not biopsied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraNodule {
    pub nodule_id: String,
    pub laterality: Laterality,
    pub location: Option<String>,
    pub label: Option<String>,
    pub dims_cm: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anatomy {
    pub right_lobe_cm: [f64; 3],
    pub left_lobe_cm: [f64; 3],
    pub isthmus_cm: f64,
    pub extra_nodules: Vec<ExtraNodule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRole {
    Nodule,
    Lobe,
    Survey,
    Needle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub x: u32,
    pub y: u32,
    /// Target correlation of the degraded mark with the caliper template.
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub calipers: Vec<(u32, u32)>,
    pub banner_text: String,
    pub measurement_text: Option<String>,
    pub distractors: Vec<Distractor>,
    pub role: ImageRole,
    /// Nodule or lobe shown, when any.
    pub subject: Option<String>,
    pub texture_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub study_id: String,
    pub kind: StudyKind,
    pub date: NaiveDate,
    pub images: Vec<ImageSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub age: u32,
    pub sex: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub case_id: String,
    pub site: Site,
    pub pathology_date: NaiveDate,
    pub nodules: Vec<NoduleTruth>,
    pub studies: Vec<StudySpec>,
    pub noise: NoiseProfile,
    pub anatomy: Anatomy,
    pub patient: Patient,
    /// Selects among equivalent report phrasings.
    pub report_variant: u32,
}

impl CaseSpec {
    pub fn study(&self, kind: StudyKind) -> impl Iterator<Item = &StudySpec> {
        self.studies.iter().filter(move |s| s.kind == kind)
    }

    /// The diagnostic study described by the radiology report. Prior
    /// (out-of-window) studies are listed after it.
    pub fn report_study(&self) -> Option<&StudySpec> {
        self.study(StudyKind::Diagnostic).next()
    }

    /// Site-specific report and banner grammar applies.
    pub fn styled(&self) -> bool {
        self.noise.site_style_variation
    }

    pub fn image(&self, image_id: &str) -> Option<(&StudySpec, &ImageSpec)> {
        self.studies
            .iter()
            .flat_map(|s| s.images.iter().map(move |i| (s, i)))
            .find(|(_, i)| i.image_id == image_id)
    }
}

impl crate::study_matcher::DatedStudy for StudySpec {
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub config: GeneratorConfig,
    pub cases: Vec<CaseSpec>,
}

impl CorpusManifest {
    pub fn case(&self, case_id: &str) -> Option<&CaseSpec> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_cases_rejected() {
        let cfg = GeneratorConfig {
            n_cases: 0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn probabilities_checked() {
        let mut cfg = GeneratorConfig::default();
        cfg.noise.banner_dropout_prob = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_round_trip_is_normalizing() {
        let partial = r#"{"n_cases": 5, "noise": {"banner_dropout_prob": 0.3}}"#;
        let cfg = GeneratorConfig::from_json(partial).unwrap();
        let once = serde_json::to_string(&cfg).unwrap();
        let twice = serde_json::to_string(&GeneratorConfig::from_json(&once).unwrap()).unwrap();
        assert_eq!(once, twice);
        assert_eq!(cfg.n_cases, 5);
        assert_eq!(cfg.noise.banner_dropout_prob, 0.3);
        assert_eq!(cfg.noise.distractor_caliper_prob, 0.0);
        assert_eq!(cfg.image_width, 800);
    }
}
