//! Hand-built manifests and pipeline results with prescribed outcomes.

use thyrolabel::corpus::{generate_manifest, CorpusManifest, GeneratorConfig, NoduleTruth};
use thyrolabel::path_parser::{NoduleRecord, SourceSpan};
use thyrolabel::pipeline::{CaseResult, FinalizationPoint, NoYieldReason, NoduleOutcome, Status};
use thyrolabel::study::ImageRef;
use thyrolabel::{Diagnosis, Laterality, Site};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fate {
    Miss,
    Correct(FinalizationPoint),
    WrongImages(FinalizationPoint),
    WrongInfo(FinalizationPoint),
}

pub const S1M3: FinalizationPoint = FinalizationPoint { stage: 1, module: 3 };
pub const S1M4: FinalizationPoint = FinalizationPoint { stage: 1, module: 4 };
pub const S2M4: FinalizationPoint = FinalizationPoint { stage: 2, module: 4 };
pub const S2M5: FinalizationPoint = FinalizationPoint { stage: 2, module: 5 };

fn image(id: &str) -> ImageRef {
    ImageRef {
        study_id: "s".into(),
        image_id: id.into(),
    }
}

/// One single-nodule case per entry.
pub fn build(rows: &[(Site, Fate)]) -> (CorpusManifest, Vec<CaseResult>) {
    let mut manifest = generate_manifest(&GeneratorConfig {
        n_cases: 1,
        ..Default::default()
    })
    .expect("valid config");
    let template = manifest.cases.pop().expect("one case");
    let mut results = Vec::new();
    for (k, (site, fate)) in rows.iter().enumerate() {
        let case_id = format!("fx-{k:05}");
        let truth = NoduleTruth {
            nodule_id: "n1".into(),
            laterality: Laterality::Right,
            location: None,
            label: Some("#1".into()),
            diagnosis: Diagnosis::Benign,
            dims_cm: [1.0, 1.0, 1.0],
            key_images: ("t".into(), "l".into()),
        };
        let record = NoduleRecord {
            laterality: truth.laterality,
            location: truth.location.clone(),
            label: truth.label.clone(),
            diagnosis: truth.diagnosis,
            source_span: SourceSpan::default(),
        };
        let yielded = |at, pair: (&str, &str), label| NoduleOutcome {
            nodule: record.clone(),
            status: Status::Yield,
            images: Some((image(pair.0), image(pair.1))),
            label,
            finalized_at: Some(at),
            no_yield_reason: None,
        };
        let outcome = match *fate {
            Fate::Miss => NoduleOutcome {
                nodule: record.clone(),
                status: Status::NoYield,
                images: None,
                label: record.diagnosis,
                finalized_at: None,
                no_yield_reason: Some(NoYieldReason::OcrMismatch),
            },
            Fate::Correct(at) => yielded(at, ("t", "l"), Diagnosis::Benign),
            Fate::WrongImages(at) => yielded(at, ("t", "x"), Diagnosis::Benign),
            Fate::WrongInfo(at) => yielded(at, ("t", "l"), Diagnosis::Malignant),
        };
        let mut case = template.clone();
        case.case_id = case_id.clone();
        case.site = site.clone();
        case.nodules = vec![truth];
        manifest.cases.push(case);
        results.push(CaseResult {
            case_id,
            per_nodule: vec![outcome],
            diagnostics: Vec::new(),
        });
    }
    manifest.config.n_cases = rows.len();
    (manifest, results)
}

/// `n` copies of each `(site, fate)` entry.
pub fn expand(spec: &[(Site, Fate, usize)]) -> Vec<(Site, Fate)> {
    spec.iter()
        .flat_map(|(s, f, n)| std::iter::repeat((s.clone(), *f)).take(*n))
        .collect()
}
