//! Worked examples for each module, checked end to end through the public
//! API.

mod common;

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::fixture::{self, Fate, S1M3, S1M4};
use thyrolabel::caliper::{caliper_template, detect_calipers, score_at, select_candidate_images, CaliperConfig};
use thyrolabel::corpus::{
    generate_case, generate_manifest, render_image, write_pathology_report, write_radiology_report, Distractor,
    ImageRole, ImageSpec, NoiseProfile, SiteStyle,
};
use thyrolabel::metrics::{breakdown_by_point, categorize, evaluate, incorrect_by_site_stage, Category};
use thyrolabel::ocr::{crop_banner, ocr_text, read_banner, CROP_CONFIGS};
use thyrolabel::path_parser::parse_pathology;
use thyrolabel::pipeline::{run_case, CaseInputs, FinalizationPoint, NoYieldReason, PipelineConfig};
use thyrolabel::rad_parser::count_nodules_on_side;
use thyrolabel::study::{Study, StudyImage};
use thyrolabel::{Diagnosis, GlyphFont, Laterality, Raster, Site, StudyKind, View};

fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

struct Frame<'a> {
    id: &'a str,
    calipers: &'a [(u32, u32)],
    banner: &'a str,
    measure: Option<&'a str>,
}

fn frame<'a>(id: &'a str, calipers: &'a [(u32, u32)], banner: &'a str, measure: Option<&'a str>) -> Frame<'a> {
    Frame {
        id,
        calipers,
        banner,
        measure,
    }
}

fn spec(f: &Frame) -> ImageSpec {
    ImageSpec {
        image_id: f.id.into(),
        width: 800,
        height: 600,
        calipers: f.calipers.to_vec(),
        banner_text: f.banner.into(),
        measurement_text: f.measure.map(String::from),
        distractors: vec![],
        role: ImageRole::Nodule,
        subject: None,
        texture_seed: f.id.bytes().map(u64::from).sum(),
    }
}

fn render(f: &Frame) -> Raster {
    render_image(&spec(f), &GlyphFont::default(), SiteStyle::default()).unwrap()
}

fn study(id: &str, kind: StudyKind, on: &str, frames: &[Frame]) -> Study {
    Study {
        study_id: id.into(),
        kind,
        date: date(on),
        site: Site::Site1,
        images: frames
            .iter()
            .map(|f| StudyImage {
                image_id: f.id.into(),
                raster: Ok(render(f)),
            })
            .collect(),
    }
}

const PAIR: &[(u32, u32)] = &[(200, 200), (320, 200)];
const NONE: &[(u32, u32)] = &[];

fn one_nodule_report(side: &str, label: &str) -> String {
    format!(
        "Fine Needle Aspirate Case: [redacted]\nAuthorizing Provider: [redacted] Collected: 2020-06-01\n\
         Specimen: Thyroid, {side} {label}\nThyroid, {side} {label}, ultrasound guided fine needle aspiration biopsy.\n\
         Benign follicular nodule (Bethesda II).\n"
    )
}

const TWO_NODULE_REPORT: &str = "Fine Needle Aspirate Case: [redacted]
Authorizing Provider: [redacted] Collected: 2020-06-01
Specimens: A) - Thyroid, right #1
 B) - Thyroid, left #2
A) Thyroid, right #1, ultrasound-guided fine needle aspiration biopsy: Benign follicular nodule (Bethesda II).
B) Thyroid, left #2, ultrasound-guided fine needle aspiration biopsy: Papillary thyroid carcinoma.
";

fn radiology(right_nodules: &[&str]) -> String {
    let mut s = String::from("Findings:\n\nRIGHT LOBE:\n\nThe right lobe measures 4.2 x 2.1 x 2.1 cm.\n\n");
    for (k, dims) in right_nodules.iter().enumerate() {
        s.push_str(&format!("* Right nodule #{}: Solid nodule. The nodule measures {dims} cm.\n\n", k + 1));
    }
    s.push_str("LEFT LOBE:\n\nThe left lobe measures 4.0 x 1.5 x 1.5 cm.\n\nISTHMUS:\n\nThe isthmus measures 0.4 cm.\n\nImpression:\n\n1. As above.\n");
    s
}

fn inputs(pathology: &str, radiology: Option<String>, studies: Vec<Study>) -> CaseInputs {
    CaseInputs {
        case_id: "ex-1".into(),
        pathology: pathology.into(),
        radiology,
        studies,
    }
}

fn points(case: &CaseInputs) -> Vec<(Option<FinalizationPoint>, Option<NoYieldReason>, Vec<String>)> {
    run_case(case, &PipelineConfig::default())
        .unwrap()
        .per_nodule
        .into_iter()
        .map(|o| {
            let ids = o
                .images
                .map(|(a, b)| vec![a.image_id, b.image_id])
                .unwrap_or_default();
            (o.finalized_at, o.no_yield_reason, ids)
        })
        .collect()
}

fn at(stage: u8, module: u8) -> Option<FinalizationPoint> {
    Some(FinalizationPoint { stage, module })
}

// ---- pipeline routing

#[test]
fn two_caliper_images_single_nodule_yield_at_module_3() {
    let fna = study(
        "fna",
        StudyKind::Fna,
        "2020-05-30",
        &[
            frame("f1", PAIR, "", Some("D1 1.60CM")),
            frame("f2", NONE, "TRANS RT FNA", None),
            frame("f3", PAIR, "", Some("D1 1.10CM")),
        ],
    );
    let got = points(&inputs(&one_nodule_report("right", "#1"), None, vec![fna]));
    assert_eq!(got, vec![(at(1, 3), None, vec!["f1".into(), "f3".into()])]);
}

#[test]
fn banners_resolve_three_fna_candidates() {
    let fna = study(
        "fna",
        StudyKind::Fna,
        "2020-05-30",
        &[
            frame("f1", PAIR, "TRANS RT #1", None),
            frame("f2", PAIR, "SAG LT LOBE", None),
            frame("f3", PAIR, "SAG RT #1", None),
        ],
    );
    let got = points(&inputs(&one_nodule_report("right", "#1"), None, vec![fna]));
    assert_eq!(got, vec![(at(1, 4), None, vec!["f1".into(), "f3".into()])]);
}

#[test]
fn two_nodules_four_candidates_both_yield_at_stage_1() {
    let fna = study(
        "fna",
        StudyKind::Fna,
        "2020-05-30",
        &[
            frame("f1", PAIR, "TRANS RT #1", None),
            frame("f2", PAIR, "SAG RT #1", None),
            frame("f3", PAIR, "TRANS LT #2", None),
            frame("f4", PAIR, "SAG LT #2", None),
        ],
    );
    let got = points(&inputs(TWO_NODULE_REPORT, None, vec![fna]));
    assert_eq!(
        got,
        vec![
            (at(1, 4), None, vec!["f1".into(), "f2".into()]),
            (at(1, 4), None, vec!["f3".into(), "f4".into()]),
        ]
    );
}

#[test]
fn single_candidate_falls_through_to_diagnostic_study() {
    let fna = study("fna", StudyKind::Fna, "2020-05-30", &[frame("f1", PAIR, "TRANS RT #1", None)]);
    let diag = study(
        "dx",
        StudyKind::Diagnostic,
        "2020-03-01",
        &[
            frame("d1", PAIR, "TRANS RT #1", None),
            frame("d2", NONE, "TRANS LT", None),
            frame("d3", PAIR, "SAG RT #1", None),
        ],
    );
    let got = points(&inputs(&one_nodule_report("right", "#1"), None, vec![fna, diag]));
    assert_eq!(got, vec![(at(2, 4), None, vec!["d1".into(), "d3".into()])]);
}

fn three_right_frames() -> Vec<Frame<'static>> {
    vec![
        frame("d1", PAIR, "TRANS RT", Some("D1 1.60CM D2 0.70CM")),
        frame("d2", PAIR, "SAG RT", Some("D1 1.10CM")),
        frame("d3", PAIR, "TRANS RT", Some("D1 2.40CM")),
    ]
}

#[test]
fn measurements_resolve_three_banner_matches() {
    let diag = study("dx", StudyKind::Diagnostic, "2020-03-01", &three_right_frames());
    let rad = radiology(&["1.6 x 0.7 x 1.1"]);
    let got = points(&inputs(&one_nodule_report("right", ""), Some(rad), vec![diag]));
    assert_eq!(got, vec![(at(2, 5), None, vec!["d1".into(), "d2".into()])]);
}

#[test]
fn two_report_nodules_on_side_block_module_5() {
    let diag = study("dx", StudyKind::Diagnostic, "2020-03-01", &three_right_frames());
    let rad = radiology(&["1.6 x 0.7 x 1.1", "0.8 x 0.5 x 0.6"]);
    let got = points(&inputs(&one_nodule_report("right", ""), Some(rad), vec![diag.clone()]));
    assert_eq!(got, vec![(None, Some(NoYieldReason::MultipleSideNodules), vec![])]);

    let got = points(&inputs(&one_nodule_report("right", ""), None, vec![diag]));
    assert_eq!(got, vec![(None, Some(NoYieldReason::MeasurementAmbiguous), vec![])]);
}

#[test]
fn distant_studies_give_no_study_in_window() {
    let old = study("fna", StudyKind::Fna, "2019-11-01", &[frame("f1", PAIR, "", None)]);
    let got = points(&inputs(&one_nodule_report("right", "#1"), None, vec![old]));
    assert_eq!(got, vec![(None, Some(NoYieldReason::NoStudyInWindow), vec![])]);
}

#[test]
fn zero_noise_generated_cases_follow_truth() {
    let cfg = common::config(40, 3, NoiseProfile::zero());
    let mut seen = std::collections::BTreeSet::new();
    for i in 0..40 {
        let case = generate_case(&cfg, i).unwrap();
        let spec = case.spec.clone();
        let r = run_case(&CaseInputs::from_generated(case), &PipelineConfig::default()).unwrap();
        assert_eq!(r.per_nodule.len(), spec.nodules.len());
        for (o, n) in r.per_nodule.iter().zip(&spec.nodules) {
            let (a, b) = o.images.as_ref().expect("yield");
            assert_eq!((a.image_id.clone(), b.image_id.clone()), n.key_images, "{}", spec.case_id);
            assert_eq!(o.label, n.diagnosis);
            seen.insert(o.finalized_at.unwrap());
        }
    }
    assert!(seen.contains(&FinalizationPoint { stage: 1, module: 3 }));
}

// ---- caliper

#[test]
fn candidate_selection_keeps_two_and_four() {
    let four: &[(u32, u32)] = &[(100, 100), (200, 100), (150, 60), (150, 200)];
    let three: &[(u32, u32)] = &[(100, 100), (200, 100), (300, 100)];
    let s = study(
        "s",
        StudyKind::Diagnostic,
        "2020-01-01",
        &[
            frame("a", PAIR, "", None),
            frame("b", three, "", None),
            frame("c", four, "", None),
            frame("d", NONE, "", None),
        ],
    );
    let sel = select_candidate_images(&s, &CaliperConfig::default()).unwrap();
    let got: Vec<(String, usize)> = sel
        .candidates
        .iter()
        .map(|c| (c.image.image_id.clone(), c.caliper_count))
        .collect();
    assert_eq!(got, vec![("a".into(), 2), ("c".into(), 4)]);

    let empty = study("e", StudyKind::Diagnostic, "2020-01-01", &[frame("a", NONE, "", None), frame("b", NONE, "", None)]);
    assert!(select_candidate_images(&empty, &CaliperConfig::default()).unwrap().candidates.is_empty());
}

#[test]
fn undecodable_frame_is_skipped() {
    let mut s = study("s", StudyKind::Fna, "2020-01-01", &[frame("a", PAIR, "", None)]);
    s.images.push(StudyImage {
        image_id: "bad".into(),
        raster: Err("truncated".into()),
    });
    let sel = select_candidate_images(&s, &CaliperConfig::default()).unwrap();
    assert_eq!(sel.candidates.len(), 1);
    assert!(sel.diagnostics.iter().any(|d| d.contains("bad")));
}

#[test]
fn generated_fna_study_selects_both_key_images() {
    let cfg = config_with_fna();
    let case = generate_case(&cfg, 0).unwrap();
    let inputs = CaseInputs::from_generated(case.clone());
    let fna = inputs.studies.iter().find(|s| s.kind == StudyKind::Fna).expect("fna study");
    let sel = select_candidate_images(fna, &CaliperConfig::default()).unwrap();
    let ids: Vec<&str> = sel.candidates.iter().map(|c| c.image.image_id.as_str()).collect();
    let (t, l) = &case.spec.nodules[0].key_images;
    assert!(ids.contains(&t.as_str()) && ids.contains(&l.as_str()));
}

/// First zero-noise configuration whose case 0 has an FNA study.
fn config_with_fna() -> thyrolabel::corpus::GeneratorConfig {
    (0..100)
        .map(|seed| common::config(1, seed, NoiseProfile::zero()))
        .find(|cfg| {
            generate_manifest(cfg).unwrap().cases[0]
                .studies
                .iter()
                .any(|s| s.kind == StudyKind::Fna)
        })
        .expect("some seed has an FNA study")
}

#[test]
fn hits_respect_separation() {
    let close: &[(u32, u32)] = &[(100, 100), (108, 100), (300, 100)];
    let r = render(&frame("a", close, "", None));
    let cfg = CaliperConfig::default();
    let hits = detect_calipers(&r, &cfg).unwrap();
    for (i, a) in hits.iter().enumerate() {
        for b in &hits[i + 1..] {
            let (ax, ay) = a.center();
            let (bx, by) = b.center();
            let d = ((ax as f64 - bx as f64).powi(2) + (ay as f64 - by as f64).powi(2)).sqrt();
            assert!(d >= cfg.separation(), "{:?} {:?}", a, b);
        }
    }
    assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
}

// ---- corpus rendering and reports

#[test]
fn exact_stamps_score_one_and_distractor_scores_its_fidelity() {
    let mut s = spec(&frame("a", PAIR, "", None));
    s.distractors = vec![Distractor {
        x: 500,
        y: 300,
        fidelity: 0.6,
    }];
    let r = render_image(&s, &GlyphFont::default(), SiteStyle::default()).unwrap();
    let t = caliper_template();
    let hits = detect_calipers(&r, &CaliperConfig { score_threshold: 0.999, ..Default::default() }).unwrap();
    assert_eq!(hits.len(), 2);
    let d = score_at(&r, &t, 494, 294).unwrap();
    assert!((d - 0.6).abs() < 0.03, "{d}");
}

#[test]
fn seeds_change_banners() {
    let texts = |seed| {
        generate_manifest(&common::config(20, seed, NoiseProfile::zero()))
            .unwrap()
            .cases
            .iter()
            .flat_map(|c| c.studies.iter().flat_map(|s| s.images.iter().map(|i| i.banner_text.clone())))
            .collect::<Vec<_>>()
    };
    assert_ne!(texts(1), texts(2));
}

#[test]
fn single_case_key_images_have_two_calipers() {
    let m = generate_manifest(&common::config(1, 0, NoiseProfile::zero())).unwrap();
    let case = &m.cases[0];
    for n in &case.nodules {
        for id in [&n.key_images.0, &n.key_images.1] {
            let img = case.image(id).expect("key image exists");
            assert_eq!(img.1.calipers.len(), 2);
        }
    }
}

#[test]
fn pathology_writer_templates() {
    let m = generate_manifest(&common::config(300, 9, NoiseProfile::zero())).unwrap();
    let single = m
        .cases
        .iter()
        .find(|c| c.nodules.len() == 1 && c.nodules[0].location.is_some() && c.nodules[0].label.is_some())
        .unwrap();
    let mut case = single.clone();
    case.nodules[0].laterality = Laterality::Right;
    case.nodules[0].location = Some("inferior".into());
    case.nodules[0].label = Some("#1".into());
    case.nodules[0].diagnosis = Diagnosis::Malignant;
    case.report_variant = 0;
    let text = write_pathology_report(&case);
    assert!(text.contains("Thyroid, right inferior #1"), "{text}");
    assert!(text.contains("Papillary thyroid carcinoma."));

    let multi = m.cases.iter().find(|c| c.nodules.len() == 2).unwrap();
    let mut case = multi.clone();
    for (n, lat) in case.nodules.iter_mut().zip([Laterality::Isthmus, Laterality::Right]) {
        n.laterality = lat;
        n.location = None;
        n.label = None;
        n.diagnosis = Diagnosis::Benign;
    }
    let text = write_pathology_report(&case);
    assert!(text.contains("A) - Thyroid, isthmus\n"), "{text}");
    assert!(text.contains("B) - Thyroid, right\n"), "{text}");
    assert_eq!(parse_pathology(&text).records.len(), 2);
    assert!(text.matches("consistent with a benign").count() + text.matches("Benign").count() >= 2);
}

#[test]
fn radiology_writer_lines() {
    let m = generate_manifest(&common::config(300, 9, NoiseProfile::zero())).unwrap();
    let base = m
        .cases
        .iter()
        .find(|c| c.report_study().is_some() && c.nodules.len() == 1 && c.anatomy.extra_nodules.is_empty())
        .unwrap();
    let mut case = base.clone();
    case.nodules[0].laterality = Laterality::Right;
    case.nodules[0].dims_cm = [1.6, 0.7, 1.1];
    case.report_variant = 0;
    let text = write_radiology_report(&case).unwrap();
    assert!(text.contains("measures 1.6 x 0.7 x 1.1 cm"), "{text}");
    assert_eq!(count_nodules_on_side(&text, Laterality::Left), 0);
    assert!(text.contains("LEFT LOBE:"));
    assert!(text.contains("The left lobe measures"));

    let mut two = case.clone();
    let mut extra = two.nodules[0].clone();
    extra.nodule_id = "n2".into();
    two.anatomy.extra_nodules.push(thyrolabel::corpus::ExtraNodule {
        nodule_id: extra.nodule_id,
        laterality: Laterality::Right,
        location: None,
        label: None,
        dims_cm: [0.8, 0.5, 0.6],
    });
    let text = write_radiology_report(&two).unwrap();
    assert_eq!(count_nodules_on_side(&text, Laterality::Right), 2);
}

// ---- OCR

#[test]
fn crop_dimensions_follow_ratio_table() {
    let r = Raster::new(800, 600, 0);
    let heights: Vec<usize> = (0..5).map(|i| crop_banner(&r, i).unwrap().height()).collect();
    assert_eq!(heights, vec![90, 108, 120, 72, 150]);
    assert_eq!(CROP_CONFIGS.len(), 5);
    assert!(crop_banner(&r, 5).is_err());
    assert!(crop_banner(&Raster::new(800, 1, 0), 4).is_err());
}

#[test]
fn clean_banner_reads_fully_at_first_config() {
    let r = render(&frame("a", NONE, "TRANS RT MID #1", None));
    let b = read_banner(&r, &GlyphFont::default());
    assert_eq!(b.config_index, 0);
    assert_eq!(b.populated_fields(), 4);
    assert_eq!(b.view, View::Transverse);

    let blank = read_banner(&render(&frame("b", NONE, "", None)), &GlyphFont::default());
    assert_eq!(blank.populated_fields(), 0);
}

#[test]
fn straddling_banner_prefers_fullest_parse() {
    // text placed so the shortest crop cuts through it
    let font = GlyphFont::default();
    let mut r = render(&frame("a", NONE, "", None));
    let y = 600 - 72 - 8;
    thyrolabel::corpus::stamp_text(&mut r, &font, 16, y, "SAG LT INF #2").unwrap();
    let parses: Vec<usize> = (0..5)
        .map(|i| thyrolabel::ocr::parse_banner(&ocr_text(&crop_banner(&r, i).unwrap(), &font)).populated_fields())
        .collect();
    let best = read_banner(&r, &font);
    assert_eq!(best.populated_fields(), *parses.iter().max().unwrap());
    assert!(best.populated_fields() > *parses.iter().min().unwrap(), "{parses:?}");
}

#[test]
fn damaged_text_mostly_survives() {
    let font = GlyphFont::default();
    let text = "TRANS RT MID #1";
    let clean = render(&frame("a", NONE, text, None));
    let band0 = crop_banner(&clean, 0).unwrap();
    let ink: Vec<usize> = (0..band0.pixels().len()).filter(|&i| band0.pixels()[i] >= 128).collect();
    let (mut right, mut total) = (0usize, 0usize);
    for seed in 0..50u64 {
        let mut band = band0.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = ink.len() / 5;
        for k in sample(&mut rng, ink.len(), n) {
            band.pixels_mut()[ink[k]] = 0;
        }
        let got = ocr_text(&band, &font);
        let got: Vec<char> = got.lines().next().unwrap_or("").chars().collect();
        right += text.chars().zip(got.iter()).filter(|(a, b)| a == *b).count();
        total += text.chars().count();
    }
    let rate = right as f64 / total as f64;
    assert!(rate >= 0.8, "{rate}");
}

// ---- metrics

#[test]
fn categories() {
    let (manifest, results) = fixture::build(&[
        (Site::Site1, Fate::Correct(S1M3)),
        (Site::Site1, Fate::WrongInfo(S1M3)),
        (Site::Site1, Fate::WrongImages(S1M3)),
    ]);
    let got: Vec<Option<Category>> = results
        .iter()
        .zip(&manifest.cases)
        .map(|(r, c)| categorize(&r.per_nodule[0], &c.nodules[0]))
        .collect();
    assert_eq!(
        got,
        vec![Some(Category::C1), Some(Category::C2WrongNoduleInfo), Some(Category::C2WrongImages)]
    );

    let mut wrong_side = results[0].per_nodule[0].clone();
    wrong_side.nodule.laterality = Laterality::Left;
    assert_eq!(categorize(&wrong_side, &manifest.cases[0].nodules[0]), Some(Category::C2WrongNoduleInfo));
}

#[test]
fn empty_and_flat_breakdowns() {
    let (manifest, results) = fixture::build(&[(Site::Site1, Fate::Miss), (Site::Site2, Fate::Miss)]);
    let r = evaluate(&results, &manifest).unwrap();
    assert_eq!(r.yield_pct(), 0);
    assert_eq!(r.accuracy, None);
    let rows = breakdown_by_point(&[], &manifest).unwrap();
    assert!(rows.iter().all(|p| p.cumulative_yield == 0 && p.cumulative_correct == 0));

    let (manifest, results) = fixture::build(&[(Site::Site1, Fate::Correct(S1M3)), (Site::Site2, Fate::Correct(S1M3))]);
    let rows = breakdown_by_point(&results, &manifest).unwrap();
    assert!(rows.iter().all(|p| p.cumulative_yield == 2 && p.cumulative_correct == 2));
    let t = incorrect_by_site_stage(&results, &manifest).unwrap();
    assert_eq!(t.total, 0);
    assert!(t.rows.iter().all(|r| r.total == 0));
}

#[test]
fn single_error_cell() {
    let (manifest, results) = fixture::build(&[(Site::Site1, Fate::WrongImages(S1M4))]);
    let t = incorrect_by_site_stage(&results, &manifest).unwrap();
    let nonzero: Vec<_> = t
        .rows
        .iter()
        .filter(|r| r.total > 0)
        .map(|r| (r.stage, r.module, r.counts.clone()))
        .collect();
    assert_eq!(nonzero, vec![(1, Some(4), vec![1, 0, 0]), (1, None, vec![1, 0, 0])]);
}

#[test]
fn unknown_case_is_rejected() {
    let (manifest, mut results) = fixture::build(&[(Site::Site1, Fate::Miss)]);
    results[0].case_id = "nope".into();
    assert!(evaluate(&results, &manifest).is_err());
}

#[test]
fn extra_sites_aggregate() {
    let other = Site::Other("Site4".into());
    let (manifest, results) = fixture::build(&[(other.clone(), Fate::Correct(S1M3)), (Site::Site1, Fate::Miss)]);
    let r = evaluate(&results, &manifest).unwrap();
    assert_eq!(r.by_site[&other].yielded, 1);
    assert_eq!(r.by_site.values().map(|s| s.truth).sum::<usize>(), 2);
}

#[test]
fn study_tie_prefers_preceding_date() {
    let s = |id: &str, on: &str| study(id, StudyKind::Fna, on, &[]);
    let studies = [s("after", "2020-06-08"), s("before", "2020-05-25")];
    let got = thyrolabel::study_matcher::match_study(
        date("2020-06-01"),
        &studies,
        StudyKind::Fna,
        Default::default(),
    );
    assert_eq!(got.unwrap().study_id, "before");
}
