//! Property suites shared by the standalone property tests and the
//! acceptance run. Each returns the number of generated instances checked.

use chrono::{Days, NaiveDate};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use thyrolabel::caliper::{detect_calipers, CaliperConfig};
use thyrolabel::corpus::{generate_case, Distractor, ImageRole, ImageSpec, NoiseProfile, SiteStyle, render_image};
use thyrolabel::metrics::evaluate;
use thyrolabel::ocr::{crop_banner, ocr_text, parse_banner, parse_image_measurements, BannerInfo, ImageText};
use thyrolabel::path_parser::{NoduleRecord, SourceSpan};
use thyrolabel::pipeline::match_banner_to_nodule;
use thyrolabel::study_matcher::{match_study, DatedStudy, MatchWindow};
use thyrolabel::{Diagnosis, GlyphFont, Laterality, Site, StudyKind, View};

use crate::common::fixture::{self, Fate};

pub const MIN_CASES: u32 = 100;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<u32, String> {
    runner(cases)
        .run(&strategy, test)
        .map(|()| cases)
        .map_err(|e| e.to_string())
}

// ---- study matcher

#[derive(Debug, Clone)]
struct Dated {
    id: String,
    kind: StudyKind,
    date: NaiveDate,
}

impl DatedStudy for Dated {
    fn study_id(&self) -> &str {
        &self.id
    }
    fn kind(&self) -> StudyKind {
        self.kind
    }
    fn date(&self) -> NaiveDate {
        self.date
    }
}

fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 7, 1).unwrap()
}

fn shift(d: NaiveDate, days: i64) -> NaiveDate {
    if days >= 0 {
        d + Days::new(days as u64)
    } else {
        d - Days::new(days.unsigned_abs())
    }
}

fn studies_strategy() -> impl Strategy<Value = (Vec<Dated>, Vec<usize>, i64, bool)> {
    (
        prop::collection::vec((any::<bool>(), -400i64..400), 0..8),
        30i64..300,
        any::<bool>(),
    )
        .prop_flat_map(|(raw, window, fna)| {
            let studies: Vec<Dated> = raw
                .iter()
                .enumerate()
                .map(|(i, &(is_fna, off))| Dated {
                    id: format!("st{i}"),
                    kind: if is_fna { StudyKind::Fna } else { StudyKind::Diagnostic },
                    date: shift(base_date(), off),
                })
                .collect();
            let order: Vec<usize> = (0..studies.len()).collect();
            (Just(studies), Just(order).prop_shuffle(), Just(window), Just(fna))
        })
}

/// Permuting the input never changes the match; a match lies in the window,
/// has the requested kind and no eligible study is strictly closer; no
/// match means no eligible study.
pub fn study_matcher(cases: u32) -> Result<u32, String> {
    run(cases, studies_strategy(), |(studies, order, window, fna)| {
        let kind = if fna { StudyKind::Fna } else { StudyKind::Diagnostic };
        let w = MatchWindow::new(window).unwrap();
        let path = base_date();
        let permuted: Vec<Dated> = order.iter().map(|&i| studies[i].clone()).collect();
        let a = match_study(path, &studies, kind, w).map(|s| s.id.clone());
        let b = match_study(path, &permuted, kind, w).map(|s| s.id.clone());
        prop_assert_eq!(&a, &b);
        let gap = |s: &Dated| (s.date - path).num_days().abs();
        let eligible: Vec<&Dated> = studies.iter().filter(|s| s.kind == kind && gap(s) <= window).collect();
        match a {
            None => prop_assert!(eligible.is_empty()),
            Some(id) => {
                let m = studies.iter().find(|s| s.id == id).unwrap();
                prop_assert_eq!(m.kind, kind);
                prop_assert!(gap(m) <= window);
                prop_assert!(eligible.iter().all(|s| gap(s) >= gap(m)));
            }
        }
        Ok(())
    })
}

// ---- caliper detection

fn frame(calipers: Vec<(u32, u32)>, distractors: Vec<Distractor>, seed: u64) -> ImageSpec {
    ImageSpec {
        image_id: "p-01".into(),
        width: 320,
        height: 240,
        calipers,
        banner_text: String::new(),
        measurement_text: None,
        distractors,
        role: ImageRole::Nodule,
        subject: None,
        texture_seed: seed,
    }
}

/// Caliper centers on a coarse grid so marks never overlap.
fn caliper_positions() -> impl Strategy<Value = Vec<(u32, u32)>> {
    prop::collection::btree_set((0u32..9, 0u32..7), 0..5).prop_flat_map(|cells| {
        let cells: Vec<_> = cells.into_iter().collect();
        let n = cells.len();
        prop::collection::vec((0u32..8, 0u32..8), n).prop_map(move |jitter| {
            cells
                .iter()
                .zip(jitter)
                .map(|(&(cx, cy), (jx, jy))| (10 + cx * 30 + jx, 10 + cy * 26 + jy))
                .collect()
        })
    })
}

fn site() -> impl Strategy<Value = Site> {
    prop_oneof![Just(Site::Site1), Just(Site::Site2), Just(Site::Site3)]
}

/// Raising the threshold only ever removes hits.
pub fn caliper_monotonicity(cases: u32) -> Result<u32, String> {
    let font = GlyphFont::default();
    let strategy = (
        caliper_positions(),
        prop::collection::vec(0.3f64..1.0, 0..3),
        any::<u64>(),
        0.3f64..1.0,
        0.3f64..1.0,
        site(),
    );
    run(cases, strategy, |(mut pos, fidelities, seed, t1, t2, site)| {
        let distractors = fidelities
            .iter()
            .zip(pos.split_off(pos.len().saturating_sub(fidelities.len())))
            .map(|(&fidelity, (x, y))| Distractor { x, y, fidelity })
            .collect();
        let raster = render_image(&frame(pos, distractors, seed), &font, SiteStyle::for_site(&site)).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let at = |t| {
            let cfg = CaliperConfig {
                score_threshold: t,
                ..CaliperConfig::default()
            };
            detect_calipers(&raster, &cfg).unwrap()
        };
        let loose = at(lo);
        let strict = at(hi);
        prop_assert!(strict.len() <= loose.len());
        for h in &strict {
            prop_assert!(loose.iter().any(|l| l.center() == h.center()), "{:?} lost at {lo}", h);
        }
        Ok(())
    })
}

/// Every stamped caliper inside the crop is found within one pixel, and
/// nothing else is.
pub fn caliper_stamp_recovery(cases: u32) -> Result<u32, String> {
    let font = GlyphFont::default();
    run(cases, (caliper_positions(), any::<u64>(), site()), |(pos, seed, site)| {
        let cfg = CaliperConfig::default();
        let crop = cfg.crop_width(320) as u32;
        let raster = render_image(&frame(pos.clone(), vec![], seed), &font, SiteStyle::for_site(&site)).unwrap();
        let hits = detect_calipers(&raster, &cfg).unwrap();
        // marks reaching past the crop edge are not fully visible
        let visible: Vec<_> = pos.iter().filter(|&&(x, _)| x + 7 <= crop).collect();
        let clipped = pos.len() - visible.len();
        for &&(x, y) in &visible {
            prop_assert!(
                hits.iter().any(|h| {
                    let (hx, hy) = h.center();
                    (hx as i64 - x as i64).abs() <= 1 && (hy as i64 - y as i64).abs() <= 1
                }),
                "caliper at ({x}, {y}) missed"
            );
        }
        prop_assert!(hits.len() >= visible.len() && hits.len() <= visible.len() + clipped);
        Ok(())
    })
}

// ---- OCR

fn banner_token() -> impl Strategy<Value = String> {
    prop_oneof![
        "[A-Z]{1,6}",
        "#[1-9]",
        "[0-9]{1,2}\\.[0-9]{2}CM",
        Just("TRANS".to_string()),
        Just("SAG".to_string()),
    ]
}

/// Arbitrary token sequences stamped into the band read back unchanged.
pub fn ocr_round_trip(cases: u32) -> Result<u32, String> {
    let font = GlyphFont::default();
    let strategy = (
        prop::collection::vec(banner_token(), 1..6),
        prop::collection::vec(banner_token(), 0..4),
        any::<u64>(),
        site(),
    );
    run(cases, strategy, |(banner, measure, seed, site)| {
        let banner = banner.join(" ");
        let measure = (!measure.is_empty()).then(|| measure.join(" "));
        let spec = ImageSpec {
            width: 800,
            height: 600,
            banner_text: banner.clone(),
            measurement_text: measure.clone(),
            ..frame(vec![], vec![], seed)
        };
        let raster = render_image(&spec, &font, SiteStyle::for_site(&site)).unwrap();
        let text = ocr_text(&crop_banner(&raster, 0).unwrap(), &font);
        let want: Vec<&str> = std::iter::once(banner.as_str()).chain(measure.as_deref()).collect();
        let got: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        prop_assert_eq!(got, want);
        Ok(())
    })
}

/// Every image of a zero-noise corpus reads back to its specified banner
/// and measurement text. Returns the number of images checked.
pub fn ocr_corpus_round_trip(n_cases: usize, seed: u64) -> Result<u32, String> {
    let font = GlyphFont::default();
    let cfg = crate::common::config(n_cases, seed, NoiseProfile::zero());
    let mut checked = 0;
    for i in 0..n_cases {
        let case = generate_case(&cfg, i).map_err(|e| e.to_string())?;
        for (study, frames) in case.spec.studies.iter().zip(&case.images) {
            for (spec, raster) in study.images.iter().zip(frames) {
                let text = ImageText::read(raster, &font);
                let b = text.banner();
                let m = text.measurements();
                let want_b = parse_banner(&spec.banner_text);
                let want_m = parse_image_measurements(spec.measurement_text.as_deref().unwrap_or(""));
                let raw = ocr_text(&crop_banner(raster, 0).map_err(|e| e.to_string())?, &font);
                let lines: Vec<&str> = raw.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
                let want_lines: Vec<&str> = [Some(spec.banner_text.as_str()), spec.measurement_text.as_deref()]
                    .into_iter()
                    .flatten()
                    .filter(|l| !l.is_empty())
                    .collect();
                let fields = |x: &BannerInfo| (x.view, x.laterality, x.location.clone(), x.label.clone());
                if lines != want_lines || fields(&b) != fields(&want_b) || m != want_m {
                    return Err(format!(
                        "{}/{}: read {lines:?}, expected {want_lines:?}",
                        case.spec.case_id, spec.image_id
                    ));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

// ---- banner matching

fn opt_of(values: &'static [&'static str]) -> impl Strategy<Value = Option<String>> {
    prop::option::of(prop::sample::select(values).prop_map(String::from))
}

fn laterality() -> impl Strategy<Value = Laterality> {
    prop::sample::select(Laterality::ALL.to_vec())
}

const LOCATIONS: &[&str] = &["superior", "inferior", "mid"];
const LABELS: &[&str] = &["#1", "#2", "#3"];

fn banner(lat: Option<Laterality>, location: Option<String>, label: Option<String>) -> BannerInfo {
    BannerInfo {
        view: View::Transverse,
        laterality: lat,
        location,
        label,
        raw_text: String::new(),
        config_index: 0,
    }
}

fn record(lat: Laterality, location: Option<String>, label: Option<String>) -> NoduleRecord {
    NoduleRecord {
        laterality: lat,
        location,
        label,
        diagnosis: Diagnosis::Benign,
        source_span: SourceSpan::default(),
    }
}

/// Matching compares only fields present on both sides, so exchanging the
/// roles of banner and nodule never changes the outcome, and the result
/// agrees with a direct field-by-field reading.
pub fn banner_symmetry(cases: u32) -> Result<u32, String> {
    let side = || (laterality(), opt_of(LOCATIONS), opt_of(LABELS));
    run(cases, (side(), side()), |((la, loa, lba), (lb, lob, lbb))| {
        let forward = match_banner_to_nodule(&banner(Some(la), loa.clone(), lba.clone()), &record(lb, lob.clone(), lbb.clone()));
        let backward = match_banner_to_nodule(&banner(Some(lb), lob.clone(), lbb.clone()), &record(la, loa.clone(), lba.clone()));
        prop_assert_eq!(forward, backward);
        let agree = |a: &Option<String>, b: &Option<String>| a.is_none() || b.is_none() || a == b;
        prop_assert_eq!(forward, la == lb && agree(&loa, &lob) && agree(&lba, &lbb));
        let blind = match_banner_to_nodule(&banner(None, loa, lba), &record(lb, lob, lbb));
        prop_assert!(!blind);
        Ok(())
    })
}

// ---- metrics

fn fate() -> impl Strategy<Value = Fate> {
    let point = prop::sample::select(vec![fixture::S1M3, fixture::S1M4, fixture::S2M4, fixture::S2M5]);
    prop_oneof![
        Just(Fate::Miss),
        point.clone().prop_map(Fate::Correct),
        point.clone().prop_map(Fate::WrongImages),
        point.prop_map(Fate::WrongInfo),
    ]
}

/// Site slices sum to the global counts; cumulative point rows never
/// decrease and end at the global totals; the incorrect table accounts for
/// every wrong yield.
pub fn metrics_consistency(cases: u32) -> Result<u32, String> {
    let rows = prop::collection::vec((site(), fate()), 1..40);
    run(cases, rows, |rows| {
        let (manifest, results) = fixture::build(&rows);
        let r = evaluate(&results, &manifest).unwrap();
        let sum = |f: fn(&thyrolabel::metrics::SliceStats) -> usize| r.by_site.values().map(f).sum::<usize>();
        prop_assert_eq!(sum(|s| s.truth), r.n_truth_nodules);
        prop_assert_eq!(sum(|s| s.yielded), r.n_yield);
        prop_assert_eq!(sum(|s| s.correct), r.n_correct);
        for w in r.by_point.windows(2) {
            prop_assert!(w[1].cumulative_yield >= w[0].cumulative_yield);
            prop_assert!(w[1].cumulative_correct >= w[0].cumulative_correct);
        }
        let last = r.by_point.last().unwrap();
        prop_assert_eq!(last.cumulative_yield, r.n_yield);
        prop_assert_eq!(last.cumulative_correct, r.n_correct);
        let t = &r.incorrect;
        prop_assert_eq!(t.total, r.n_yield - r.n_correct);
        prop_assert_eq!(t.site_yields.iter().sum::<usize>(), r.n_yield);
        for stage in [1u8, 2] {
            let modules: usize = t.rows.iter().filter(|x| x.stage == stage && x.module.is_some()).map(|x| x.total).sum();
            let subtotal = t.rows.iter().find(|x| x.stage == stage && x.module.is_none()).unwrap().total;
            prop_assert_eq!(modules, subtotal);
        }
        prop_assert_eq!(r.errors.len(), t.total);
        Ok(())
    })
}
