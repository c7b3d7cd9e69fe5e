//! Case specifications: nodules, studies and per-image layout.

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Anatomy, CaseSpec, CorpusManifest, Distractor, ExtraNodule, GeneratorConfig, ImageRole, ImageSpec,
    NoduleTruth, Patient, StudySpec,
};
use crate::caliper::DEFAULT_CROP_RATIO;
use crate::error::Result;
use crate::raster::Raster;
use crate::types::{Diagnosis, Laterality, Site, StudyKind, View};

/// Locations used in reports and banners (canonical spelling, banner
/// abbreviation).
const LOCATIONS: [(&str, &str); 9] = [
    ("superior", "SUP"),
    ("inferior", "INF"),
    ("mid", "MID"),
    ("lateral", "LAT"),
    ("medial", "MED"),
    ("anterior", "ANT"),
    ("posterior", "POST"),
    ("upper", "UPPER"),
    ("lower", "LOWER"),
];

/// Minimum distance between any two marks stamped on one frame.
const MARK_SPACING: f64 = 30.0;
const PIXELS_PER_CM: f64 = 60.0;
const EDGE_MARGIN: usize = 30;

/// A case with its reports and every rendered frame.
#[derive(Debug, Clone)]
pub struct GeneratedCase {
    pub spec: CaseSpec,
    pub pathology: String,
    pub radiology: Option<String>,
    /// Frames per study, in study order then image order.
    pub images: Vec<Vec<Raster>>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn case_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index as u64 + 1)))
}

pub(crate) fn case_id(index: usize) -> String {
    format!("case-{:05}", index + 1)
}

pub(crate) fn location_abbrev(location: &str) -> &'static str {
    LOCATIONS
        .iter()
        .find(|(name, _)| *name == location)
        .map_or("", |(_, abbr)| abbr)
}

fn fna_availability(site: &Site) -> f64 {
    match site {
        Site::Site1 => 0.8,
        Site::Site2 => 0.15,
        _ => 0.3,
    }
}

fn tenths(rng: &mut ChaCha8Rng, lo: u32, hi: u32) -> f64 {
    f64::from(rng.gen_range(lo..=hi)) / 10.0
}

fn dims(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [tenths(rng, 4, 39), tenths(rng, 4, 39), tenths(rng, 4, 39)]
}

/// An on-screen reading of `cm`, off by at most 0.04 cm.
fn reading(rng: &mut ChaCha8Rng, cm: f64) -> f64 {
    let hundredths = ((cm * 100.0).round() as i64 + rng.gen_range(-4..=4)).max(1);
    hundredths as f64 / 100.0
}

fn measurement_text(values: &[f64]) -> Option<String> {
    if values.is_empty() {
        return None;
    }
    Some(
        values
            .iter()
            .enumerate()
            .map(|(i, v)| format!("D{} {:.2}CM", i + 1, v))
            .collect::<Vec<_>>()
            .join(" "),
    )
}

struct NoduleDraft {
    id: String,
    laterality: Laterality,
    location: Option<String>,
    label: Option<String>,
    diagnosis: Option<Diagnosis>,
    dims: [f64; 3],
}

/// What a frame shows, before ids and layout are fixed.
struct FrameDraft {
    role: ImageRole,
    subject: Option<String>,
    view: View,
    laterality: Laterality,
    location: Option<String>,
    label: Option<String>,
    /// Caliper pair lengths in cm; horizontal pair first.
    pairs: Vec<f64>,
    readings: Vec<f64>,
    /// Extra banner token, e.g. `LOBE`.
    tag: Option<&'static str>,
}

impl FrameDraft {
    fn plain(role: ImageRole, view: View, laterality: Laterality, tag: Option<&'static str>) -> Self {
        FrameDraft {
            role,
            subject: None,
            view,
            laterality,
            location: None,
            label: None,
            pairs: Vec::new(),
            readings: Vec::new(),
            tag,
        }
    }
}

struct Layout<'a> {
    cfg: &'a GeneratorConfig,
    site: &'a Site,
    styled: bool,
}

impl Layout<'_> {
    fn region(&self) -> (usize, usize, usize, usize) {
        let crop_w = (self.cfg.image_width as f64 * DEFAULT_CROP_RATIO + 1e-9).floor() as usize;
        let y_hi = (self.cfg.image_height as f64 * 0.7) as usize;
        (EDGE_MARGIN, crop_w - EDGE_MARGIN, EDGE_MARGIN, y_hi)
    }

    fn banner(&self, rng: &mut ChaCha8Rng, f: &FrameDraft) -> String {
        let mut dropout = self.cfg.noise.banner_dropout_prob;
        if self.styled && *self.site == Site::Site2 {
            dropout = 1.0 - (1.0 - dropout) * 0.85;
        }
        if dropout > 0.0 && rng.gen_bool(dropout) {
            return String::new();
        }
        let loc = f.location.as_deref().map(location_abbrev);
        let mut parts: Vec<String> = Vec::new();
        match (self.styled, self.site) {
            (true, Site::Site2) => {
                parts.push(
                    match f.laterality {
                        Laterality::Right => "RIGHT",
                        Laterality::Left => "LEFT",
                        Laterality::Isthmus => "ISTH",
                    }
                    .into(),
                );
                if let Some(label) = &f.label {
                    if rng.gen_bool(0.5) {
                        parts.push(label.clone());
                    }
                }
                if let Some(loc) = loc {
                    if rng.gen_bool(0.5) {
                        parts.push(loc.into());
                    }
                }
                parts.extend(f.tag.map(String::from));
                parts.push(
                    match f.view {
                        View::Transverse => "TRV",
                        _ => "LONG",
                    }
                    .into(),
                );
            }
            _ => {
                let long_form = self.styled && *self.site == Site::Site3;
                parts.push(
                    match (f.view, long_form) {
                        (View::Transverse, false) => "TRANS",
                        (View::Transverse, true) => "TRANSVERSE",
                        (_, false) => "SAG",
                        (_, true) => "SAGITTAL",
                    }
                    .into(),
                );
                parts.push(
                    match f.laterality {
                        Laterality::Right => "RT",
                        Laterality::Left => "LT",
                        Laterality::Isthmus => "ISTHMUS",
                    }
                    .into(),
                );
                parts.extend(loc.map(String::from));
                parts.extend(f.label.clone());
                parts.extend(f.tag.map(String::from));
            }
        }
        parts.join(" ")
    }

    fn far_enough(points: &[(u32, u32)], x: f64, y: f64) -> bool {
        points.iter().all(|&(px, py)| {
            let (dx, dy) = (f64::from(px) - x, f64::from(py) - y);
            (dx * dx + dy * dy).sqrt() >= MARK_SPACING
        })
    }

    fn place_pair(&self, rng: &mut ChaCha8Rng, points: &mut Vec<(u32, u32)>, cm: f64, horizontal: bool) {
        let (x_lo, x_hi, y_lo, y_hi) = self.region();
        let span = if horizontal { x_hi - x_lo } else { y_hi - y_lo };
        let mut len = ((cm * PIXELS_PER_CM).round() as usize).clamp(40, 240).min(span - 2);
        loop {
            for _ in 0..400 {
                let (ax, ay, bx, by) = if horizontal {
                    let x = rng.gen_range(x_lo..=x_hi - len);
                    let y = rng.gen_range(y_lo..=y_hi);
                    (x, y, x + len, y)
                } else {
                    let x = rng.gen_range(x_lo..=x_hi);
                    let y = rng.gen_range(y_lo..=y_hi - len);
                    (x, y, x, y + len)
                };
                if Self::far_enough(points, ax as f64, ay as f64)
                    && Self::far_enough(points, bx as f64, by as f64)
                {
                    points.push((ax as u32, ay as u32));
                    points.push((bx as u32, by as u32));
                    return;
                }
            }
            len = (len * 4 / 5).max(32);
        }
    }

    fn distractors(&self, rng: &mut ChaCha8Rng, calipers: &[(u32, u32)]) -> Vec<Distractor> {
        let p = self.cfg.noise.distractor_caliper_prob;
        if p <= 0.0 || !rng.gen_bool(p) {
            return Vec::new();
        }
        let count = if rng.gen_bool(0.8) { 1 } else { 2 };
        let (x_lo, x_hi, y_lo, y_hi) = self.region();
        let crop_w = x_hi + EDGE_MARGIN;
        let mut taken: Vec<(u32, u32)> = calipers.to_vec();
        let mut out = Vec::new();
        for _ in 0..count {
            let fidelity = (rng.gen_range(0.5..1.0f64) * 1000.0).round() / 1000.0;
            let in_margin = rng.gen_bool(0.2);
            for _ in 0..400 {
                let x = if in_margin {
                    rng.gen_range(crop_w + 8..=self.cfg.image_width - 8)
                } else {
                    rng.gen_range(x_lo..=x_hi)
                };
                let y = rng.gen_range(y_lo..=y_hi);
                if Self::far_enough(&taken, x as f64, y as f64) {
                    taken.push((x as u32, y as u32));
                    out.push(Distractor {
                        x: x as u32,
                        y: y as u32,
                        fidelity,
                    });
                    break;
                }
            }
        }
        out
    }

    fn image(&self, rng: &mut ChaCha8Rng, image_id: String, f: &FrameDraft) -> ImageSpec {
        let mut calipers = Vec::new();
        for (i, &cm) in f.pairs.iter().enumerate() {
            self.place_pair(rng, &mut calipers, cm, i % 2 == 0);
        }
        let banner_text = self.banner(rng, f);
        let distractors = self.distractors(rng, &calipers);
        ImageSpec {
            image_id,
            width: self.cfg.image_width,
            height: self.cfg.image_height,
            calipers,
            banner_text,
            measurement_text: measurement_text(&f.readings),
            distractors,
            role: f.role,
            subject: f.subject.clone(),
            texture_seed: rng.gen(),
        }
    }
}

fn nodule_frames(rng: &mut ChaCha8Rng, n: &NoduleDraft, sparse: bool) -> [FrameDraft; 2] {
    let base = |view| FrameDraft {
        role: ImageRole::Nodule,
        subject: Some(n.id.clone()),
        view,
        laterality: n.laterality,
        location: n.location.clone(),
        label: n.label.clone(),
        pairs: Vec::new(),
        readings: Vec::new(),
        tag: None,
    };
    let mut trans = base(View::Transverse);
    let mut long = base(View::Longitudinal);
    if !(sparse && rng.gen_bool(0.35)) {
        trans.pairs = vec![n.dims[0]];
        trans.readings = vec![reading(rng, n.dims[0])];
    }
    if !(sparse && rng.gen_bool(0.35)) {
        long.pairs = vec![n.dims[2]];
        long.readings = vec![reading(rng, n.dims[2])];
    }
    [trans, long]
}

fn lobe_frame(rng: &mut ChaCha8Rng, laterality: Laterality, lobe: [f64; 3]) -> FrameDraft {
    let mut f = FrameDraft::plain(ImageRole::Lobe, View::Longitudinal, laterality, Some("LOBE"));
    f.subject = Some(format!("{laterality}-lobe"));
    if rng.gen_bool(0.5) {
        f.pairs = vec![lobe[0]];
        f.readings = vec![reading(rng, lobe[0])];
    } else {
        f.pairs = vec![lobe[0], lobe[2]];
        f.readings = vec![reading(rng, lobe[0]), reading(rng, lobe[2])];
    }
    f
}

fn pick_site(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig) -> Site {
    let w = [cfg.site_mix.site1, cfg.site_mix.site2, cfg.site_mix.site3];
    let r = rng.gen_range(0.0..w.iter().sum::<f64>());
    if r < w[0] {
        Site::Site1
    } else if r < w[0] + w[1] {
        Site::Site2
    } else {
        Site::Site3
    }
}

fn pick_laterality(rng: &mut ChaCha8Rng) -> Laterality {
    match rng.gen_range(0..20) {
        0..=8 => Laterality::Right,
        9..=17 => Laterality::Left,
        _ => Laterality::Isthmus,
    }
}

fn pick_diagnosis(rng: &mut ChaCha8Rng) -> Diagnosis {
    match rng.gen_range(0..100) {
        0..=84 => Diagnosis::Benign,
        85..=89 => Diagnosis::Suspicious,
        _ => Diagnosis::Malignant,
    }
}

/// Specification of case `index`; does not render anything.
pub fn generate_case_spec(cfg: &GeneratorConfig, index: usize) -> CaseSpec {
    let mut rng = case_rng(cfg.seed, index);
    let case_id = case_id(index);
    let site = pick_site(&mut rng, cfg);
    let noise = cfg.noise;
    let styled = noise.site_style_variation;
    let sparse = styled && site == Site::Site3;

    let epoch = NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date");
    let pathology_date = epoch + Duration::days(rng.gen_range(0..2100));

    let n_biopsied = match rng.gen_range(0..100) {
        0..=69 => 1,
        70..=91 => 2,
        _ => 3,
    };
    let mut drafts: Vec<NoduleDraft> = (0..n_biopsied)
        .map(|i| NoduleDraft {
            id: format!("n{}", i + 1),
            laterality: pick_laterality(&mut rng),
            location: None,
            label: None,
            diagnosis: Some(pick_diagnosis(&mut rng)),
            dims: [0.0; 3],
        })
        .collect();
    if rng.gen_bool(cfg.extra_nodule_prob) {
        let extra = if rng.gen_bool(0.3) { 2 } else { 1 };
        for i in 0..extra {
            let laterality = if rng.gen_bool(0.5) {
                Laterality::Right
            } else {
                Laterality::Left
            };
            drafts.push(NoduleDraft {
                id: format!("x{}", i + 1),
                laterality,
                location: None,
                label: None,
                diagnosis: None,
                dims: [0.0; 3],
            });
        }
    }
    let mut numbers: Vec<usize> = (1..=drafts.len()).collect();
    numbers.shuffle(&mut rng);
    for i in 0..drafts.len() {
        let crowded = drafts
            .iter()
            .filter(|d| d.laterality == drafts[i].laterality)
            .count()
            >= 2;
        if crowded || rng.gen_bool(0.6) {
            drafts[i].label = Some(format!("#{}", numbers[i]));
        }
        if drafts[i].laterality != Laterality::Isthmus && rng.gen_bool(0.6) {
            drafts[i].location = Some(LOCATIONS.choose(&mut rng).expect("non-empty").0.to_string());
        }
        drafts[i].dims = dims(&mut rng);
    }
    // show nodules in label order within a side
    drafts.sort_by_key(|d| {
        (
            Laterality::ALL.iter().position(|l| *l == d.laterality),
            d.label.as_deref().and_then(|l| l[1..].parse::<usize>().ok()),
            d.id.clone(),
        )
    });

    let anatomy_lobe = |rng: &mut ChaCha8Rng| [tenths(rng, 42, 60), tenths(rng, 14, 25), tenths(rng, 12, 22)];
    let right_lobe = anatomy_lobe(&mut rng);
    let left_lobe = anatomy_lobe(&mut rng);
    let isthmus_cm = tenths(&mut rng, 2, 6);
    let patient = Patient {
        age: rng.gen_range(20..=85),
        sex: if rng.gen_bool(0.75) { "female" } else { "male" }.to_string(),
    };
    let report_variant = rng.gen_range(0..6);

    let has_fna = rng.gen_bool(fna_availability(&site));
    let has_diag = !has_fna || rng.gen_bool(0.85);
    let has_prior = rng.gen_bool(cfg.decoy_study_prob);
    let jitter = |rng: &mut ChaCha8Rng| -> i64 {
        let j = i64::from(noise.date_jitter_days);
        if j == 0 {
            0
        } else {
            rng.gen_range(-j..=j)
        }
    };

    let layout = Layout {
        cfg,
        site: &site,
        styled,
    };
    let biopsied: Vec<&NoduleDraft> = drafts.iter().filter(|d| d.diagnosis.is_some()).collect();
    let biopsied_ids: Vec<&str> = biopsied.iter().map(|n| n.id.as_str()).collect();
    let mut studies = Vec::new();
    // (study position, frame position) of each biopsied nodule's key pair
    let mut fna_keys: Vec<(usize, usize)> = Vec::new();
    let mut diag_keys: Vec<(usize, usize)> = Vec::new();

    if has_fna {
        let date = pathology_date - Duration::days(rng.gen_range(0..=2)) + Duration::days(jitter(&mut rng));
        let mut frames = Vec::new();
        for n in &biopsied {
            let [t, l] = nodule_frames(&mut rng, n, sparse);
            frames.push(t);
            frames.push(l);
            for _ in 0..rng.gen_range(1..=2) {
                frames.push(FrameDraft::plain(
                    ImageRole::Needle,
                    View::Transverse,
                    n.laterality,
                    Some("FNA"),
                ));
            }
        }
        let sides: Vec<Laterality> = biopsied.iter().map(|n| n.laterality).collect();
        let free: Vec<Laterality> = [Laterality::Right, Laterality::Left]
            .into_iter()
            .filter(|l| !sides.contains(l))
            .collect();
        if !free.is_empty() && free.len() < 2 && rng.gen_bool(cfg.fna_extra_caliper_prob) {
            let lobe = if free[0] == Laterality::Right {
                right_lobe
            } else {
                left_lobe
            };
            let at = rng.gen_range(0..=frames.len());
            frames.insert(at, lobe_frame(&mut rng, free[0], lobe));
        }
        let images = id_frames(&layout, &mut rng, "fna", &frames);
        fna_keys = key_positions(&frames, &biopsied_ids);
        studies.push(StudySpec {
            study_id: format!("{case_id}-fna"),
            kind: StudyKind::Fna,
            date,
            images,
        });
    }

    if has_diag {
        let date = pathology_date - Duration::days(rng.gen_range(14..=150)) + Duration::days(jitter(&mut rng));
        let mut frames = Vec::new();
        for side in Laterality::ALL {
            let on_side: Vec<&NoduleDraft> = drafts.iter().filter(|d| d.laterality == side).collect();
            if !sparse && (!on_side.is_empty() || side != Laterality::Isthmus) {
                frames.push(FrameDraft::plain(ImageRole::Survey, View::Transverse, side, None));
            }
            if side != Laterality::Isthmus && on_side.len() <= 1 && rng.gen_bool(cfg.lobe_image_prob) {
                let lobe = if side == Laterality::Right {
                    right_lobe
                } else {
                    left_lobe
                };
                frames.push(lobe_frame(&mut rng, side, lobe));
            }
            for n in on_side {
                let [t, l] = nodule_frames(&mut rng, n, sparse);
                frames.push(t);
                frames.push(l);
            }
        }
        let images = id_frames(&layout, &mut rng, "dx", &frames);
        diag_keys = key_positions(&frames, &biopsied_ids);
        studies.push(StudySpec {
            study_id: format!("{case_id}-dx"),
            kind: StudyKind::Diagnostic,
            date,
            images,
        });
    }

    if has_prior {
        let date = pathology_date - Duration::days(rng.gen_range(cfg.max_gap_days + 20..=cfg.max_gap_days + 400));
        let frames = [
            FrameDraft::plain(ImageRole::Survey, View::Transverse, Laterality::Right, None),
            FrameDraft::plain(ImageRole::Survey, View::Transverse, Laterality::Left, None),
        ];
        let images = id_frames(&layout, &mut rng, "prior", &frames);
        studies.push(StudySpec {
            study_id: format!("{case_id}-prior"),
            kind: StudyKind::Diagnostic,
            date,
            images,
        });
    }

    // The reference reader takes the first study whose two views are both
    // measured; with several biopsied nodules an unannotated view cannot be
    // told apart from its neighbours, so annotation is required as well.
    let single = biopsied.len() == 1;
    let documented = |study: &StudySpec, t: usize, l: usize| {
        [t, l].iter().all(|&k| {
            let img = &study.images[k];
            !img.calipers.is_empty() && (single || !img.banner_text.is_empty())
        })
    };
    let fna_study = has_fna.then(|| &studies[0]);
    let diag_study = has_diag.then(|| &studies[usize::from(has_fna)]);
    let nodules = biopsied
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let fna = fna_study.map(|s| (s, fna_keys[i]));
            let diag = diag_study.map(|s| (s, diag_keys[i]));
            let chosen = match (fna, diag) {
                (Some((s, (t, l))), _) if documented(s, t, l) => (s, t, l),
                (_, Some((s, (t, l)))) if documented(s, t, l) => (s, t, l),
                (Some((s, (t, l))), _) | (None, Some((s, (t, l)))) => (s, t, l),
                (None, None) => unreachable!("every case has a study"),
            };
            let (s, t, l) = chosen;
            NoduleTruth {
                nodule_id: n.id.clone(),
                laterality: n.laterality,
                location: n.location.clone(),
                label: n.label.clone(),
                diagnosis: n.diagnosis.expect("biopsied"),
                dims_cm: n.dims,
                key_images: (s.images[t].image_id.clone(), s.images[l].image_id.clone()),
            }
        })
        .collect();
    let extra_nodules = drafts
        .iter()
        .filter(|d| d.diagnosis.is_none())
        .map(|d| ExtraNodule {
            nodule_id: d.id.clone(),
            laterality: d.laterality,
            location: d.location.clone(),
            label: d.label.clone(),
            dims_cm: d.dims,
        })
        .collect();

    CaseSpec {
        case_id,
        site,
        pathology_date,
        nodules,
        studies,
        noise,
        anatomy: Anatomy {
            right_lobe_cm: right_lobe,
            left_lobe_cm: left_lobe,
            isthmus_cm,
            extra_nodules,
        },
        patient,
        report_variant,
    }
}

/// Positions of the (transverse, longitudinal) frames of each nodule in
/// `ids`, in that order.
fn key_positions(frames: &[FrameDraft], ids: &[&str]) -> Vec<(usize, usize)> {
    ids.iter()
        .map(|id| {
            let mut at = frames
                .iter()
                .enumerate()
                .filter(|(_, f)| f.role == ImageRole::Nodule && f.subject.as_deref() == Some(*id))
                .map(|(i, _)| i);
            let t = at.next().expect("transverse frame present");
            let l = at.next().expect("longitudinal frame present");
            (t, l)
        })
        .collect()
}

fn id_frames(layout: &Layout<'_>, rng: &mut ChaCha8Rng, prefix: &str, frames: &[FrameDraft]) -> Vec<ImageSpec> {
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| layout.image(rng, format!("{prefix}-{:02}", i + 1), f))
        .collect()
}

/// Specifications for every case; cheap, nothing is rendered.
pub fn generate_manifest(cfg: &GeneratorConfig) -> Result<CorpusManifest> {
    cfg.validate()?;
    Ok(CorpusManifest {
        seed: cfg.seed,
        config: cfg.clone(),
        cases: (0..cfg.n_cases).map(|i| generate_case_spec(cfg, i)).collect(),
    })
}
