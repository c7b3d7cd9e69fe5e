//! Two-stage routing of pathology nodules to image pairs.
//!
//! Stage 1 works on the in-window FNA study: caliper filtering (Module 3)
//! and, when that is not conclusive, banner matching (Module 4). Nodules
//! that stage 1 cannot settle fall through to stage 2 on the diagnostic
//! study, where Module 4 may be followed by radiology-report measurement
//! matching (Module 5).

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caliper::{select_candidate_images, CaliperConfig, Candidate};
use crate::corpus::GeneratedCase;
use crate::error::{Error, Result};
use crate::font::GlyphFont;
use crate::ocr::{BannerInfo, ImageText, MeasurementSet};
use crate::path_parser::{parse_collected_date, parse_pathology_with, NoduleRecord, PathologyRules};
use crate::rad_parser::{extract_nodule_measurements, has_findings_section};
use crate::raster::Raster;
use crate::study::{ImageRef, Study, StudyImage, StudyMeta};
use crate::study_matcher::{match_study, MatchWindow};
use crate::types::{Diagnosis, StudyKind, View};

pub const DEFAULT_TOLERANCE_CM: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub caliper: CaliperConfig,
    pub window: MatchWindow,
    pub tol_cm: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            caliper: CaliperConfig::default(),
            window: MatchWindow::default(),
            tol_cm: DEFAULT_TOLERANCE_CM,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.caliper.validate()?;
        MatchWindow::new(self.window.max_gap_days)?;
        if !(self.tol_cm >= 0.0) {
            return Err(Error::validation("tol_cm must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CaseInputs {
    pub case_id: String,
    pub pathology: String,
    pub radiology: Option<String>,
    pub studies: Vec<Study>,
}

impl CaseInputs {
    pub fn from_generated(case: GeneratedCase) -> CaseInputs {
        let site = case.spec.site.clone();
        let studies = case
            .spec
            .studies
            .iter()
            .zip(case.images)
            .map(|(s, frames)| Study {
                study_id: s.study_id.clone(),
                kind: s.kind,
                date: s.date,
                site: site.clone(),
                images: s
                    .images
                    .iter()
                    .zip(frames)
                    .map(|(i, r)| StudyImage {
                        image_id: i.image_id.clone(),
                        raster: Ok(r),
                    })
                    .collect(),
            })
            .collect();
        CaseInputs {
            case_id: case.spec.case_id.clone(),
            pathology: case.pathology,
            radiology: case.radiology,
            studies,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FinalizationPoint {
    pub stage: u8,
    pub module: u8,
}

impl FinalizationPoint {
    /// Every point that can produce a yield, in pipeline order.
    pub const ALL: [FinalizationPoint; 4] = [
        FinalizationPoint { stage: 1, module: 3 },
        FinalizationPoint { stage: 1, module: 4 },
        FinalizationPoint { stage: 2, module: 4 },
        FinalizationPoint { stage: 2, module: 5 },
    ];
}

impl std::fmt::Display for FinalizationPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "S{}M{}", self.stage, self.module)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Yield,
    NoYield,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoYieldReason {
    NoStudyInWindow,
    CaliperUnderflow,
    OcrMismatch,
    MeasurementAmbiguous,
    MultipleSideNodules,
    ReportParseFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoduleOutcome {
    pub nodule: NoduleRecord,
    pub status: Status,
    /// Transverse frame first when the banners tell the views apart.
    pub images: Option<(ImageRef, ImageRef)>,
    pub label: Diagnosis,
    pub finalized_at: Option<FinalizationPoint>,
    pub no_yield_reason: Option<NoYieldReason>,
}

impl NoduleOutcome {
    fn yielded(nodule: &NoduleRecord, images: (ImageRef, ImageRef), at: FinalizationPoint) -> Self {
        NoduleOutcome {
            nodule: nodule.clone(),
            status: Status::Yield,
            images: Some(images),
            label: nodule.diagnosis,
            finalized_at: Some(at),
            no_yield_reason: None,
        }
    }

    fn failed(nodule: &NoduleRecord, reason: NoYieldReason) -> Self {
        NoduleOutcome {
            nodule: nodule.clone(),
            status: Status::NoYield,
            images: None,
            label: nodule.diagnosis,
            finalized_at: None,
            no_yield_reason: Some(reason),
        }
    }

    pub fn is_yield(&self) -> bool {
        self.status == Status::Yield
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub per_nodule: Vec<NoduleOutcome>,
    /// Routed to the run-level log rather than the results file.
    #[serde(skip)]
    pub diagnostics: Vec<String>,
}

/// True iff laterality agrees and location/label agree wherever both
/// sides carry them.
pub fn match_banner_to_nodule(banner: &BannerInfo, nodule: &NoduleRecord) -> bool {
    fn compatible(a: Option<&str>, b: Option<&str>) -> bool {
        match (a, b) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        }
    }
    banner.laterality == Some(nodule.laterality)
        && compatible(banner.location.as_deref(), nodule.location.as_deref())
        && compatible(banner.label.as_deref(), nodule.label.as_deref())
}

/// Each image value must pair with a distinct report dimension within
/// `tol_cm`. An empty image set never matches.
pub fn match_measurements(image: &MeasurementSet, report_dims: &[f64], tol_cm: f64) -> bool {
    fn assign(values: &[f64], dims: &[f64], used: &mut [bool], tol: f64) -> bool {
        let Some((&v, rest)) = values.split_first() else {
            return true;
        };
        for i in 0..dims.len() {
            if !used[i] && (v - dims[i]).abs() <= tol + 1e-9 {
                used[i] = true;
                if assign(rest, dims, used, tol) {
                    return true;
                }
                used[i] = false;
            }
        }
        false
    }
    let values = &image.values_cm;
    if values.is_empty() || values.len() > report_dims.len() {
        return false;
    }
    assign(values, report_dims, &mut vec![false; report_dims.len()], tol_cm)
}

/// Candidates of one study together with their OCR reads.
struct ReadStudy {
    candidates: Vec<(Candidate, ImageText)>,
}

impl ReadStudy {
    fn banner(&self, i: usize) -> BannerInfo {
        self.candidates[i].1.banner()
    }
}

enum Stage1 {
    Done(NoduleOutcome),
    Fallthrough(NoYieldReason),
}

pub struct Pipeline {
    cfg: PipelineConfig,
    rules: PathologyRules,
    font: GlyphFont,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Pipeline> {
        Self::with_parts(cfg, PathologyRules::default(), GlyphFont::default())
    }

    pub fn with_parts(cfg: PipelineConfig, rules: PathologyRules, font: GlyphFont) -> Result<Pipeline> {
        cfg.validate()?;
        Ok(Pipeline { cfg, rules, font })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    fn read_study(&self, study: &Study, diags: &mut Vec<String>) -> Result<ReadStudy> {
        let sel = select_candidate_images(study, &self.cfg.caliper)?;
        diags.extend(sel.diagnostics);
        let candidates = sel
            .candidates
            .into_iter()
            .map(|c| {
                let raster = study.images[c.index]
                    .raster
                    .as_ref()
                    .expect("candidates come from decoded frames");
                let text = ImageText::read(raster, &self.font);
                (c, text)
            })
            .collect();
        Ok(ReadStudy { candidates })
    }

    /// Orders a pair transverse-first and notes unusual view mixes.
    fn pair(&self, read: &ReadStudy, a: usize, b: usize, diags: &mut Vec<String>) -> (ImageRef, ImageRef) {
        let (va, vb) = (read.banner(a).view, read.banner(b).view);
        let ra = read.candidates[a].0.image.clone();
        let rb = read.candidates[b].0.image.clone();
        let one_of_each = matches!(
            (va, vb),
            (View::Transverse, View::Longitudinal) | (View::Longitudinal, View::Transverse)
        );
        if !one_of_each {
            diags.push(format!("{ra} + {rb}: view composition {va:?}/{vb:?}, expected one of each"));
        }
        if va == View::Longitudinal && vb == View::Transverse {
            (rb, ra)
        } else {
            (ra, rb)
        }
    }

    /// Banner matches of every nodule, with pairs shared between nodules
    /// removed: such a pair cannot be attributed safely.
    fn banner_matches(&self, nodules: &[NoduleRecord], read: &ReadStudy) -> Vec<Vec<usize>> {
        let banners: Vec<BannerInfo> = (0..read.candidates.len()).map(|i| read.banner(i)).collect();
        nodules
            .iter()
            .map(|n| {
                (0..banners.len())
                    .filter(|&i| match_banner_to_nodule(&banners[i], n))
                    .collect()
            })
            .collect()
    }

    fn claimed_elsewhere(matches: &[Vec<usize>], k: usize, images: &[usize]) -> bool {
        matches
            .iter()
            .enumerate()
            .any(|(j, m)| j != k && images.iter().any(|i| m.contains(i)))
    }

    fn stage1(&self, nodules: &[NoduleRecord], fna: &Study, diags: &mut Vec<String>) -> Result<Vec<Stage1>> {
        let read = self.read_study(fna, diags)?;
        let n = read.candidates.len();
        diags.push(format!("stage 1: {} has {n} caliper image(s)", fna.study_id));
        if n < 2 {
            return Ok(nodules
                .iter()
                .map(|_| Stage1::Fallthrough(NoYieldReason::CaliperUnderflow))
                .collect());
        }
        if n == 2 && nodules.len() == 1 {
            let pair = self.pair(&read, 0, 1, diags);
            let at = FinalizationPoint { stage: 1, module: 3 };
            return Ok(vec![Stage1::Done(NoduleOutcome::yielded(&nodules[0], pair, at))]);
        }
        let matches = self.banner_matches(nodules, &read);
        let mut out = Vec::new();
        for (k, nodule) in nodules.iter().enumerate() {
            let m = &matches[k];
            if m.len() == 2 && !Self::claimed_elsewhere(&matches, k, m) {
                let pair = self.pair(&read, m[0], m[1], diags);
                let at = FinalizationPoint { stage: 1, module: 4 };
                out.push(Stage1::Done(NoduleOutcome::yielded(nodule, pair, at)));
            } else {
                diags.push(format!(
                    "stage 1: nodule {} matched {} banner(s), falling through",
                    describe(nodule),
                    m.len()
                ));
                out.push(Stage1::Fallthrough(NoYieldReason::OcrMismatch));
            }
        }
        Ok(out)
    }

    fn stage2(
        &self,
        nodules: &[NoduleRecord],
        diag: &Study,
        radiology: Option<&str>,
        diags: &mut Vec<String>,
    ) -> Result<Vec<NoduleOutcome>> {
        let read = self.read_study(diag, diags)?;
        diags.push(format!(
            "stage 2: {} has {} caliper image(s)",
            diag.study_id,
            read.candidates.len()
        ));
        if read.candidates.len() < 2 {
            return Ok(nodules
                .iter()
                .map(|n| NoduleOutcome::failed(n, NoYieldReason::CaliperUnderflow))
                .collect());
        }
        let matches = self.banner_matches(nodules, &read);
        let mut out = Vec::new();
        for (k, nodule) in nodules.iter().enumerate() {
            let m = &matches[k];
            let outcome = if m.len() < 2 {
                NoduleOutcome::failed(nodule, NoYieldReason::OcrMismatch)
            } else if m.len() == 2 {
                if Self::claimed_elsewhere(&matches, k, m) {
                    diags.push(format!("stage 2: nodule {} shares images with another nodule", describe(nodule)));
                    NoduleOutcome::failed(nodule, NoYieldReason::OcrMismatch)
                } else {
                    let pair = self.pair(&read, m[0], m[1], diags);
                    NoduleOutcome::yielded(nodule, pair, FinalizationPoint { stage: 2, module: 4 })
                }
            } else {
                self.module5(nodule, &read, m, radiology, diags)
            };
            out.push(outcome);
        }
        Ok(out)
    }

    fn module5(
        &self,
        nodule: &NoduleRecord,
        read: &ReadStudy,
        matched: &[usize],
        radiology: Option<&str>,
        diags: &mut Vec<String>,
    ) -> NoduleOutcome {
        let Some(report) = radiology else {
            diags.push("module 5: no radiology report".into());
            return NoduleOutcome::failed(nodule, NoYieldReason::MeasurementAmbiguous);
        };
        if !has_findings_section(report) {
            return NoduleOutcome::failed(nodule, NoYieldReason::ReportParseFailure);
        }
        let side = extract_nodule_measurements(report, nodule.laterality).nodules;
        match side.len() {
            0 => return NoduleOutcome::failed(nodule, NoYieldReason::MeasurementAmbiguous),
            1 => {}
            _ => return NoduleOutcome::failed(nodule, NoYieldReason::MultipleSideNodules),
        }
        let dims = &side[0].dims_cm;
        let hits: Vec<usize> = matched
            .iter()
            .copied()
            .filter(|&i| match_measurements(&read.candidates[i].1.measurements(), dims, self.cfg.tol_cm))
            .collect();
        if hits.len() == 2 {
            let pair = self.pair(read, hits[0], hits[1], diags);
            NoduleOutcome::yielded(nodule, pair, FinalizationPoint { stage: 2, module: 5 })
        } else {
            diags.push(format!(
                "module 5: {} image(s) match the report measurements of {}",
                hits.len(),
                describe(nodule)
            ));
            NoduleOutcome::failed(nodule, NoYieldReason::MeasurementAmbiguous)
        }
    }

    pub fn run_case(&self, inputs: &CaseInputs) -> Result<CaseResult> {
        if inputs.pathology.trim().is_empty() {
            return Err(Error::validation(format!("{}: empty pathology report", inputs.case_id)));
        }
        let mut diags = Vec::new();
        let parse = parse_pathology_with(&inputs.pathology, &self.rules);
        diags.extend(parse.diagnostics);
        let nodules = parse.records;
        if nodules.is_empty() {
            diags.push("no thyroid nodules in pathology report".into());
        }
        let finish = |per_nodule, diagnostics| CaseResult {
            case_id: inputs.case_id.clone(),
            per_nodule,
            diagnostics,
        };

        let Some(date) = parse_collected_date(&inputs.pathology) else {
            diags.push("pathology report has no collection date".into());
            let out = nodules
                .iter()
                .map(|n| NoduleOutcome::failed(n, NoYieldReason::ReportParseFailure))
                .collect();
            return Ok(finish(out, diags));
        };

        let window = self.cfg.window;
        let fna = match_study(date, &inputs.studies, StudyKind::Fna, window);
        let diag = match_study(date, &inputs.studies, StudyKind::Diagnostic, window);

        let mut outcomes: Vec<Option<NoduleOutcome>> = vec![None; nodules.len()];
        let mut fallthrough: Vec<Option<NoYieldReason>> = vec![None; nodules.len()];
        if let Some(fna) = fna {
            for (k, r) in self.stage1(&nodules, fna, &mut diags)?.into_iter().enumerate() {
                match r {
                    Stage1::Done(o) => outcomes[k] = Some(o),
                    Stage1::Fallthrough(reason) => fallthrough[k] = Some(reason),
                }
            }
        }
        let pending: Vec<usize> = (0..nodules.len()).filter(|&k| outcomes[k].is_none()).collect();
        if !pending.is_empty() {
            match diag {
                Some(diag) => {
                    let subset: Vec<NoduleRecord> = pending.iter().map(|&k| nodules[k].clone()).collect();
                    let results = self.stage2(&subset, diag, inputs.radiology.as_deref(), &mut diags)?;
                    for (&k, o) in pending.iter().zip(results) {
                        outcomes[k] = Some(o);
                    }
                }
                None => {
                    for &k in &pending {
                        let reason = fallthrough[k].unwrap_or(NoYieldReason::NoStudyInWindow);
                        outcomes[k] = Some(NoduleOutcome::failed(&nodules[k], reason));
                    }
                }
            }
        }
        let per_nodule = outcomes.into_iter().map(|o| o.expect("every nodule routed")).collect();
        Ok(finish(per_nodule, diags))
    }
}

fn describe(n: &NoduleRecord) -> String {
    let mut s = n.laterality.to_string();
    for part in [&n.location, &n.label].into_iter().flatten() {
        s.push(' ');
        s.push_str(part);
    }
    s
}

pub fn run_case(inputs: &CaseInputs, cfg: &PipelineConfig) -> Result<CaseResult> {
    Pipeline::new(cfg.clone())?.run_case(inputs)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

/// Reads one case directory (see the corpus layout).
pub fn load_case_dir(dir: &Path) -> Result<CaseInputs> {
    let case_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::validation(format!("{} is not a case directory", dir.display())))?;
    let pathology = read_text(&dir.join("pathology.txt"))?;
    let rad_path = dir.join("radiology.txt");
    let radiology = if rad_path.exists() {
        Some(read_text(&rad_path)?)
    } else {
        None
    };
    let mut studies = Vec::new();
    let studies_dir = dir.join("studies");
    if studies_dir.is_dir() {
        for sdir in sorted_entries(&studies_dir)? {
            if !sdir.is_dir() {
                continue;
            }
            let meta_path = sdir.join("meta.json");
            let meta: StudyMeta = serde_json::from_str(&read_text(&meta_path)?)
                .map_err(|e| Error::json(meta_path.display().to_string(), e))?;
            let mut images = Vec::new();
            for f in sorted_entries(&sdir)? {
                if f.extension().and_then(|e| e.to_str()) != Some("pgm") {
                    continue;
                }
                let image_id = f
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let bytes = fs::read(&f).map_err(|e| Error::io(&f, e))?;
                images.push(StudyImage {
                    image_id,
                    raster: Raster::from_pgm(&bytes).map_err(|e| e.to_string()),
                });
            }
            studies.push(Study {
                study_id: sdir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                kind: meta.kind,
                date: meta.date,
                site: meta.site,
                images,
            });
        }
    }
    Ok(CaseInputs {
        case_id,
        pathology,
        radiology,
        studies,
    })
}

/// Case directories of a corpus, sorted by name.
pub fn case_dirs(corpus: &Path) -> Result<Vec<PathBuf>> {
    if !corpus.is_dir() {
        return Err(Error::io(
            corpus,
            std::io::Error::new(std::io::ErrorKind::NotFound, "corpus directory not found"),
        ));
    }
    Ok(sorted_entries(corpus)?
        .into_iter()
        .filter(|p| p.join("pathology.txt").is_file())
        .collect())
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    /// Sorted by case id.
    pub results: Vec<CaseResult>,
    /// Run-level log, one line per entry, in case order.
    pub diagnostics: Vec<String>,
}

impl RunOutput {
    /// JSON lines, one `CaseResult` per line.
    pub fn results_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            out.push_str(&serde_json::to_string(r).expect("results serialize"));
            out.push('\n');
        }
        out
    }

    pub fn diagnostics_log(&self) -> String {
        let mut out = self.diagnostics.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }
}

fn collect(mut per_case: Vec<(String, Result<CaseResult>)>) -> RunOutput {
    per_case.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out = RunOutput::default();
    for (case_id, r) in per_case {
        match r {
            Ok(mut res) => {
                out.diagnostics
                    .extend(res.diagnostics.drain(..).map(|d| format!("{case_id}: {d}")));
                out.results.push(res);
            }
            Err(e) => out.diagnostics.push(format!("{case_id}: case skipped: {e}")),
        }
    }
    out
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    if parallelism == 0 {
        return Err(Error::validation("parallelism must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::validation(format!("thread pool: {e}")))
}

/// Runs every case under `corpus`. Cases that cannot be read are skipped
/// and logged; a missing corpus directory is an error.
pub fn run_corpus(corpus: &Path, cfg: &PipelineConfig, parallelism: usize) -> Result<RunOutput> {
    let pipeline = Pipeline::new(cfg.clone())?;
    let dirs = case_dirs(corpus)?;
    let per_case = pool(parallelism)?.install(|| {
        dirs.par_iter()
            .map(|d| {
                let id = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                let r = load_case_dir(d).and_then(|inputs| pipeline.run_case(&inputs));
                (id, r)
            })
            .collect::<Vec<_>>()
    });
    Ok(collect(per_case))
}

/// Runs cases produced on demand by `make` (e.g. rendered in memory).
pub fn run_cases<F>(n: usize, make: F, cfg: &PipelineConfig, parallelism: usize) -> Result<RunOutput>
where
    F: Fn(usize) -> Result<CaseInputs> + Sync,
{
    let pipeline = Pipeline::new(cfg.clone())?;
    let per_case = pool(parallelism)?.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| match make(i) {
                Ok(inputs) => (inputs.case_id.clone(), pipeline.run_case(&inputs)),
                Err(e) => (format!("#{i}"), Err(e)),
            })
            .collect::<Vec<_>>()
    });
    Ok(collect(per_case))
}

pub fn parse_results_jsonl(text: &str) -> Result<Vec<CaseResult>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::json(format!("results line {}", i + 1), e)))
        .collect()
}
