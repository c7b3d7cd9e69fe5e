//! Scoring pipeline output against the corpus manifest: yield rate,
//! accuracy, per-site and per-module breakdowns and error categories.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, NoduleTruth};
use crate::error::{Error, Result};
use crate::pipeline::{CaseResult, FinalizationPoint, NoduleOutcome};
use crate::types::Site;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    C1,
    #[serde(rename = "C2_wrong_nodule_info")]
    C2WrongNoduleInfo,
    #[serde(rename = "C2_wrong_images")]
    C2WrongImages,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub case_id: String,
    /// Absent when the outcome could not be aligned to a truth nodule.
    pub nodule_id: Option<String>,
    pub category: Category,
    pub finalized_at: FinalizationPoint,
    pub site: Site,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceStats {
    pub truth: usize,
    #[serde(rename = "yield")]
    pub yielded: usize,
    pub correct: usize,
    pub yield_rate: f64,
    pub accuracy: Option<f64>,
}

impl SliceStats {
    fn new(truth: usize, yielded: usize, correct: usize) -> Self {
        SliceStats {
            truth,
            yielded,
            correct,
            yield_rate: ratio(yielded, truth).unwrap_or(0.0),
            accuracy: ratio(correct, yielded),
        }
    }

    pub fn yield_pct(&self) -> u32 {
        percent(self.yielded, self.truth).unwrap_or(0)
    }

    pub fn accuracy_pct(&self) -> Option<u32> {
        percent(self.correct, self.yielded)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub stage: u8,
    pub module: u8,
    pub cumulative_yield: usize,
    pub cumulative_correct: usize,
    pub yield_rate: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncorrectRow {
    /// Finalization module; `None` for a stage subtotal.
    pub stage: u8,
    pub module: Option<u8>,
    /// One count per entry of `IncorrectTable::sites`.
    pub counts: Vec<usize>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncorrectTable {
    pub sites: Vec<Site>,
    /// Module rows in pipeline order, each stage followed by its subtotal.
    pub rows: Vec<IncorrectRow>,
    pub site_totals: Vec<usize>,
    pub site_yields: Vec<usize>,
    /// Incorrect yields over the site's yields.
    pub site_proportions: Vec<Option<f64>>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_truth_nodules: usize,
    pub n_yield: usize,
    pub n_correct: usize,
    pub yield_rate: f64,
    pub accuracy: Option<f64>,
    pub by_site: BTreeMap<Site, SliceStats>,
    pub by_point: Vec<PointRow>,
    pub incorrect: IncorrectTable,
    pub errors: Vec<ErrorRecord>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `num / den` as an integer percentage, rounded half up.
pub fn percent(num: usize, den: usize) -> Option<u32> {
    if den == 0 {
        return None;
    }
    let (n, d) = (num as u128, den as u128);
    Some(((200 * n + d) / (2 * d)) as u32)
}

fn pct_text(p: Option<u32>) -> String {
    p.map_or_else(|| "NA".to_string(), |p| format!("{p}%"))
}

fn same_pair(outcome: &NoduleOutcome, truth: &NoduleTruth) -> bool {
    let Some((a, b)) = &outcome.images else {
        return false;
    };
    let (t, l) = &truth.key_images;
    (a.image_id == *t && b.image_id == *l) || (a.image_id == *l && b.image_id == *t)
}

/// `None` for outcomes that did not yield.
pub fn categorize(outcome: &NoduleOutcome, truth: &NoduleTruth) -> Option<Category> {
    if !outcome.is_yield() {
        return None;
    }
    let info_ok = outcome.nodule.laterality == truth.laterality && outcome.label == truth.diagnosis;
    Some(if !info_ok {
        Category::C2WrongNoduleInfo
    } else if !same_pair(outcome, truth) {
        Category::C2WrongImages
    } else {
        Category::C1
    })
}

/// Truth index for each outcome: exact (laterality, location, label) first,
/// then laterality alone when the case has a single truth nodule.
fn align(outcomes: &[NoduleOutcome], truth: &[NoduleTruth]) -> Vec<Option<usize>> {
    let mut taken = vec![false; truth.len()];
    let mut out = vec![None; outcomes.len()];
    for (k, o) in outcomes.iter().enumerate() {
        let n = &o.nodule;
        if let Some(i) = (0..truth.len()).find(|&i| {
            !taken[i]
                && truth[i].laterality == n.laterality
                && truth[i].location == n.location
                && truth[i].label == n.label
        }) {
            taken[i] = true;
            out[k] = Some(i);
        }
    }
    if truth.len() == 1 && !taken[0] {
        if let Some(k) = (0..outcomes.len())
            .find(|&k| out[k].is_none() && outcomes[k].nodule.laterality == truth[0].laterality)
        {
            out[k] = Some(0);
        }
    }
    out
}

struct Scored {
    site: Site,
    at: FinalizationPoint,
    category: Category,
    case_id: String,
    nodule_id: Option<String>,
}

fn score(results: &[CaseResult], manifest: &CorpusManifest) -> Result<Vec<Scored>> {
    let cases: BTreeMap<&str, _> = manifest.cases.iter().map(|c| (c.case_id.as_str(), c)).collect();
    let mut out = Vec::new();
    for r in results {
        let case = cases
            .get(r.case_id.as_str())
            .ok_or_else(|| Error::validation(format!("result for unknown case {}", r.case_id)))?;
        let aligned = align(&r.per_nodule, &case.nodules);
        for (o, t) in r.per_nodule.iter().zip(aligned) {
            let Some(at) = o.finalized_at.filter(|_| o.is_yield()) else {
                continue;
            };
            let (category, nodule_id) = match t {
                Some(i) => (
                    categorize(o, &case.nodules[i]).expect("yielded"),
                    Some(case.nodules[i].nodule_id.clone()),
                ),
                None => (Category::C2WrongNoduleInfo, None),
            };
            out.push(Scored {
                site: case.site.clone(),
                at,
                category,
                case_id: r.case_id.clone(),
                nodule_id,
            });
        }
    }
    Ok(out)
}

fn truth_by_site(manifest: &CorpusManifest) -> BTreeMap<Site, usize> {
    let mut m = BTreeMap::new();
    for c in &manifest.cases {
        *m.entry(c.site.clone()).or_insert(0) += c.nodules.len();
    }
    m
}

fn point_rows(scored: &[Scored], n_truth: usize) -> Vec<PointRow> {
    let (mut y, mut c) = (0, 0);
    FinalizationPoint::ALL
        .iter()
        .map(|p| {
            y += scored.iter().filter(|s| s.at == *p).count();
            c += scored
                .iter()
                .filter(|s| s.at == *p && s.category == Category::C1)
                .count();
            PointRow {
                stage: p.stage,
                module: p.module,
                cumulative_yield: y,
                cumulative_correct: c,
                yield_rate: ratio(y, n_truth).unwrap_or(0.0),
                accuracy: ratio(c, y),
            }
        })
        .collect()
}

fn incorrect_table(scored: &[Scored], sites: &BTreeSet<Site>) -> IncorrectTable {
    let sites: Vec<Site> = sites.iter().cloned().collect();
    let count = |pred: &dyn Fn(&Scored) -> bool, site: &Site| {
        scored
            .iter()
            .filter(|s| s.category != Category::C1 && s.site == *site && pred(s))
            .count()
    };
    let row = |stage: u8, module: Option<u8>| {
        let pred = move |s: &Scored| s.at.stage == stage && module.map_or(true, |m| s.at.module == m);
        let counts: Vec<usize> = sites.iter().map(|site| count(&pred, site)).collect();
        IncorrectRow {
            stage,
            module,
            total: counts.iter().sum(),
            counts,
        }
    };
    let mut rows = Vec::new();
    for stage in [1u8, 2] {
        for p in FinalizationPoint::ALL.iter().filter(|p| p.stage == stage) {
            rows.push(row(stage, Some(p.module)));
        }
        rows.push(row(stage, None));
    }
    let site_totals: Vec<usize> = sites.iter().map(|site| count(&|_| true, site)).collect();
    let site_yields: Vec<usize> = sites
        .iter()
        .map(|site| scored.iter().filter(|s| s.site == *site).count())
        .collect();
    let site_proportions = site_totals
        .iter()
        .zip(&site_yields)
        .map(|(&e, &y)| ratio(e, y))
        .collect();
    IncorrectTable {
        total: site_totals.iter().sum(),
        sites,
        rows,
        site_totals,
        site_yields,
        site_proportions,
    }
}

pub fn evaluate(results: &[CaseResult], manifest: &CorpusManifest) -> Result<EvalReport> {
    let scored = score(results, manifest)?;
    let truth = truth_by_site(manifest);
    let n_truth: usize = truth.values().sum();
    let n_yield = scored.len();
    let n_correct = scored.iter().filter(|s| s.category == Category::C1).count();

    let mut sites: BTreeSet<Site> = [Site::Site1, Site::Site2, Site::Site3].into_iter().collect();
    sites.extend(truth.keys().cloned());
    let by_site = sites
        .iter()
        .map(|site| {
            let y = scored.iter().filter(|s| s.site == *site).count();
            let c = scored
                .iter()
                .filter(|s| s.site == *site && s.category == Category::C1)
                .count();
            (site.clone(), SliceStats::new(truth.get(site).copied().unwrap_or(0), y, c))
        })
        .collect();

    let errors = scored
        .iter()
        .filter(|s| s.category != Category::C1)
        .map(|s| ErrorRecord {
            case_id: s.case_id.clone(),
            nodule_id: s.nodule_id.clone(),
            category: s.category,
            finalized_at: s.at,
            site: s.site.clone(),
        })
        .collect();

    Ok(EvalReport {
        n_truth_nodules: n_truth,
        n_yield,
        n_correct,
        yield_rate: ratio(n_yield, n_truth).unwrap_or(0.0),
        accuracy: ratio(n_correct, n_yield),
        by_site,
        by_point: point_rows(&scored, n_truth),
        incorrect: incorrect_table(&scored, &sites),
        errors,
    })
}

pub fn breakdown_by_point(results: &[CaseResult], manifest: &CorpusManifest) -> Result<Vec<PointRow>> {
    Ok(evaluate(results, manifest)?.by_point)
}

pub fn incorrect_by_site_stage(results: &[CaseResult], manifest: &CorpusManifest) -> Result<IncorrectTable> {
    Ok(evaluate(results, manifest)?.incorrect)
}

impl EvalReport {
    pub fn yield_pct(&self) -> u32 {
        percent(self.n_yield, self.n_truth_nodules).unwrap_or(0)
    }

    pub fn accuracy_pct(&self) -> Option<u32> {
        percent(self.n_correct, self.n_yield)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("report serializes");
        v.push(b'\n');
        v
    }

    /// Yield and accuracy per site plus the all-sites row.
    pub fn table1_csv(&self) -> String {
        let mut out = String::from("site,truth,yield,correct,yield_rate,accuracy\n");
        for (site, s) in &self.by_site {
            let _ = writeln!(
                out,
                "{site},{},{},{},{},{}",
                s.truth,
                s.yielded,
                s.correct,
                pct_text(Some(s.yield_pct())),
                pct_text(s.accuracy_pct())
            );
        }
        let _ = writeln!(
            out,
            "All Sites,{},{},{},{},{}",
            self.n_truth_nodules,
            self.n_yield,
            self.n_correct,
            pct_text(Some(self.yield_pct())),
            pct_text(self.accuracy_pct())
        );
        out
    }

    /// Cumulative yield and accuracy after each yielding module.
    pub fn table2_csv(&self) -> String {
        let mut out = String::from("stage,module,cumulative_yield,cumulative_correct,yield_rate,accuracy\n");
        for r in &self.by_point {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.stage,
                r.module,
                r.cumulative_yield,
                r.cumulative_correct,
                pct_text(percent(r.cumulative_yield, self.n_truth_nodules)),
                pct_text(percent(r.cumulative_correct, r.cumulative_yield))
            );
        }
        out
    }

    /// Incorrect yields by finalization point and site.
    pub fn table3_csv(&self) -> String {
        let t = &self.incorrect;
        let mut out = String::from("stage,module");
        for s in &t.sites {
            let _ = write!(out, ",{s}");
        }
        out.push_str(",total\n");
        for r in &t.rows {
            let module = r.module.map_or_else(|| "all".to_string(), |m| m.to_string());
            let _ = write!(out, "{},{module}", r.stage);
            for c in &r.counts {
                let _ = write!(out, ",{c}");
            }
            let _ = writeln!(out, ",{}", r.total);
        }
        out.push_str("total,all");
        for (c, y) in t.site_totals.iter().zip(&t.site_yields) {
            let _ = write!(out, ",{c} ({})", pct_text(percent(*c, *y)));
        }
        let _ = writeln!(out, ",{}", t.total);
        out
    }
}
