//! Free-text cytopathology and radiology reports for generated cases.

use std::fmt::Write as _;

use super::generate::location_abbrev;
use super::CaseSpec;
use crate::types::{Diagnosis, Laterality, Site};

const BENIGN: [&str; 3] = [
    "Colloid, follicular epithelium, and macrophages, consistent with a benign thyroid nodule.",
    "Scant follicular epithelium, colloid in a background of macrophages, consistent with a benign cystic thyroid nodule.",
    "Benign follicular nodule (Bethesda II).",
];
const SUSPICIOUS: [&str; 2] = [
    "Suspicious for papillary thyroid carcinoma.",
    "Suspicious for malignancy (Bethesda V).",
];
const MALIGNANT: [&str; 3] = [
    "Papillary thyroid carcinoma.",
    "Positive for malignancy. Papillary thyroid carcinoma.",
    "Medullary thyroid carcinoma.",
];

fn diagnosis_sentence(d: Diagnosis, variant: usize) -> &'static str {
    match d {
        Diagnosis::Benign => BENIGN[variant % BENIGN.len()],
        Diagnosis::Suspicious => SUSPICIOUS[variant % SUSPICIOUS.len()],
        Diagnosis::Malignant => MALIGNANT[variant % MALIGNANT.len()],
    }
}

fn descriptor(lat: Laterality, location: Option<&str>, label: Option<&str>) -> String {
    let mut s = lat.as_str().to_string();
    for part in [location, label].into_iter().flatten() {
        s.push(' ');
        s.push_str(part);
    }
    s
}

fn header(out: &mut String, spec: &CaseSpec) {
    let _ = writeln!(out, "Fine Needle Aspirate Case: [redacted]");
    let _ = writeln!(out, "Authorizing Provider: [redacted] Collected: {}", spec.pathology_date);
    let _ = writeln!(out, "Ordering Location: [redacted] Received: [redacted]");
    let _ = writeln!(out, "Pathologist: [redacted]");
}

pub fn write_pathology_report(spec: &CaseSpec) -> String {
    let mut out = String::new();
    header(&mut out, spec);
    let variant = spec.report_variant as usize;
    let age = spec.patient.age;
    let sex = &spec.patient.sex;

    if let [n] = spec.nodules.as_slice() {
        let short_side = match n.laterality {
            Laterality::Right => "RT",
            Laterality::Left => "LT",
            Laterality::Isthmus => "ISTHMUS",
        };
        let mut line = format!("Specimen: Thyroid, {short_side} THYROID");
        if let Some(loc) = &n.location {
            line.push(' ');
            line.push_str(location_abbrev(loc));
        }
        if let Some(label) = &n.label {
            line.push(' ');
            line.push_str(&label[1..]);
        }
        let _ = writeln!(out, "{line}");
        let largest = n.dims_cm.iter().copied().fold(0.0, f64::max);
        let _ = writeln!(
            out,
            "{age} year old {sex} patient presents with a solid {largest:.1} cm {} thyroid nodule.",
            n.laterality
        );
        let _ = writeln!(
            out,
            "Ultrasound guided fine needle aspiration biopsy of {} thyroid performed by [redacted] of radiology.",
            n.laterality
        );
        let _ = writeln!(out, "2 prestained smears, 2 prefixed smears, and fluid for ThinPrep.");
        let _ = writeln!(
            out,
            "Thyroid, {}, ultrasound guided fine needle aspiration biopsy.",
            descriptor(n.laterality, n.location.as_deref(), n.label.as_deref())
        );
        let _ = writeln!(out, "{}", diagnosis_sentence(n.diagnosis, variant));
        let _ = writeln!(out, "Adequate (by [redacted]).");
        return out;
    }

    let letter = |k: usize| char::from(b'A' + k as u8);
    for (k, n) in spec.nodules.iter().enumerate() {
        let lead = if k == 0 { "Specimens: " } else { " " };
        let _ = writeln!(
            out,
            "{lead}{}) - Thyroid, {}",
            letter(k),
            descriptor(n.laterality, n.location.as_deref(), n.label.as_deref())
        );
    }
    let _ = writeln!(out, "{age} year old {sex} patient with multiple thyroid nodules.");
    for (k, n) in spec.nodules.iter().enumerate() {
        let _ = writeln!(
            out,
            "{}) Fine needle aspiration biopsy of thyroid {} performed by [redacted] of radiology.",
            letter(k),
            n.laterality
        );
    }
    for (k, n) in spec.nodules.iter().enumerate() {
        let _ = writeln!(
            out,
            "{}) Thyroid, {}, ultrasound-guided fine needle aspiration biopsy: {}",
            letter(k),
            descriptor(n.laterality, n.location.as_deref(), n.label.as_deref()),
            diagnosis_sentence(n.diagnosis, variant + k)
        );
    }
    let _ = writeln!(out, "Adequate (by [redacted]).");
    out
}

struct ReportNodule {
    laterality: Laterality,
    label_no: usize,
    id: String,
    dims: [f64; 3],
}

fn dims_text(d: [f64; 3]) -> String {
    format!("{:.1} x {:.1} x {:.1} cm", d[0], d[1], d[2])
}

const DESCRIPTIONS: [&str; 4] = [
    "Solid hypoechoic nodule with smooth margins.",
    "Ovoid isoechoic solid nodule without echogenic foci.",
    "Mixed cystic and solid nodule with a spongiform appearance.",
    "Hyperechoic solid nodule with ill-defined borders.",
];

/// Radiology report for the case's diagnostic study, or `None` when the
/// case has no diagnostic study.
pub fn write_radiology_report(spec: &CaseSpec) -> Option<String> {
    let study = spec.report_study()?;
    let variant = spec.report_variant as usize;
    let headerless = spec.styled() && spec.site == Site::Site2;

    let mut all: Vec<ReportNodule> = spec
        .nodules
        .iter()
        .map(|n| (n.laterality, n.label.as_deref(), &n.nodule_id, n.dims_cm))
        .chain(
            spec.anatomy
                .extra_nodules
                .iter()
                .map(|n| (n.laterality, n.label.as_deref(), &n.nodule_id, n.dims_cm)),
        )
        .map(|(laterality, label, id, dims)| ReportNodule {
            laterality,
            label_no: label.and_then(|l| l[1..].parse().ok()).unwrap_or(usize::MAX),
            id: id.clone(),
            dims,
        })
        .collect();
    all.sort_by(|a, b| (a.label_no, &a.id).cmp(&(b.label_no, &b.id)));

    let mut out = String::new();
    let _ = writeln!(
        out,
        "Rpt=US soft tissue head and neck,MRN=[REDACTED],Date={},Facility={}, Acc Num={}",
        study.date, spec.site, study.study_id
    );
    out.push('\n');
    let _ = writeln!(out, "Indication: Thyroid nodule, follow-up before biopsy.");
    out.push('\n');
    let _ = writeln!(
        out,
        "Technique: Gray-scale and color Doppler images of the thyroid gland were obtained."
    );
    out.push('\n');
    let _ = writeln!(out, "Findings:");
    out.push('\n');

    let verb = ["measures", "measures up to", "measures approximately"][variant % 3];
    let mut impression = Vec::new();
    for side in Laterality::ALL {
        let side_nodules: Vec<&ReportNodule> = all.iter().filter(|n| n.laterality == side).collect();
        let title = match side {
            Laterality::Right => "Right",
            Laterality::Left => "Left",
            Laterality::Isthmus => "Isthmus",
        };
        if !headerless {
            let _ = writeln!(
                out,
                "{}:",
                match side {
                    Laterality::Isthmus => "ISTHMUS".to_string(),
                    _ => format!("{} LOBE", title.to_uppercase()),
                }
            );
            out.push('\n');
        }
        let count_text = match side_nodules.len() {
            0 => "No discrete nodules.".to_string(),
            1 => "One nodule is noted:".to_string(),
            n => format!("{n} nodules are noted:"),
        };
        match side {
            Laterality::Isthmus => {
                let _ = writeln!(
                    out,
                    "{}The isthmus measures {:.1} cm. {count_text}",
                    if headerless { "Isthmus: " } else { "" },
                    spec.anatomy.isthmus_cm
                );
            }
            _ => {
                let lobe = if side == Laterality::Right {
                    spec.anatomy.right_lobe_cm
                } else {
                    spec.anatomy.left_lobe_cm
                };
                let lower = title.to_lowercase();
                let _ = writeln!(
                    out,
                    "{}The {lower} thyroid lobe is homogeneous in background echotexture. The {lower} lobe measures {}. {count_text}",
                    if headerless { format!("{title} lobe: ") } else { String::new() },
                    dims_text(lobe)
                );
            }
        }
        out.push('\n');
        for (k, n) in side_nodules.iter().enumerate() {
            let _ = writeln!(
                out,
                "* {title} nodule #{}: {} The nodule {verb} {}.",
                k + 1,
                DESCRIPTIONS[(variant + k) % DESCRIPTIONS.len()],
                dims_text(n.dims)
            );
            out.push('\n');
        }
        if !side_nodules.is_empty() {
            impression.push(format!(
                "{} {} thyroid nodule{} as above.",
                side_nodules.len(),
                title.to_lowercase(),
                if side_nodules.len() == 1 { "" } else { "s" }
            ));
        }
    }
    let _ = writeln!(out, "Impression:");
    out.push('\n');
    if impression.is_empty() {
        impression.push("No thyroid nodules.".into());
    }
    for (i, line) in impression.iter().enumerate() {
        let _ = writeln!(out, "{}. {line}", i + 1);
    }
    Some(out)
}
