//! Rendering whole cases and laying them out on disk.
//!
//! ```text
//! <out>/manifest.json
//! <out>/<case_id>/pathology.txt
//! <out>/<case_id>/radiology.txt          (cases with a diagnostic study)
//! <out>/<case_id>/studies/<study_id>/meta.json
//! <out>/<case_id>/studies/<study_id>/<image_id>.pgm
//! ```

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::generate::generate_case_spec;
use super::render::{render_image, SiteStyle};
use super::reports::{write_pathology_report, write_radiology_report};
use super::{generate_manifest, CaseSpec, CorpusManifest, GeneratedCase, GeneratorConfig};
use crate::error::{Error, Result};
use crate::font::GlyphFont;
use crate::study::StudyMeta;

pub const MANIFEST_FILE: &str = "manifest.json";

fn render_case(spec: CaseSpec, font: &GlyphFont) -> Result<GeneratedCase> {
    let style = SiteStyle::for_site(&spec.site);
    let images = spec
        .studies
        .iter()
        .map(|s| s.images.iter().map(|i| render_image(i, font, style)).collect())
        .collect::<Result<Vec<Vec<_>>>>()?;
    Ok(GeneratedCase {
        pathology: write_pathology_report(&spec),
        radiology: write_radiology_report(&spec),
        spec,
        images,
    })
}

/// Case `index` of the corpus described by `cfg`, fully rendered.
pub fn generate_case(cfg: &GeneratorConfig, index: usize) -> Result<GeneratedCase> {
    cfg.validate()?;
    render_case(generate_case_spec(cfg, index), &GlyphFont::default())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_case(case: &GeneratedCase, out: &Path) -> Result<()> {
    let dir = out.join(&case.spec.case_id);
    create_dir(&dir)?;
    write_file(&dir.join("pathology.txt"), case.pathology.as_bytes())?;
    if let Some(r) = &case.radiology {
        write_file(&dir.join("radiology.txt"), r.as_bytes())?;
    }
    for (study, frames) in case.spec.studies.iter().zip(&case.images) {
        let sdir = dir.join("studies").join(&study.study_id);
        create_dir(&sdir)?;
        let meta = StudyMeta {
            kind: study.kind,
            date: study.date,
            site: case.spec.site.clone(),
        };
        let mut json = serde_json::to_vec_pretty(&meta).map_err(|e| Error::json("study meta", e))?;
        json.push(b'\n');
        write_file(&sdir.join("meta.json"), &json)?;
        for (img, raster) in study.images.iter().zip(frames) {
            raster.write_pgm(sdir.join(format!("{}.pgm", img.image_id)))?;
        }
    }
    Ok(())
}

/// Generates, renders and writes the corpus; returns its manifest.
/// Output is byte-identical for identical configurations.
pub fn gen_corpus(cfg: &GeneratorConfig, out: impl AsRef<Path>) -> Result<CorpusManifest> {
    let out = out.as_ref();
    let manifest = generate_manifest(cfg)?;
    create_dir(out)?;
    let font = GlyphFont::default();
    manifest.cases.par_iter().try_for_each(|spec| {
        let case = render_case(spec.clone(), &font)?;
        write_case(&case, out)
    })?;
    write_file(&out.join(MANIFEST_FILE), &manifest.to_json())?;
    Ok(manifest)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest> {
    let mut path = path.as_ref().to_path_buf();
    if path.is_dir() {
        path = path.join(MANIFEST_FILE);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}
