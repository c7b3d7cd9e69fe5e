//! Command-line entry point: corpus generation, pipeline runs, evaluation
//! and single-artifact debugging.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use thyrolabel::caliper::{detect_calipers, CaliperConfig};
use thyrolabel::corpus::{gen_corpus, load_manifest, GeneratorConfig};
use thyrolabel::error::{Error, Result};
use thyrolabel::metrics::evaluate;
use thyrolabel::ocr::ImageText;
use thyrolabel::path_parser::{parse_pathology_with, PathologyRules};
use thyrolabel::pipeline::{parse_results_jsonl, run_corpus, PipelineConfig};
use thyrolabel::rad_parser::extract_nodule_measurements;
use thyrolabel::{GlyphFont, Laterality, Raster};

#[derive(Parser)]
#[command(name = "thyrolabel", version, about = "Label thyroid nodule ultrasound image pairs from reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with ground-truth manifest.
    Gen {
        /// Generator configuration (JSON); missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_cases: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline over a corpus directory.
    Run {
        #[arg(long, env = "THYROLABEL_CORPUS")]
        corpus: PathBuf,
        /// Results file (JSON lines, one case per line).
        #[arg(long)]
        out: PathBuf,
        /// Pipeline configuration (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[arg(long)]
        crop_ratio: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        window_days: Option<i64>,
        #[arg(long)]
        tol_cm: Option<f64>,
        /// Run log; defaults to `<out stem>.diagnostics.log`.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Score results against a manifest; writes the report and table CSVs.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a pathology report and print its nodule records.
    ParsePath {
        file: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Print the nodule measurements of one side of a radiology report.
    ParseRad {
        file: PathBuf,
        #[arg(long)]
        side: String,
    },
    /// Detect calipers in a PGM frame.
    Detect {
        image: PathBuf,
        #[arg(long)]
        crop_ratio: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Read the banner and measurements of a PGM frame.
    Ocr { image: PathBuf },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })
}

fn caliper_config(crop_ratio: Option<f64>, threshold: Option<f64>, base: CaliperConfig) -> CaliperConfig {
    CaliperConfig {
        crop_ratio: crop_ratio.unwrap_or(base.crop_ratio),
        score_threshold: threshold.unwrap_or(base.score_threshold),
        ..base
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen {
            config,
            seed,
            n_cases,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => GeneratorConfig::from_json(&read_text(&p)?)?,
                None => GeneratorConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = n_cases {
                cfg.n_cases = n;
            }
            let manifest = gen_corpus(&cfg, &out)?;
            eprintln!("wrote {} cases to {}", manifest.cases.len(), out.display());
        }
        Command::Run {
            corpus,
            out,
            config,
            parallelism,
            crop_ratio,
            threshold,
            window_days,
            tol_cm,
            diagnostics,
        } => {
            let mut cfg: PipelineConfig = match config {
                Some(p) => parse_json(&p)?,
                None => PipelineConfig::default(),
            };
            cfg.caliper = caliper_config(crop_ratio, threshold, cfg.caliper);
            if let Some(d) = window_days {
                cfg.window.max_gap_days = d;
            }
            if let Some(t) = tol_cm {
                cfg.tol_cm = t;
            }
            let output = run_corpus(&corpus, &cfg, parallelism)?;
            write_bytes(&out, output.results_jsonl().as_bytes())?;
            let log = diagnostics.unwrap_or_else(|| out.with_extension("diagnostics.log"));
            write_bytes(&log, output.diagnostics_log().as_bytes())?;
            eprintln!("{} case results written to {}", output.results.len(), out.display());
        }
        Command::Eval {
            results,
            manifest,
            out,
        } => {
            let results = parse_results_jsonl(&read_text(&results)?)?;
            let manifest = load_manifest(&manifest)?;
            let report = evaluate(&results, &manifest)?;
            write_bytes(&out, &report.to_json())?;
            let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
            write_bytes(&dir.join("table1.csv"), report.table1_csv().as_bytes())?;
            write_bytes(&dir.join("table2.csv"), report.table2_csv().as_bytes())?;
            write_bytes(&dir.join("table3.csv"), report.table3_csv().as_bytes())?;
            eprintln!(
                "yield {}/{} ({}%), accuracy {}",
                report.n_yield,
                report.n_truth_nodules,
                report.yield_pct(),
                report
                    .accuracy_pct()
                    .map_or_else(|| "n/a".to_string(), |a| format!("{a}%"))
            );
        }
        Command::ParsePath { file, rules } => {
            let rules = match rules {
                Some(p) => PathologyRules::load(p)?,
                None => PathologyRules::default(),
            };
            print_json(&parse_pathology_with(&read_text(&file)?, &rules));
        }
        Command::ParseRad { file, side } => {
            let side: Laterality = side.parse().map_err(Error::Validation)?;
            print_json(&extract_nodule_measurements(&read_text(&file)?, side));
        }
        Command::Detect {
            image,
            crop_ratio,
            threshold,
        } => {
            let cfg = caliper_config(crop_ratio, threshold, CaliperConfig::default());
            cfg.validate()?;
            print_json(&detect_calipers(&Raster::read_pgm(&image)?, &cfg)?);
        }
        Command::Ocr { image } => {
            #[derive(Serialize)]
            struct OcrOutput {
                banner: thyrolabel::ocr::BannerInfo,
                measurements: thyrolabel::ocr::MeasurementSet,
            }
            let text = ImageText::read(&Raster::read_pgm(&image)?, &GlyphFont::default());
            print_json(&OcrOutput {
                banner: text.banner(),
                measurements: text.measurements(),
            });
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
