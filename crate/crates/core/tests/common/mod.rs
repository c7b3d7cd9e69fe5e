#![allow(dead_code)]

pub mod fixture;

use thyrolabel::corpus::{generate_case, generate_manifest, CorpusManifest, GeneratorConfig, NoiseProfile};
use thyrolabel::metrics::{evaluate, EvalReport};
use thyrolabel::pipeline::{run_cases, CaseInputs, PipelineConfig, RunOutput};

pub fn config(n_cases: usize, seed: u64, noise: NoiseProfile) -> GeneratorConfig {
    GeneratorConfig {
        n_cases,
        seed,
        noise,
        ..GeneratorConfig::default()
    }
}

/// Renders every case in memory and runs the pipeline over it.
pub fn run_in_memory(cfg: &GeneratorConfig, parallelism: usize) -> (CorpusManifest, RunOutput, EvalReport) {
    let manifest = generate_manifest(cfg).expect("valid config");
    let out = run_cases(
        cfg.n_cases,
        |i| generate_case(cfg, i).map(CaseInputs::from_generated),
        &PipelineConfig::default(),
        parallelism,
    )
    .expect("run succeeds");
    let report = evaluate(&out.results, &manifest).expect("evaluation succeeds");
    (manifest, out, report)
}
