//! The `run` subcommand: Monte Carlo execution and result files.

use std::path::Path;
use std::process::ExitCode;

use mmwave_slam::config::ExperimentConfig;
use mmwave_slam::filter::Linearizer;
use mmwave_slam::sim::{
    overall_csv, overall_summary, per_step_csv, run_monte_carlo, summary_csv,
};

use crate::manifest::{
    RunManifest, CONFIG_ECHO_FILE, OVERALL_FILE, SUMMARY_FILE,
};
use crate::FilterKind;

pub fn run(
    config_path: Option<&Path>,
    filter: FilterKind,
    runs: usize,
    seed: Option<u64>,
    gamma: Option<usize>,
    out: &Path,
) -> ExitCode {
    let mut cfg = match config_path {
        Some(path) => match ExperimentConfig::from_path(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.scenario.seed = seed;
    }
    if let Some(gamma) = gamma {
        if gamma == 0 {
            eprintln!("error: configuration error: filter.gamma must be at least 1");
            return ExitCode::from(2);
        }
        cfg.filter.gamma = gamma;
    }
    if runs == 0 {
        eprintln!("error: configuration error: --runs must be at least 1");
        return ExitCode::from(2);
    }

    let linearizer = match filter {
        FilterKind::Ek => Linearizer::Prior,
        FilterKind::Ipl => Linearizer::Posterior,
    };
    let results = match run_monte_carlo(&cfg, linearizer, runs) {
        Ok(results) => results,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for (run, message) in &results.failures {
        eprintln!("run {run} failed: {message}");
    }
    if results.runs.is_empty() {
        eprintln!("error: all {runs} runs diverged");
        return ExitCode::from(3);
    }

    if let Err(e) = write_outputs(&cfg, filter, runs, &results, out) {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    let summary = overall_summary(&results).expect("non-empty results");
    println!(
        "{} filter, {} runs x {} steps: pos RMSE {:.4} m, heading RMSE {:.4} deg, \
         bias RMSE {:.4} m, final-10 VA GOSPA {:.4} m, mean iterations {:.2}",
        filter.label(),
        summary.runs,
        summary.steps,
        summary.pos_rmse,
        summary.heading_rmse_deg,
        summary.bias_rmse,
        summary.final10_gospa_va,
        summary.mean_iplf_iters
    );
    println!("results written to {}", out.display());
    ExitCode::SUCCESS
}

fn write_outputs(
    cfg: &ExperimentConfig,
    filter: FilterKind,
    runs: usize,
    results: &mmwave_slam::sim::MonteCarloResults,
    out: &Path,
) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(CONFIG_ECHO_FILE), cfg.to_toml_string())?;
    let mut run_files = Vec::with_capacity(results.runs.len());
    for record in &results.runs {
        let name = format!("run{:03}.csv", record.run);
        std::fs::write(out.join(&name), per_step_csv(record))?;
        run_files.push(name);
    }
    std::fs::write(out.join(SUMMARY_FILE), summary_csv(results))?;
    let summary = overall_summary(results).expect("non-empty results");
    std::fs::write(out.join(OVERALL_FILE), overall_csv(&summary))?;

    // The manifest is written last: its presence marks a complete run.
    let manifest = RunManifest {
        schema: "mmwave-slam-run/1".to_string(),
        filter: filter.label().to_string(),
        seed: cfg.scenario.seed,
        runs,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: CONFIG_ECHO_FILE.to_string(),
        summary: SUMMARY_FILE.to_string(),
        overall: OVERALL_FILE.to_string(),
        run_files,
        failures: results
            .failures
            .iter()
            .map(|(run, msg)| format!("run {run}: {msg}"))
            .collect(),
    };
    manifest.save(out)
}
