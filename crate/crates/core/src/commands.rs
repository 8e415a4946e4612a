//! Drivers behind the `analyze`, `simulate` and `report` subcommands.
//! Every driver computes its outputs in memory, stages the files in a
//! scratch directory and moves them into place only once all are written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{RunConfig, SimulationConfig};
use crate::data::{load_observation_set, LoadOptions};
use crate::error::{Error, Result};
use crate::pipeline::analyze_observations;
use crate::report::{
    build_report, fmt_full, read_report, render_hyperparameters, render_report, render_topk, rerank, Precision,
};
use crate::simulation::{render_run_tsv, render_summary_tsv, run_replicates};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Runs `f` on a dedicated pool of `workers` threads (0 = one per core).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    Ok(pool.install(f))
}

/// Writes named files into `out`, all or nothing.
fn publish(out: &Path, files: &[(&str, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let staging = out.join(format!(".modtmle-staging-{}", std::process::id()));
    let result = (|| -> Result<Vec<PathBuf>> {
        fs::create_dir_all(&staging)?;
        for (name, body) in files {
            fs::write(staging.join(name), body)?;
        }
        let mut paths = Vec::with_capacity(files.len());
        for (name, _) in files {
            let dest = out.join(name);
            fs::rename(staging.join(name), &dest)?;
            paths.push(dest);
        }
        Ok(paths)
    })();
    let _ = fs::remove_dir_all(&staging);
    if result.is_err() {
        for (name, _) in files {
            let _ = fs::remove_file(out.join(name));
        }
    }
    result
}

fn echo_config(body: String) -> Vec<u8> {
    format!("# modtmle {VERSION}\n{body}").into_bytes()
}

pub fn run_analyze(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let analysis = cfg.validate()?;
    let mut opts = LoadOptions::new(cfg.exposure.clone(), cfg.confounders.clone());
    opts.id_column = cfg.id_column.clone();
    let obs = load_observation_set::<f64>(&cfg.expression, &cfg.phenotype, &opts)?;
    log::info!(
        "loaded {} biomarkers on {} subjects ({} exposed)",
        obs.n_biomarkers(),
        obs.n(),
        obs.a().count_exposed()
    );
    let result = with_workers(cfg.workers, || analyze_observations(&obs, &analysis))??;
    let rows = build_report(&result, cfg.analysis.fdr);

    let mut log_text = String::new();
    let _ = writeln!(log_text, "modtmle {VERSION}");
    let _ = writeln!(log_text, "subjects = {}", obs.n());
    let _ = writeln!(log_text, "exposed = {}", obs.a().count_exposed());
    let _ = writeln!(log_text, "biomarkers = {}", obs.n_biomarkers());
    let _ = writeln!(log_text, "folds = {} (seed {})", result.folds.v(), result.folds.seed());
    let _ = writeln!(log_text, "propensity_fallback = {}", result.propensity.fallback_used);
    let g = &result.propensity.g1;
    let truncated = g
        .iter()
        .filter(|&&v| v <= result.propensity.bounds.0 || v >= result.propensity.bounds.1)
        .count();
    let _ = writeln!(log_text, "propensity_at_bounds = {truncated}");
    if let Some(h) = &result.moderated.hyper {
        let wt = h.row_weight(result.moderated.d_b as f64);
        let _ = writeln!(log_text, "shrinkage_weight_wt = {}", fmt_full(wt));
    }
    let significant = rows.iter().filter(|r| r.is_significant()).count();
    let _ = writeln!(log_text, "significant_at_fdr_{} = {significant}", cfg.analysis.fdr);
    for note in &result.notes {
        let _ = writeln!(log_text, "note: {note}");
    }
    if cfg.report_initial {
        let _ = writeln!(log_text, "biomarker_id\tpsi_initial\tpsi_targeted\tepsilon");
        for (id, f) in result.biomarker_ids.iter().zip(&result.fits) {
            let _ = writeln!(
                log_text,
                "{id}\t{}\t{}\t{}",
                fmt_full(f.psi_initial),
                fmt_full(f.psi),
                fmt_full(f.epsilon)
            );
        }
    }

    publish(
        &cfg.out,
        &[
            ("report.tsv", render_report(&rows, Precision::Short).into_bytes()),
            ("full.tsv", render_report(&rows, Precision::Full).into_bytes()),
            ("topk_matrix.tsv", render_topk(&result, &obs, cfg.top_k).into_bytes()),
            ("hyperparams.txt", render_hyperparameters(&result).into_bytes()),
            ("config.toml", echo_config(cfg.to_toml())),
            ("run.log", log_text.into_bytes()),
        ],
    )
}

pub fn run_simulate(sim: &SimulationConfig, out: &Path, workers: usize) -> Result<Vec<PathBuf>> {
    let analysis = sim.validate()?;
    let summary = with_workers(workers, || {
        run_replicates::<f64>(&sim.dgp, sim.replicates, &analysis, sim.analysis.fdr)
    })??;
    publish(
        out,
        &[
            ("summary.tsv", render_summary_tsv(&summary).into_bytes()),
            ("run.tsv", render_run_tsv(&summary).into_bytes()),
            ("config.toml", echo_config(sim.to_toml())),
        ],
    )
}

pub fn run_report(input: &Path, out: &Path, fdr_q: f64) -> Result<Vec<PathBuf>> {
    let rows = rerank(read_report(input)?, fdr_q)?;
    publish(
        out,
        &[
            ("report.tsv", render_report(&rows, Precision::Short).into_bytes()),
            ("full.tsv", render_report(&rows, Precision::Full).into_bytes()),
        ],
    )
}
