use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use modtmle::commands::{run_analyze, run_report, run_simulate};
use modtmle::config::{AnalysisSettings, RunConfig, SimulationConfig};
use modtmle::learners::default_library;
use modtmle::Error;

#[derive(Parser)]
#[command(name = "modtmle", version, about = "TMLE biomarker screening with moderated inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate and rank per-biomarker exposure effects
    Analyze(AnalyzeArgs),
    /// Run a simulation study from a config file
    Simulate(SimulateArgs),
    /// Re-adjust and re-rank a previous report
    Report(ReportArgs),
}

fn parse_bounds(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected lo,hi but got {s:?}"));
    }
    let lo = parts[0].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = parts[1].trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok([lo, hi])
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Biomarker-by-subject expression table (TSV)
    #[arg(long)]
    expression: PathBuf,
    /// Subject phenotype table (TSV) with exposure and confounders
    #[arg(long)]
    phenotype: PathBuf,
    /// Name of the binary exposure column
    #[arg(long)]
    exposure: String,
    /// Comma-separated confounder columns
    #[arg(long, default_value = "")]
    confounders: String,
    #[arg(long, default_value = "id")]
    id_column: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// CV folds (default 10, or 5 below 50 subjects)
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Propensity truncation bounds
    #[arg(long, value_parser = parse_bounds, default_value = "0.025,0.975")]
    g_bounds: [f64; 2],
    /// Comma-separated learner library
    #[arg(long)]
    learners: Option<String>,
    /// weighted or discrete
    #[arg(long, default_value = "weighted")]
    selection: String,
    /// one-sample, two-group or off
    #[arg(long, default_value = "one-sample")]
    moderation: String,
    #[arg(long, default_value_t = 0.05)]
    fdr: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Rows of the influence matrix exported for the heatmap
    #[arg(long, default_value_t = 50)]
    top_k: usize,
    /// Worker threads (0 = one per core)
    #[arg(long, env = "MODTMLE_WORKERS", default_value_t = 0)]
    workers: usize,
    /// Log the untargeted substitution estimate next to the targeted one
    #[arg(long)]
    report_initial: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation config (TOML)
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override the replicate count of the config
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, env = "MODTMLE_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// report.tsv or full.tsv from a previous run
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    fdr: f64,
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, Error> {
    match cli.command {
        Command::Analyze(a) => {
            let learners = match &a.learners {
                Some(list) => split_list(list),
                None => default_library().iter().map(|l| l.to_string()).collect(),
            };
            let cfg = RunConfig {
                expression: a.expression,
                phenotype: a.phenotype,
                exposure: a.exposure,
                confounders: split_list(&a.confounders),
                id_column: a.id_column,
                out: a.out,
                top_k: a.top_k,
                workers: a.workers,
                report_initial: a.report_initial,
                analysis: AnalysisSettings {
                    folds: a.folds,
                    seed: a.seed,
                    g_bounds: a.g_bounds,
                    learners,
                    selection: a.selection,
                    moderation: a.moderation,
                    alpha: a.alpha,
                    fdr: a.fdr,
                },
            };
            run_analyze(&cfg)
        }
        Command::Simulate(s) => {
            let mut sim = SimulationConfig::load(&s.config)?;
            if let Some(r) = s.replicates {
                sim.replicates = r;
            }
            run_simulate(&sim, &s.out, s.workers)
        }
        Command::Report(r) => run_report(&r.input, &r.out, r.fdr),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
