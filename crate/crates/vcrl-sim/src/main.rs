//! `vcrl` — experiment runner and analysis front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vcrl_sim::config::{Mode, SimConfig};
use vcrl_sim::{analyze, runner, vectors};

#[derive(Parser)]
#[command(name = "vcrl", about = "Vehicular CRL distribution: simulator and calculators", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario across seeds and write metrics, summaries, and plots.
    Simulate(SimulateArgs),
    /// Analytical calculators (false positives, forgery cost, sizes, sync).
    Analyze(AnalyzeArgs),
    /// Emit golden protocol vectors as hex JSON.
    Vectors(VectorsArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario config file (key = value lines; see docs/config.md).
    #[arg(long)]
    config: PathBuf,
    /// Scheme to simulate; `both` runs baseline and vehicle-centric.
    #[arg(long, default_value = "vehicle_centric")]
    mode: CliMode,
    /// Seed list/ranges, e.g. `1,2,5..8`. Overrides the config seed.
    #[arg(long)]
    seeds: Option<String>,
    /// Single seed shorthand.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    #[value(name = "vehicle_centric")]
    VehicleCentric,
    #[value(name = "baseline")]
    Baseline,
    #[value(name = "both")]
    Both,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(subcommand)]
    kind: AnalyzeKind,
    /// Also write the table as CSV to this path.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AnalyzeKind {
    /// False-positive probability of a fixed filter as items grow.
    Fp {
        #[arg(long, default_value_t = 800)]
        m: u64,
        #[arg(long, default_value_t = 67)]
        k: u32,
        #[arg(long, default_value_t = 10)]
        n_max: u64,
    },
    /// Query-only forgery time for (p, k) pairs.
    AttackCost {
        /// Comma-separated probabilities, e.g. `1e-20,1e-22`.
        #[arg(long, default_value = "1e-20,1e-22,1e-23")]
        p: String,
        /// Comma-separated hash counts, matched pairwise with --p.
        #[arg(long, default_value = "67,73,76")]
        k: String,
        #[arg(long, default_value_t = 1.6e18)]
        hashrate: f64,
    },
    /// Fingerprint bytes vs concatenated hash digests.
    FingerprintSize {
        #[arg(long, default_value_t = 20)]
        n_max: u64,
        #[arg(long, default_value = "1e-20,1e-25,1e-30")]
        p: String,
    },
    /// Clock resynchronization period.
    SyncPeriod {
        #[arg(long, default_value = "20")]
        ppm: String,
        #[arg(long, default_value_t = 1.0)]
        max_error_s: f64,
    },
}

#[derive(Args)]
struct VectorsArgs {
    /// Output directory for the vector JSON files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Analyze(args) => run_analyze(args),
        Command::Vectors(args) => match vectors::write_vectors(&args.out, args.seed) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}

fn simulate(args: SimulateArgs) -> ExitCode {
    let cfg = match SimConfig::parse_file(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let seeds = match (&args.seeds, args.seed) {
        (Some(spec), _) => match runner::parse_seeds(spec) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        (None, Some(seed)) => vec![seed],
        (None, None) => vec![cfg.seed],
    };
    let modes: Vec<Mode> = match args.mode {
        CliMode::VehicleCentric => vec![Mode::VehicleCentric],
        CliMode::Baseline => vec![Mode::Baseline],
        CliMode::Both => vec![Mode::Baseline, Mode::VehicleCentric],
    };
    let results = match runner::run_sweep(&cfg, &modes, &seeds) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = runner::write_outputs(&results, &args.out) {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    for r in &results {
        let s = &r.summary;
        eprintln!(
            "{} seed {}: cognizant {}/{} (failure {:.3}), p95 {}",
            s.mode,
            s.seed,
            s.cognizant,
            s.measured_vehicles,
            s.failure_ratio,
            s.delay_quantiles_s
                .p95
                .map(|v| format!("{v:.2}s"))
                .unwrap_or_else(|| "n/a".into()),
        );
    }
    ExitCode::SUCCESS
}

fn parse_list(name: &str, spec: &str) -> Result<Vec<f64>, String> {
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad {name} value '{s}'")))
        .collect()
}

fn run_analyze(args: AnalyzeArgs) -> ExitCode {
    let table = match &args.kind {
        AnalyzeKind::Fp { m, k, n_max } => Ok(analyze::fp_table(*m, *k, *n_max)),
        AnalyzeKind::AttackCost { p, k, hashrate } => {
            let ps = parse_list("p", p);
            let ks = parse_list("k", k);
            match (ps, ks) {
                (Ok(ps), Ok(ks)) if ps.len() == ks.len() => {
                    let pairs: Vec<(f64, u32)> =
                        ps.iter().zip(&ks).map(|(p, k)| (*p, *k as u32)).collect();
                    Ok(analyze::attack_cost_table(&pairs, *hashrate))
                }
                (Ok(_), Ok(_)) => Err("--p and --k need the same length".to_string()),
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        }
        AnalyzeKind::FingerprintSize { n_max, p } => parse_list("p", p)
            .and_then(|targets| analyze::fingerprint_size_table(*n_max, &targets)),
        AnalyzeKind::SyncPeriod { ppm, max_error_s } => {
            parse_list("ppm", ppm).map(|ppms| analyze::sync_period_table(&ppms, *max_error_s))
        }
    };
    match table {
        Ok(t) => {
            print!("{}", t.render());
            if let Some(path) = &args.csv {
                if let Err(e) = std::fs::write(path, t.to_csv()) {
                    eprintln!("error: write {}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
