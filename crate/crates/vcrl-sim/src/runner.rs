//! Multi-seed experiment driver: runs (mode, seed) jobs on a bounded worker
//! pool, writes per-run CSVs and the aggregate summary, and renders plots.
//! Aggregation is order-independent: results are sorted by (mode, seed)
//! before anything is written.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use crate::config::{Mode, SimConfig};
use crate::engine::run_simulation;
use crate::metrics::{MetricsLog, Summary};
use crate::plot;

pub struct RunOutput {
    pub mode: Mode,
    pub seed: u64,
    pub log: MetricsLog,
    pub summary: Summary,
}

/// Worker count: `CRL_SIM_THREADS` if set, else available parallelism,
/// never more than the job count.
fn worker_count(jobs: usize) -> usize {
    let env_cap = std::env::var("CRL_SIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n >= 1);
    let hw = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    env_cap.unwrap_or(hw).min(jobs.max(1))
}

pub fn run_sweep(
    cfg: &SimConfig,
    modes: &[Mode],
    seeds: &[u64],
) -> Result<Vec<RunOutput>, String> {
    let jobs: Vec<(Mode, u64)> = modes
        .iter()
        .flat_map(|m| seeds.iter().map(move |s| (*m, *s)))
        .collect();
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<RunOutput>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let errors: Mutex<Vec<String>> = Mutex::new(Vec::new());

    std::thread::scope(|scope| {
        for _ in 0..worker_count(jobs.len()) {
            scope.spawn(|| loop {
                let idx = {
                    let mut n = next.lock().expect("job lock");
                    let idx = *n;
                    *n += 1;
                    idx
                };
                let Some(&(mode, seed)) = jobs.get(idx) else {
                    break;
                };
                match run_simulation(cfg, mode, seed) {
                    Ok(log) => {
                        let summary = log.summary();
                        results
                            .lock()
                            .expect("result lock")
                            .push(RunOutput { mode, seed, log, summary });
                    }
                    Err(e) => errors
                        .lock()
                        .expect("error lock")
                        .push(format!("{} seed {seed}: {e}", mode.as_str())),
                }
            });
        }
    });

    let errors = errors.into_inner().expect("error lock");
    if let Some(first) = errors.first() {
        return Err(first.clone());
    }
    let mut results = results.into_inner().expect("result lock");
    results.sort_by_key(|r| (r.mode.as_str(), r.seed));
    Ok(results)
}

pub const SUMMARY_HEADER: &str = "mode,seed,measured_vehicles,cognizant,cognizant_fraction,failure_ratio,mean_delay_s,p50_s,p90_s,p95_s,p99_s,total_pieces,p95_vs_baseline";

pub fn summary_csv(results: &[RunOutput]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    let baseline_p95 = |seed: u64| {
        results
            .iter()
            .find(|r| r.mode == Mode::Baseline && r.seed == seed)
            .and_then(|r| r.summary.delay_quantiles_s.p95)
    };
    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
    for r in results {
        let s = &r.summary;
        let ratio = if r.mode == Mode::VehicleCentric {
            match (s.delay_quantiles_s.p95, baseline_p95(r.seed)) {
                (Some(vc), Some(base)) if base > 0.0 => format!("{:.4}", vc / base),
                _ => String::new(),
            }
        } else {
            String::new()
        };
        writeln!(
            out,
            "{},{},{},{},{:.4},{:.4},{},{},{},{},{},{},{}",
            s.mode,
            s.seed,
            s.measured_vehicles,
            s.cognizant,
            s.cognizant_fraction,
            s.failure_ratio,
            fmt_opt(s.mean_delay_s),
            fmt_opt(s.delay_quantiles_s.p50),
            fmt_opt(s.delay_quantiles_s.p90),
            fmt_opt(s.delay_quantiles_s.p95),
            fmt_opt(s.delay_quantiles_s.p99),
            s.total_pieces,
            ratio,
        )
        .expect("string write");
    }
    out
}

/// Write every artifact for a finished sweep under `out_dir`.
pub fn write_outputs(results: &[RunOutput], out_dir: &Path) -> Result<(), String> {
    fs::create_dir_all(out_dir).map_err(|e| format!("create {}: {e}", out_dir.display()))?;
    let write = |name: &str, data: &str| -> Result<(), String> {
        fs::write(out_dir.join(name), data).map_err(|e| format!("write {name}: {e}"))
    };

    for r in results {
        let tag = format!("{}_seed{}", r.mode.as_str(), r.seed);
        write(&format!("metrics_{tag}.csv"), &r.log.to_csv())?;
        write(&format!("cognizant_{tag}.csv"), &r.log.series_csv())?;
        if let Some(delta) = r.log.delta_csv() {
            write(&format!("delta_{tag}.csv"), &delta)?;
        }
    }
    write("summary.csv", &summary_csv(results))?;

    let summaries: Vec<&Summary> = results.iter().map(|r| &r.summary).collect();
    let json = serde_json::to_string_pretty(&summaries)
        .map_err(|e| format!("summary json: {e}"))?;
    write("summary.json", &(json + "\n"))?;

    // Plots are best-effort: the data files are the contract.
    for r in results {
        let tag = format!("{}_seed{}", r.mode.as_str(), r.seed);
        if let Err(e) = plot::write_run_plots(&r.log, out_dir, &tag) {
            eprintln!("warning: plot for {tag} failed: {e}");
        }
    }
    Ok(())
}

pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| format!("bad seed '{part}'"))?;
            let b: u64 = b.trim().parse().map_err(|_| format!("bad seed '{part}'"))?;
            if b < a {
                return Err(format!("empty seed range '{part}'"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad seed '{part}'"))?);
        }
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("1,2,3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("5..8").unwrap(), vec![5, 6, 7, 8]);
        assert_eq!(parse_seeds("3,1..2,3").unwrap(), vec![1, 2, 3]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("8..5").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
