//! Command-line front end: scenario generation, replay, metrics and timing.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::log::{read_log, write_log, SensorEvent};
use crate::metrics::{compute_metrics, read_estimates, read_truth, stiffness_convergence_time, MetricsReport, TimingStats};
use crate::mhe::{run_events, write_estimates, Estimator, RunOutput, Termination};
use crate::simgen::{preset, run_scenario, write_truth_csv};
use crate::{TireParamSet, VehicleConfig};

/// Relative tolerance on BCD used for the reported convergence time.
const CONVERGENCE_TOL: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "radgrip", version, about = "Radar-aided race-car state and tire estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a preset scenario into a sensor log and a truth CSV.
    Sim {
        scenario: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Replay a sensor log through the estimator.
    Estimate {
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON tire parameters overriding `tire_init`.
        #[arg(long)]
        params_init: Option<PathBuf>,
        #[arg(long, default_value = "estimate.csv")]
        out: PathBuf,
    },
    /// Compare an estimate CSV against a truth CSV.
    Metrics {
        estimate: PathBuf,
        truth: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON truth tire parameters, enables the convergence time.
        #[arg(long)]
        truth_params: Option<PathBuf>,
        /// Where to write the JSON report (printed when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time repeated replays of a log.
    Bench {
        log: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        params_init: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Reproducibility record written next to simulated files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub seed: u64,
    pub config_sha256: String,
    /// File name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub repetitions: usize,
    pub solves_per_run: usize,
    pub per_solve: Option<TimingStats>,
    pub per_tick: Option<TimingStats>,
    pub max_iterations_seen: usize,
    /// Solves cut short by the wall-clock cap, summed over repetitions.
    pub time_capped: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_config(path: Option<&Path>) -> Result<VehicleConfig> {
    match path {
        Some(p) => VehicleConfig::load(p).map_err(|e| match e {
            Error::Io(m) => Error::Io(format!("{}: {m}", p.display())),
            other => other,
        }),
        None => Ok(VehicleConfig::default()),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn read_params(path: &Path) -> Result<TireParamSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn params_json(p: &TireParamSet) -> String {
    serde_json::to_string_pretty(p).expect("params serialize") + "\n"
}

pub fn read_log_file(path: &Path) -> Result<Vec<SensorEvent>> {
    read_log(BufReader::new(open(path)?))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], files: &mut BTreeMap<String, String>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    files.insert(name.to_string(), sha256_hex(bytes));
    Ok(())
}

/// Writes `<scenario>.log`, `<scenario>_truth.csv`, the truth tire
/// parameters, the estimator's starting parameters when the scenario
/// randomizes them, and `manifest.json`.
pub fn cmd_sim(scenario: &str, cfg: &VehicleConfig, seed: u64, out: &Path) -> Result<Manifest> {
    let sc = preset(scenario, seed, cfg)?;
    let run = run_scenario(&sc, cfg)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;

    let mut files = BTreeMap::new();
    let mut log = Vec::new();
    write_log(&mut log, &run.events)?;
    write_file(out, &format!("{}.log", sc.name), &log, &mut files)?;
    let mut truth = Vec::new();
    write_truth_csv(&mut truth, &run.truth)?;
    write_file(out, &format!("{}_truth.csv", sc.name), &truth, &mut files)?;
    write_file(
        out,
        &format!("{}_truth_params.json", sc.name),
        params_json(&sc.truth_params).as_bytes(),
        &mut files,
    )?;
    if let Some(p) = &run.initial_params {
        write_file(out, &format!("{}_params_init.json", sc.name), params_json(p).as_bytes(), &mut files)?;
    }
    let manifest = Manifest {
        scenario: sc.name.clone(),
        seed,
        config_sha256: sha256_hex(cfg.to_toml_string().as_bytes()),
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(out.join("manifest.json"), text).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    Ok(manifest)
}

/// Replays `log` and writes one CSV row per grid state.
pub fn cmd_estimate(log: &Path, cfg: &VehicleConfig, params: Option<TireParamSet>, out: &Path) -> Result<RunOutput> {
    let events = read_log_file(log)?;
    let run = run_events(&events, cfg, params)?;
    let mut w = create(out)?;
    write_estimates(&mut w, &run.rows)?;
    w.flush()?;
    Ok(run)
}

pub fn estimate_summary(run: &RunOutput) -> String {
    let mut s = format!("rows {}  solves {}\n", run.rows.len(), run.reports.len());
    if let Some(t) = TimingStats::of_reports(&run.reports) {
        s += &format!(
            "solve time ms: mean {:.3} p50 {:.3} p99 {:.3} max {:.3}\n",
            t.mean * 1e3,
            t.p50 * 1e3,
            t.p99 * 1e3,
            t.max * 1e3
        );
    }
    for w in &run.warnings {
        s += &format!("warning: {w}\n");
    }
    s
}

pub fn cmd_metrics(
    estimate: &Path,
    truth: &Path,
    cfg: &VehicleConfig,
    truth_params: Option<&TireParamSet>,
) -> Result<MetricsReport> {
    let rows = read_estimates(open(estimate)?)?;
    let truth = read_truth(open(truth)?)?;
    let mut report = compute_metrics(&rows, &truth, cfg.thresholds.V_Fy_min)?;
    if let Some(p) = truth_params {
        report.param_convergence_time = stiffness_convergence_time(&rows, p, CONVERGENCE_TOL);
    }
    Ok(report)
}

/// Replays the log `repetitions` times. Timing varies between runs, the
/// cost trajectory must not, unless the wall-clock cap cut a solve short.
pub fn cmd_bench(
    log: &Path,
    cfg: &VehicleConfig,
    params: Option<TireParamSet>,
    repetitions: usize,
) -> Result<BenchReport> {
    if repetitions == 0 {
        return Err(Error::Usage("repetitions must be at least 1".into()));
    }
    let events = read_log_file(log)?;
    let mut sorted = events.clone();
    crate::log::sort_by_arrival(&mut sorted);
    let cfg = crate::config::validate_config(cfg.clone())?;

    let mut per_solve = Vec::new();
    let mut per_tick = Vec::new();
    let mut reference: Option<Vec<f64>> = None;
    let mut solves = 0;
    let mut max_iter = 0;
    let mut capped = 0;
    let mut any_capped = false;
    for _ in 0..repetitions {
        let mut est = match params {
            Some(p) => Estimator::with_params(p, cfg.clone()),
            None => Estimator::new(cfg.clone())?,
        };
        for e in &sorted {
            let before = est.reports.len();
            let t0 = Instant::now();
            est.process(e)?;
            if est.reports.len() > before {
                per_tick.push(t0.elapsed().as_secs_f64());
            }
        }
        est.finish();
        let run_capped = est.reports.iter().filter(|r| r.termination == Termination::TimeCap).count();
        capped += run_capped;
        any_capped |= run_capped > 0;
        let costs: Vec<f64> = est.reports.iter().map(|r| r.final_cost).collect();
        match &reference {
            None => reference = Some(costs),
            Some(c) if *c != costs && !any_capped => {
                return Err(Error::Numeric("cost trajectory differs between repetitions".into()))
            }
            _ => {}
        }
        solves = est.reports.len();
        max_iter = est.reports.iter().map(|r| r.iterations).max().unwrap_or(0).max(max_iter);
        per_solve.extend(est.reports.iter().map(|r| r.wall_time));
    }
    Ok(BenchReport {
        repetitions,
        solves_per_run: solves,
        per_solve: TimingStats::from_samples(&per_solve),
        per_tick: TimingStats::from_samples(&per_tick),
        max_iterations_seen: max_iter,
        time_capped: capped,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Runs one parsed command, printing human output to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sim {
            scenario,
            config,
            seed,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let m = cmd_sim(&scenario, &cfg, seed, &out)?;
            for (name, hash) in &m.files {
                println!("{hash}  {}", out.join(name).display());
            }
        }
        Command::Estimate {
            log,
            config,
            params_init,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let params = params_init.as_deref().map(read_params).transpose()?;
            let run = cmd_estimate(&log, &cfg, params, &out)?;
            print!("{}", estimate_summary(&run));
        }
        Command::Metrics {
            estimate,
            truth,
            config,
            truth_params,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let tp = truth_params.as_deref().map(read_params).transpose()?;
            let report = cmd_metrics(&estimate, &truth, &cfg, tp.as_ref())?;
            print!("{}", report.table());
            match out {
                Some(p) => write_text(&p, &(report.to_json() + "\n"))?,
                None => println!("{}", report.to_json()),
            }
        }
        Command::Bench {
            log,
            config,
            params_init,
            repetitions,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let params = params_init.as_deref().map(read_params).transpose()?;
            let report = cmd_bench(&log, &cfg, params, repetitions)?;
            let json = serde_json::to_string_pretty(&report).expect("bench report serializes");
            let line = |name: &str, t: &Option<TimingStats>| {
                if let Some(t) = t {
                    println!(
                        "{name:<10} n {:>7}  mean {:.3} ms  p50 {:.3}  p99 {:.3}  max {:.3}",
                        t.count,
                        t.mean * 1e3,
                        t.p50 * 1e3,
                        t.p99 * 1e3,
                        t.max * 1e3
                    );
                }
            };
            line("per solve", &report.per_solve);
            line("per tick", &report.per_tick);
            println!(
                "max iterations {}  time-capped solves {}",
                report.max_iterations_seen, report.time_capped
            );
            if let Some(p) = out {
                write_text(&p, &(json + "\n"))?;
            }
        }
    }
    Ok(())
}

/// Parses `args` and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_subcommand() {
        for args in [
            vec!["radgrip", "sim", "dlc65", "--seed", "3", "--out", "x"],
            vec!["radgrip", "estimate", "a.log", "--params-init", "p.json"],
            vec!["radgrip", "metrics", "e.csv", "t.csv"],
            vec!["radgrip", "bench", "a.log", "--repetitions", "2"],
        ] {
            assert!(Cli::try_parse_from(args).is_ok());
        }
    }

    #[test]
    fn bad_arguments_exit_with_usage_code() {
        assert_eq!(main_with_args(["radgrip", "sim"]), 1);
        assert_eq!(main_with_args(["radgrip", "frobnicate"]), 1);
    }

    #[test]
    fn zero_repetitions_is_a_usage_error() {
        let cfg = VehicleConfig::default();
        let e = cmd_bench(Path::new("missing.log"), &cfg, None, 0).unwrap_err();
        assert!(matches!(e, Error::Usage(_)));
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn missing_log_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let e = cmd_estimate(
            &dir.path().join("nope.log"),
            &VehicleConfig::default(),
            None,
            &dir.path().join("e.csv"),
        )
        .unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
