//! Command-line front end. `main` only forwards to [`run`] so that the
//! whole command surface can be driven from tests.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use foaloc::harness::{
    self, compare_methods, details_to_csv, refinement_study, run_monte_carlo_detailed, sensitivity_study, ExperimentConfig,
    Sweep, TrialStatus,
};
use foaloc::scenario::{parse_entries, parse_point, Entry};
use foaloc::{ecef_to_geodetic, Error, Scenario};

/// Exit code for configuration and usage errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for failures while running.
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "foaloc", version, about = "Single-satellite frequency-of-arrival emitter localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Localize the emitter once and print the estimate.
    Locate(Common),
    /// Monte-Carlo RMSE over a swept parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "equations")]
        param: Param,
        /// `start:end[:step]` or a comma list; error pairs as `e_p/e_v`.
        #[arg(long)]
        values: String,
    },
    /// FoA against FDOA, gateway against on-board, over equation counts.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "2:10")]
        values: String,
    },
    /// Tenfold position and velocity error inflation.
    Sensitivity(Common),
    /// Iterative reference reselection from a pool of sites.
    Refine {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rounds: Option<usize>,
        /// Sites as `lon,lat,alt;lon,lat,alt;...`.
        #[arg(long)]
        pool: Option<String>,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    equations: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Scenario override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Report destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-trial detail CSV.
    #[arg(long)]
    detail: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Param {
    Equations,
    Velocity,
    Error,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Gateway,
    Onboard,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Foa,
    Fdoa,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse { .. } | Error::Io { .. } => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = if e.use_stderr() { write!(stderr, "{e}") } else { write!(stdout, "{e}") };
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(CliError::Config(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            EXIT_CONFIG
        }
        Err(CliError::Runtime(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            EXIT_RUNTIME
        }
    }
}

fn load(common: &Common, extra: Vec<Entry>) -> CliResult<Scenario> {
    let path = common.scenario.display().to_string();
    let text = std::fs::read_to_string(&common.scenario)
        .map_err(|e| CliError::Config(format!("cannot read scenario file {path}: {e}")))?;
    let mut entries = parse_entries(&text, &path)?;
    for o in &common.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("malformed override `{o}` for --set (expected key=value)")))?;
        entries.push(Entry { key: k.trim().to_string(), value: v.trim().to_string(), line: 0 });
    }
    let flag = |key: &str, value: String| Entry { key: key.to_string(), value, line: 0 };
    if let Some(n) = common.equations {
        entries.push(flag("equations", n.to_string()));
    }
    if let Some(t) = common.trials {
        entries.push(flag("trials", t.to_string()));
    }
    if let Some(s) = common.seed {
        entries.push(flag("seed", s.to_string()));
    }
    if let Some(m) = common.mode {
        entries.push(flag("mode", format!("{m:?}")));
    }
    if let Some(m) = common.method {
        entries.push(flag("method", format!("{m:?}")));
    }
    entries.extend(extra);
    Scenario::from_entries(&entries, &path).map_err(|e| match e {
        // overrides have no line in the file
        Error::Parse { line: 0, message, .. } => CliError::Config(format!("override: {message}")),
        other => other.into(),
    })
}

fn write_output(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(|e| CliError::Runtime(e.to_string())),
    }
}

/// Parses `start:end[:step]` or a comma-separated list.
pub fn parse_values(spec: &str) -> std::result::Result<Vec<f64>, String> {
    let spec = spec.trim();
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() > 3 {
            return Err(format!("malformed range `{spec}` (expected start:end[:step])"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("invalid number `{s}` in --values"));
        let start = num(parts[0])?;
        let end = num(parts[1])?;
        let step = if parts.len() == 3 { num(parts[2])? } else { 1.0 };
        if step.is_nan() || step <= 0.0 || end < start {
            return Err(format!("empty or malformed range `{spec}`"));
        }
        let count = ((end - start) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count).map(|i| start + i as f64 * step).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("invalid number `{s}` in --values")))
        .collect()
}

fn parse_counts(spec: &str) -> CliResult<Vec<usize>> {
    parse_values(spec)
        .map_err(CliError::Config)?
        .into_iter()
        .map(|v| {
            if v.fract() == 0.0 && v >= 0.0 {
                Ok(v as usize)
            } else {
                Err(CliError::Config(format!("equation count must be a whole number, got {v}")))
            }
        })
        .collect()
}

fn parse_error_pairs(spec: &str) -> CliResult<Vec<(f64, f64)>> {
    spec.split(',')
        .map(|item| {
            let (p, v) = item
                .split_once('/')
                .ok_or_else(|| CliError::Config(format!("error value `{item}` must be `e_p/e_v`")))?;
            let p: f64 = p.trim().parse().map_err(|_| CliError::Config(format!("invalid position error `{p}`")))?;
            let v: f64 = v.trim().parse().map_err(|_| CliError::Config(format!("invalid velocity error `{v}`")))?;
            Ok((p, v))
        })
        .collect()
}

fn summarize(report: &harness::RmseReport, stderr: &mut dyn Write) {
    for r in &report.rows {
        let rmse = r.rmse.map_or("n/a".to_string(), |x| format!("{x:.3} m"));
        let _ = writeln!(
            stderr,
            "{} = {:<10} {:>4} {:>8}  rmse {:>14}  ({}/{} converged)",
            r.sweep_param, r.sweep_value, r.method, r.mode, rmse, r.trials_converged, r.trials_total
        );
    }
}

fn execute(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<i32> {
    match cmd {
        Command::Locate(common) => {
            let s = load(&common, Vec::new())?;
            let opts = harness::SolverOptions::default();
            let o = harness::run_trial(&s, s.equations, s.seed, &opts)?;
            if let Some(path) = &common.detail {
                let rec = harness::TrialRecord {
                    trial: 0,
                    seed: o.seed,
                    estimate: o.estimate.and_then(|e| ecef_to_geodetic(e.u_hat, &s.earth).ok()),
                    error_m: o.error_m,
                    iterations: o.estimate.map_or(0, |e| e.iterations),
                    converged: o.converged(),
                };
                write_output(Some(path), &details_to_csv(&[rec]), stdout)?;
            }
            let Some(est) = o.estimate else {
                let TrialStatus::Failed(m) = &o.status else { unreachable!("estimate missing without failure") };
                return Err(CliError::Runtime(format!("localization failed: {m}")));
            };
            let g = ecef_to_geodetic(est.u_hat, &s.earth)?;
            let err = est.u_hat.distance(s.interferer_ecef()?);
            let mut text = String::new();
            text.push_str(&format!("estimated_lon_deg = {:.6}\n", g.longitude));
            text.push_str(&format!("estimated_lat_deg = {:.6}\n", g.latitude));
            text.push_str(&format!("error_m = {err:.3}\n"));
            text.push_str(&format!("iterations = {}\n", est.iterations));
            text.push_str(&format!("converged = {}\n", o.converged()));
            write_output(common.out.as_deref(), &text, stdout)?;
            Ok(0)
        }
        Command::Sweep { common, param, values } => {
            let s = load(&common, Vec::new())?;
            let sweep = match param {
                Param::Equations => Sweep::EquationCount(parse_counts(&values)?),
                Param::Velocity => Sweep::Velocity(parse_values(&values).map_err(CliError::Config)?),
                Param::Error => Sweep::Error(parse_error_pairs(&values)?),
            };
            let cfg = ExperimentConfig::new(s, sweep);
            let (report, details) = run_monte_carlo_detailed(&cfg)?;
            if let Some(p) = &common.detail {
                write_output(Some(p), &details_to_csv(&details), stdout)?;
            }
            summarize(&report, stderr);
            write_output(common.out.as_deref(), &report.to_csv(), stdout)?;
            Ok(0)
        }
        Command::Compare { common, values } => {
            let s = load(&common, Vec::new())?;
            let cfg = ExperimentConfig::new(s, Sweep::EquationCount(parse_counts(&values)?));
            let report = compare_methods(&cfg)?;
            summarize(&report, stderr);
            write_output(common.out.as_deref(), &report.to_csv(), stdout)?;
            Ok(0)
        }
        Command::Sensitivity(common) => {
            let s = load(&common, Vec::new())?;
            let cfg = ExperimentConfig::new(s, Sweep::None);
            let r = sensitivity_study(&cfg)?;
            summarize(&r.report, stderr);
            let fmt = |g: Option<f64>| g.map_or("n/a".to_string(), |x| format!("{x:.3}"));
            let _ = writeln!(
                stderr,
                "growth: position x10 -> {}, velocity x10 -> {}",
                fmt(r.position_growth),
                fmt(r.velocity_growth)
            );
            write_output(common.out.as_deref(), &r.report.to_csv(), stdout)?;
            Ok(0)
        }
        Command::Refine { common, rounds, pool } => {
            let mut extra = Vec::new();
            if let Some(r) = rounds {
                extra.push(Entry { key: "rounds".into(), value: r.to_string(), line: 0 });
            }
            if let Some(p) = pool {
                // validate early so the message names the flag
                for site in p.split(';').filter(|x| !x.trim().is_empty()) {
                    parse_point(site).map_err(|m| CliError::Config(format!("--pool: {m}")))?;
                }
                extra.push(Entry { key: "reference_pool".into(), value: p, line: 0 });
            }
            let s = load(&common, extra)?;
            if s.reference_pool.is_empty() {
                return Err(CliError::Config("refine needs a reference pool (--pool or reference_pool key)".into()));
            }
            let cfg = ExperimentConfig::new(s.clone(), Sweep::None);
            let report = refinement_study(&cfg, &s.reference_pool, s.rounds)?;
            summarize(&report, stderr);
            write_output(common.out.as_deref(), &report.to_csv(), stdout)?;
            Ok(0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_ranges() {
        assert_eq!(parse_values("2:10").unwrap().len(), 9);
        assert_eq!(parse_values("2:10").unwrap()[8], 10.0);
        assert_eq!(parse_values("154.4,1544").unwrap(), vec![154.4, 1544.0]);
        let v = parse_values("0:1:0.25").unwrap();
        assert_eq!(v, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(parse_values("5:2").is_err());
        assert!(parse_values("a,b").is_err());
        assert!(parse_values("1:2:3:4").is_err());
    }

    #[test]
    fn counts_and_pairs() {
        assert_eq!(parse_counts("2,4").unwrap(), vec![2, 4]);
        assert!(parse_counts("2.5").is_err());
        assert_eq!(parse_error_pairs("10/0.1,100/0.1").unwrap(), vec![(10.0, 0.1), (100.0, 0.1)]);
        assert!(parse_error_pairs("10").is_err());
    }
}
