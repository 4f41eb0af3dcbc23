//! Monte-Carlo experiment driver.
//!
//! Every trial owns a generator seeded from `(master seed, stream, trial)`,
//! so trials run in parallel and reports are reproducible bit for bit.
//! Comparisons that must see identical errors (method, mode, error
//! inflation, reference placement) share one stream.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::calibration::{calibrate_all, CalibrationContext};
use crate::error::{Error, Result};
use crate::geodesy::{ecef_to_geodetic, geodetic_to_ecef, GeodeticPoint, Vec3};
use crate::measurement::{observe, observe_all, Measurement, Sites};
use crate::scenario::{perturbed_trajectory, Method, Mode, SatelliteSample, Scenario};
use crate::solver::{build_system, newton_solve, select_indices, LocationEstimate, Selection, SolverConfig, SystemParams};

pub type TrialRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` in stream `stream`.
pub fn derive_seed(master: u64, stream: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ trial)
}

pub fn trial_rng(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Newton settings shared by every trial of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub epsilon: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        let d = SolverConfig::new(Vec3::ZERO);
        Self { epsilon: d.epsilon, max_iter: d.max_iter, damping: d.damping }
    }
}

impl SolverOptions {
    pub fn config(&self, initial_guess: Vec3) -> SolverConfig {
        SolverConfig { epsilon: self.epsilon, max_iter: self.max_iter, damping: self.damping, initial_guess }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialStatus {
    Converged,
    /// Newton hit the iteration cap or stalled.
    Diverged,
    /// Converged behind the Earth's limb even after the mirrored restart.
    FarSide,
    /// Solver or geometry error.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    pub estimate: Option<LocationEstimate>,
    /// Distance from the true emitter, meters. Present only for converged trials.
    pub error_m: Option<f64>,
    pub status: TrialStatus,
}

impl TrialOutcome {
    pub fn converged(&self) -> bool {
        self.status == TrialStatus::Converged
    }
}

/// Default starting point: the reference transmitter site on the sphere.
///
/// The reference lies in the same coverage area as the emitter, which
/// picks the correct side of the equatorial mirror ambiguity.
pub fn default_initial_guess(s: &Scenario) -> Result<Vec3> {
    s.earth.project_to_surface(s.reference_ecef()?)
}

/// Whether `u` on the sphere sees the satellite above its horizon.
pub fn visible_from(u: Vec3, sat: Vec3) -> bool {
    (sat - u).dot(u) > 0.0
}

/// Reflection of `u` across the horizon plane of `sat`, projected back onto the sphere.
pub fn mirrored_guess(u: Vec3, sat: Vec3, radius: f64) -> Result<Vec3> {
    let axis = sat.normalized()?;
    let horizon = radius * radius / sat.norm();
    let along = u.dot(axis);
    let reflected = u + axis * (2.0 * (horizon - along));
    Ok(reflected.normalized()? * radius)
}

/// Solves from `u0`; an estimate that no selected satellite position can
/// see is retried once from its mirror image across the first one's horizon.
pub fn localize(sys: &crate::solver::ResidualSystem, u0: Vec3, opts: &SolverOptions) -> Result<(LocationEstimate, TrialStatus)> {
    let seen = |u: Vec3| sys.observations.iter().any(|o| visible_from(u, o.sample.pos_ul_err));
    let est = newton_solve(sys, &opts.config(u0))?;
    if !est.converged {
        return Ok((est, TrialStatus::Diverged));
    }
    if seen(est.u_hat) {
        return Ok((est, TrialStatus::Converged));
    }
    let sat = sys.observations[0].sample.pos_ul_err;
    let retry = newton_solve(sys, &opts.config(mirrored_guess(est.u_hat, sat, sys.earth.radius)?))?;
    let status = match (retry.converged, seen(retry.u_hat)) {
        (true, true) => TrialStatus::Converged,
        (true, false) => TrialStatus::FarSide,
        (false, _) => TrialStatus::Diverged,
    };
    Ok((retry, status))
}

fn system_params(s: &Scenario, sites: &Sites) -> SystemParams {
    SystemParams { gateway: sites.gateway, f_u: s.f_u, earth: s.earth, method: s.method, mode: s.mode }
}

fn check_equations(s: &Scenario, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Config(format!("at least two location-related equations are required, got {n}")));
    }
    let need = n + usize::from(s.method == Method::Fdoa);
    if need > s.n_samples {
        return Err(Error::Config(format!(
            "{n} {} equations need {need} samples but the pass has {}",
            s.method, s.n_samples
        )));
    }
    Ok(())
}

/// Randomness consumed by one trial, drawn in a fixed order.
struct TrialDraw {
    sites: Sites,
    samples: Vec<SatelliteSample>,
    measurements: Vec<Measurement>,
    indices: Vec<usize>,
}

fn draw_trial(s: &Scenario, n: usize, rng: &mut TrialRng) -> Result<TrialDraw> {
    let sites = Sites::of(s)?;
    let samples = perturbed_trajectory(s, rng)?;
    let measurements = observe_all(s, &sites, &samples, rng)?;
    let indices = select_indices(measurements.len(), &Selection::Random(n), s.method, rng)?;
    Ok(TrialDraw { sites, samples, measurements, indices })
}

fn solve_draw(s: &Scenario, draw: &TrialDraw, ctx: &CalibrationContext, u0: Vec3, opts: &SolverOptions) -> Result<(LocationEstimate, TrialStatus)> {
    let obs = calibrate_all(&draw.measurements, ctx)?;
    let sys = build_system(&obs, &Selection::Indices(draw.indices.clone()), system_params(s, &draw.sites), &mut trial_rng(0))?;
    localize(&sys, u0, opts)
}

fn outcome(seed: u64, truth: Vec3, solved: Result<(LocationEstimate, TrialStatus)>) -> TrialOutcome {
    match solved {
        Ok((est, status)) => {
            let error_m = (status == TrialStatus::Converged).then(|| est.u_hat.distance(truth));
            TrialOutcome { seed, estimate: Some(est), error_m, status }
        }
        Err(e) => TrialOutcome { seed, estimate: None, error_m: None, status: TrialStatus::Failed(e.to_string()) },
    }
}

/// One synthesize → calibrate → select → solve cycle with `n` equations.
///
/// Configuration problems are returned as errors; anything that goes wrong
/// inside the solve is reported in the outcome's status.
pub fn run_trial(s: &Scenario, n: usize, seed: u64, opts: &SolverOptions) -> Result<TrialOutcome> {
    s.validate()?;
    check_equations(s, n)?;
    let mut rng = trial_rng(seed);
    let draw = draw_trial(s, n, &mut rng)?;
    let ctx = CalibrationContext::of(s)?;
    let u0 = default_initial_guess(s)?;
    let truth = s.interferer_ecef()?;
    Ok(outcome(seed, truth, solve_draw(s, &draw, &ctx, u0, opts)))
}

/// Root mean square of the errors of converged trials.
pub fn rmse(outcomes: &[TrialOutcome]) -> Option<f64> {
    let errs: Vec<f64> = outcomes.iter().filter_map(|o| o.error_m).collect();
    if errs.is_empty() {
        return None;
    }
    Some((errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    EquationCount(Vec<usize>),
    /// Satellite speeds in m/s.
    Velocity(Vec<f64>),
    /// `(e_p, e_v)` pairs in m and m/s.
    Error(Vec<(f64, f64)>),
    None,
}

impl Sweep {
    pub fn param_name(&self) -> &'static str {
        match self {
            Sweep::EquationCount(_) => "equations",
            Sweep::Velocity(_) => "velocity",
            Sweep::Error(_) => "error",
            Sweep::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub sweep: Sweep,
    pub trials: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl ExperimentConfig {
    /// Sweep over `sweep` with the scenario's own trial count and seed.
    pub fn new(scenario: Scenario, sweep: Sweep) -> Self {
        Self { trials: scenario.trials, seed: scenario.seed, scenario, sweep, solver: SolverOptions::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let empty = match &self.sweep {
            Sweep::EquationCount(v) => v.is_empty(),
            Sweep::Velocity(v) => v.is_empty() || v.iter().any(|x| !(*x >= 0.0 && x.is_finite())),
            Sweep::Error(v) => v.is_empty() || v.iter().any(|(p, q)| !(*p >= 0.0 && *q >= 0.0)),
            Sweep::None => false,
        };
        if empty {
            return Err(Error::Config(format!("{} sweep needs non-empty, non-negative values", self.sweep.param_name())));
        }
        self.scenario.validate()
    }

    /// Scenario variant and equation count of each sweep point.
    pub fn points(&self) -> Vec<SweepPoint> {
        let base = &self.scenario;
        let n = base.equations;
        match &self.sweep {
            Sweep::EquationCount(v) => v
                .iter()
                .map(|&k| SweepPoint { label: k.to_string(), scenario: base.clone(), equations: k })
                .collect(),
            Sweep::Velocity(v) => v
                .iter()
                .map(|&speed| SweepPoint { label: format_number(speed), scenario: Scenario { speed, ..base.clone() }, equations: n })
                .collect(),
            Sweep::Error(v) => v
                .iter()
                .map(|&(e_p, e_v)| SweepPoint {
                    label: format_error(e_p, e_v),
                    scenario: Scenario { e_p, e_v, ..base.clone() },
                    equations: n,
                })
                .collect(),
            Sweep::None => vec![SweepPoint { label: n.to_string(), scenario: base.clone(), equations: n }],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub label: String,
    pub scenario: Scenario,
    pub equations: usize,
}

pub fn format_number(x: f64) -> String {
    format!("{x}")
}

pub fn format_error(e_p: f64, e_v: f64) -> String {
    format!("{e_p}/{e_v}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseRow {
    pub sweep_param: String,
    pub sweep_value: String,
    pub method: Method,
    pub mode: Mode,
    /// Absent when no trial converged.
    pub rmse: Option<f64>,
    pub trials_converged: usize,
    pub trials_total: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RmseReport {
    pub rows: Vec<RmseRow>,
}

pub const REPORT_HEADER: &str = "sweep_param,sweep_value,method,mode,trials_total,trials_converged,rmse_m";
pub const DETAIL_HEADER: &str = "trial,seed,est_lon_deg,est_lat_deg,error_m,iterations,converged";

impl RmseReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let rmse = r.rmse.map(format_number).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.sweep_param, r.sweep_value, r.method, r.mode, r.trials_total, r.trials_converged, rmse
            );
        }
        out
    }

    pub fn find(&self, sweep_value: &str, method: Method, mode: Mode) -> Option<&RmseRow> {
        self.rows.iter().find(|r| r.sweep_value == sweep_value && r.method == method && r.mode == mode)
    }

    /// RMSE column in row order.
    pub fn rmses(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.rmse).collect()
    }
}

/// Per-trial record for the optional detail file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub estimate: Option<GeodeticPoint>,
    pub error_m: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn details_to_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(DETAIL_HEADER);
    out.push('\n');
    for r in records {
        let (lon, lat) = r.estimate.map(|p| (format_number(p.longitude), format_number(p.latitude))).unwrap_or_default();
        let err = r.error_m.map(format_number).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.trial, r.seed, lon, lat, err, r.iterations, r.converged);
    }
    out
}

/// Runs `trials` trials of one scenario variant on `stream`.
pub fn run_point(s: &Scenario, n: usize, trials: usize, master: u64, stream: u64, opts: &SolverOptions) -> Result<Vec<TrialOutcome>> {
    s.validate()?;
    check_equations(s, n)?;
    (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(s, n, derive_seed(master, stream, t), opts))
        .collect()
}

fn summarize(param: &str, label: &str, s: &Scenario, outcomes: &[TrialOutcome]) -> RmseRow {
    RmseRow {
        sweep_param: param.to_string(),
        sweep_value: label.to_string(),
        method: s.method,
        mode: s.mode,
        rmse: rmse(outcomes),
        trials_converged: outcomes.iter().filter(|o| o.converged()).count(),
        trials_total: outcomes.len(),
    }
}

fn records(outcomes: &[TrialOutcome], offset: usize, s: &Scenario) -> Vec<TrialRecord> {
    outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| TrialRecord {
            trial: offset + i,
            seed: o.seed,
            estimate: o.estimate.and_then(|e| ecef_to_geodetic(e.u_hat, &s.earth).ok()),
            error_m: o.error_m,
            iterations: o.estimate.map_or(0, |e| e.iterations),
            converged: o.converged(),
        })
        .collect()
}

/// Sweep with per-trial records. Each sweep point uses its own stream.
pub fn run_monte_carlo_detailed(cfg: &ExperimentConfig) -> Result<(RmseReport, Vec<TrialRecord>)> {
    cfg.validate()?;
    let param = cfg.sweep.param_name();
    let mut report = RmseReport::default();
    let mut details = Vec::new();
    for (i, p) in cfg.points().iter().enumerate() {
        let outcomes = run_point(&p.scenario, p.equations, cfg.trials, cfg.seed, i as u64, &cfg.solver)?;
        report.rows.push(summarize(param, &p.label, &p.scenario, &outcomes));
        details.extend(records(&outcomes, details.len(), &p.scenario));
    }
    Ok((report, details))
}

pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<RmseReport> {
    Ok(run_monte_carlo_detailed(cfg)?.0)
}

/// Method and mode combinations compared side by side.
pub const COMPARISONS: [(Method, Mode); 4] =
    [(Method::Foa, Mode::Gateway), (Method::Fdoa, Mode::Gateway), (Method::Foa, Mode::Onboard), (Method::Fdoa, Mode::Onboard)];

/// FoA against FDOA and gateway against on-board, with matched seeds at
/// every sweep point.
pub fn compare_methods(cfg: &ExperimentConfig) -> Result<RmseReport> {
    cfg.validate()?;
    let param = cfg.sweep.param_name();
    let mut report = RmseReport::default();
    for (i, p) in cfg.points().iter().enumerate() {
        for (method, mode) in COMPARISONS {
            let s = Scenario { method, mode, ..p.scenario.clone() };
            let outcomes = run_point(&s, p.equations, cfg.trials, cfg.seed, i as u64, &cfg.solver)?;
            report.rows.push(summarize(param, &p.label, &s, &outcomes));
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    /// Baseline, ×10 position error, ×10 velocity error.
    pub report: RmseReport,
    /// RMSE ratio for ×10 position error over baseline.
    pub position_growth: Option<f64>,
    pub velocity_growth: Option<f64>,
}

/// Inflates position and velocity error bounds tenfold one at a time.
pub fn sensitivity_study(cfg: &ExperimentConfig) -> Result<SensitivityReport> {
    cfg.validate()?;
    let base = &cfg.scenario;
    let n = base.equations;
    let variants = [(base.e_p, base.e_v), (10.0 * base.e_p, base.e_v), (base.e_p, 10.0 * base.e_v)];
    let mut report = RmseReport::default();
    for (e_p, e_v) in variants {
        let s = Scenario { e_p, e_v, ..base.clone() };
        let outcomes = run_point(&s, n, cfg.trials, cfg.seed, 0, &cfg.solver)?;
        report.rows.push(summarize("error", &format_error(e_p, e_v), &s, &outcomes));
    }
    let r = report.rmses();
    let growth = |x: Option<f64>| match (x, r[0]) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    Ok(SensitivityReport { position_growth: growth(r[1]), velocity_growth: growth(r[2]), report })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementOutcome {
    /// Estimate after the last round.
    pub estimate: LocationEstimate,
    pub converged: bool,
    /// Error of each round, absent for rounds that did not converge.
    pub round_errors: Vec<Option<f64>>,
    /// Reference site used in each round.
    pub references: Vec<GeodeticPoint>,
}

fn nearest(pool: &[GeodeticPoint], u: Vec3, s: &Scenario) -> Result<GeodeticPoint> {
    let mut best: Option<(f64, GeodeticPoint)> = None;
    for p in pool {
        let d = geodetic_to_ecef(*p, &s.earth)?.distance(u);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, *p));
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::Config("reference pool is empty".into()))
}

/// Localizes with the scenario's reference, then repeatedly switches to the
/// pool site nearest the current estimate and re-calibrates the same
/// interference measurements.
pub fn iterative_reference_refinement(
    s: &Scenario,
    pool: &[GeodeticPoint],
    rounds: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<RefinementOutcome> {
    if rounds == 0 {
        return Err(Error::Config("refinement needs at least one round".into()));
    }
    if pool.is_empty() {
        return Err(Error::Config("reference pool is empty".into()));
    }
    s.validate()?;
    for p in pool {
        p.validate(&s.earth)?;
    }
    let n = s.equations;
    check_equations(s, n)?;
    let mut rng = trial_rng(seed);
    let mut draw = draw_trial(s, n, &mut rng)?;
    let truth = s.interferer_ecef()?;
    let base_ctx = CalibrationContext::of(s)?;

    let mut reference = s.reference;
    let mut u0 = default_initial_guess(s)?;
    let mut round_errors = Vec::with_capacity(rounds);
    let mut references = Vec::with_capacity(rounds);
    let mut last: Option<(LocationEstimate, TrialStatus)> = None;

    for round in 0..rounds {
        if round > 0 {
            let (est, status) = last.as_ref().expect("previous round");
            if *status != TrialStatus::Converged {
                break;
            }
            let next = nearest(pool, est.u_hat, s)?;
            if next == reference {
                // same reference, same calibration: the estimate cannot change
                round_errors.push(round_errors.last().copied().flatten());
                references.push(reference);
                continue;
            }
            recalibrate_reference(s, &mut draw, reference, next)?;
            reference = next;
            u0 = est.u_hat;
        }
        let ctx = base_ctx.with_reference(geodetic_to_ecef(reference, &s.earth)?);
        let solved = solve_draw(s, &draw, &ctx, u0, opts)?;
        let err = (solved.1 == TrialStatus::Converged).then(|| solved.0.u_hat.distance(truth));
        round_errors.push(err);
        references.push(reference);
        last = Some(solved);
    }
    let (estimate, status) = last.expect("at least one round");
    Ok(RefinementOutcome { estimate, converged: status == TrialStatus::Converged, round_errors, references })
}

/// Replaces the reference observation of every epoch, keeping the
/// interference observation and the reference estimation error unchanged.
fn recalibrate_reference(s: &Scenario, draw: &mut TrialDraw, old: GeodeticPoint, new: GeodeticPoint) -> Result<()> {
    let old_sites = Sites { reference: geodetic_to_ecef(old, &s.earth)?, ..draw.sites };
    let new_sites = Sites { reference: geodetic_to_ecef(new, &s.earth)?, ..draw.sites };
    for (m, smp) in draw.measurements.iter_mut().zip(&draw.samples) {
        let noise = m.reference_offset - observe(s, &old_sites, smp)?.reference_offset;
        m.reference_offset = observe(s, &new_sites, smp)?.reference_offset + noise;
    }
    draw.sites = new_sites;
    Ok(())
}

/// Per-round RMSE of iterative refinement over `cfg.trials` trials.
pub fn refinement_study(cfg: &ExperimentConfig, pool: &[GeodeticPoint], rounds: usize) -> Result<RmseReport> {
    cfg.validate()?;
    let s = &cfg.scenario;
    let outcomes: Vec<Result<RefinementOutcome>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| iterative_reference_refinement(s, pool, rounds, derive_seed(cfg.seed, 0, t), &cfg.solver))
        .collect();
    let mut per_round: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(cfg.trials); rounds];
    for o in outcomes {
        match o {
            Ok(o) => {
                for (r, slot) in per_round.iter_mut().enumerate() {
                    slot.push(o.round_errors.get(r).copied().flatten());
                }
            }
            Err(e @ Error::Config(_)) => return Err(e),
            Err(_) => per_round.iter_mut().for_each(|slot| slot.push(None)),
        }
    }
    let rows = per_round
        .iter()
        .enumerate()
        .map(|(r, errs)| {
            let ok: Vec<f64> = errs.iter().flatten().copied().collect();
            RmseRow {
                sweep_param: "round".into(),
                sweep_value: (r + 1).to_string(),
                method: s.method,
                mode: s.mode,
                rmse: (!ok.is_empty()).then(|| (ok.iter().map(|e| e * e).sum::<f64>() / ok.len() as f64).sqrt()),
                trials_converged: ok.len(),
                trials_total: errs.len(),
            }
        })
        .collect();
    Ok(RmseReport { rows })
}
