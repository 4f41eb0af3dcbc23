//! Location-related residual system and its damped Newton solution.
//!
//! Each calibrated observation gives one equation in the emitter position
//! `u`:
//!
//! ```text
//! f_n(u) = (f_u / c) · η_n · v_ulᵀ k_us(u) − f̂_n,   k_us(u) = (u − s_ul) / ‖u − s_ul‖
//! η_n    = 1 + v_dlᵀ k_sg / c                       (1 on board)
//! ```
//!
//! and the sphere constraint closes the system: `(‖u‖² − R²) / R`. The
//! constraint row is divided by `R` so that it is of the same order as the
//! Doppler rows; its gradient is scaled identically. Every step solves the
//! linearized (N+1)×3 system in the least-squares sense through an SVD.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;

use crate::calibration::CalibratedObservation;
use crate::error::{Error, Result};
use crate::geodesy::{unit_vector_between, EarthModel, Vec3};
use crate::scenario::{Method, Mode};

/// Singular values below this fraction of the largest count as rank loss.
const RANK_TOLERANCE: f64 = 1e-12;

/// Which observations form the system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    All,
    Indices(Vec<usize>),
    /// `n` equations drawn uniformly without replacement.
    Random(usize),
}

/// One row of the system in terms of the stored observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equation {
    Foa(usize),
    /// `f_later(u) − f_earlier(u)`.
    Fdoa { later: usize, earlier: usize },
}

/// Per-observation quantities that do not depend on `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Row {
    sat_pos: Vec3,
    sat_vel: Vec3,
    eta: f64,
    f_reduced: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSystem {
    pub observations: Vec<CalibratedObservation>,
    pub equations: Vec<Equation>,
    pub gateway: Vec3,
    pub f_u: f64,
    pub earth: EarthModel,
    pub method: Method,
    pub mode: Mode,
    rows: Vec<Row>,
}

/// Geometry of one residual evaluated at `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualTerms {
    pub eta: f64,
    /// Distance from the assumed satellite position to `u`, meters.
    pub g: f64,
    pub k_us: Vec3,
    pub k_sg: Vec3,
    /// `∂k_us/∂u_m` for m = 1, 2, 3.
    pub a: [Vec3; 3],
}

/// Shared parameters of a system, independent of which rows are selected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub gateway: Vec3,
    pub f_u: f64,
    pub earth: EarthModel,
    pub method: Method,
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop once the Newton step is shorter than this, meters.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Initial step fraction in (0, 1].
    pub damping: f64,
    pub initial_guess: Vec3,
}

impl SolverConfig {
    pub fn new(initial_guess: Vec3) -> Self {
        Self { epsilon: 0.1, max_iter: 100, damping: 1.0, initial_guess }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iter < 1 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !self.initial_guess.is_finite() {
            return Err(Error::Config("initial guess is not finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationEstimate {
    pub u_hat: Vec3,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the last undamped Newton step, meters.
    pub final_step_norm: f64,
    /// Norm of the residual vector at `u_hat` (Hz rows, scaled constraint row).
    pub residual_norm: f64,
}

/// Smallest step fraction tried before giving up on descent.
const DAMPING_FLOOR: f64 = 1.0 / 1024.0;

impl ResidualSystem {
    /// Builds the system from explicit equations over `observations`.
    pub fn new(observations: Vec<CalibratedObservation>, equations: Vec<Equation>, p: SystemParams) -> Result<Self> {
        if equations.len() < 2 {
            return Err(Error::Config(format!("at least two location-related equations are required, got {}", equations.len())));
        }
        let n = observations.len();
        for e in &equations {
            let ok = match *e {
                Equation::Foa(i) => i < n,
                Equation::Fdoa { later, earlier } => later < n && earlier < n && later != earlier,
            };
            if !ok {
                return Err(Error::Config(format!("equation {e:?} references a missing observation")));
            }
        }
        let rows = observations
            .iter()
            .map(|o| {
                let s = &o.sample;
                let eta = match p.mode {
                    Mode::Gateway => 1.0 + s.vel_dl_err.dot(unit_vector_between(s.pos_dl_err, p.gateway)?) / p.earth.c,
                    Mode::Onboard => 1.0,
                };
                Ok(Row { sat_pos: s.pos_ul_err, sat_vel: s.vel_ul_err, eta, f_reduced: o.f_reduced })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            observations,
            equations,
            gateway: p.gateway,
            f_u: p.f_u,
            earth: p.earth,
            method: p.method,
            mode: p.mode,
            rows,
        })
    }

    pub fn params(&self) -> SystemParams {
        SystemParams { gateway: self.gateway, f_u: self.f_u, earth: self.earth, method: self.method, mode: self.mode }
    }

    /// Number of location-related equations (excluding the sphere constraint).
    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    /// Geometry of the residual of observation `i` at `u`.
    pub fn terms(&self, u: Vec3, i: usize) -> Result<ResidualTerms> {
        let row = &self.rows[i];
        let s = &self.observations[i].sample;
        let d = u - row.sat_pos;
        let g = d.norm();
        if !(g > 0.0) {
            return Err(Error::Domain("evaluation point coincides with the satellite".into()));
        }
        let k_us = d / g;
        let g3 = g * g * g;
        let axes = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
        let a = axes.map(|e| {
            let dm = d.dot(e);
            (e * (g * g) - d * dm) / g3
        });
        let k_sg = match self.mode {
            Mode::Gateway => unit_vector_between(s.pos_dl_err, self.gateway)?,
            Mode::Onboard => Vec3::ZERO,
        };
        Ok(ResidualTerms { eta: row.eta, g, k_us, k_sg, a })
    }

    /// Doppler residual of stored observation `i`, Hz.
    pub fn observation_residual(&self, u: Vec3, i: usize) -> Result<f64> {
        let row = &self.rows[i];
        let d = u - row.sat_pos;
        let g = d.norm();
        if !(g > 0.0) {
            return Err(Error::Domain("evaluation point coincides with the satellite".into()));
        }
        Ok(self.f_u / self.earth.c * row.eta * row.sat_vel.dot(d / g) - row.f_reduced)
    }

    /// Gradient of [`Self::observation_residual`] with respect to `u`.
    pub fn observation_gradient(&self, u: Vec3, i: usize) -> Result<Vec3> {
        let t = self.terms(u, i)?;
        let v = self.rows[i].sat_vel;
        let scale = self.f_u / self.earth.c * t.eta;
        Ok(Vec3::new(v.dot(t.a[0]), v.dot(t.a[1]), v.dot(t.a[2])) * scale)
    }

    /// Residual of equation `j`.
    pub fn residual(&self, u: Vec3, j: usize) -> Result<f64> {
        match self.equations[j] {
            Equation::Foa(i) => self.observation_residual(u, i),
            Equation::Fdoa { later, earlier } => {
                Ok(self.observation_residual(u, later)? - self.observation_residual(u, earlier)?)
            }
        }
    }

    pub fn jacobian_row(&self, u: Vec3, j: usize) -> Result<Vec3> {
        match self.equations[j] {
            Equation::Foa(i) => self.observation_gradient(u, i),
            Equation::Fdoa { later, earlier } => {
                Ok(self.observation_gradient(u, later)? - self.observation_gradient(u, earlier)?)
            }
        }
    }

    /// Scaled sphere constraint `(‖u‖² − R²) / R`.
    pub fn constraint(&self, u: Vec3) -> f64 {
        let r = self.earth.radius;
        // (|u| - R)(|u| + R) keeps precision near the surface
        let n = u.norm();
        (n - r) * (n + r) / r
    }

    pub fn constraint_gradient(&self, u: Vec3) -> Vec3 {
        u * (2.0 / self.earth.radius)
    }

    /// Full residual vector: N equations followed by the constraint.
    pub fn residual_vector(&self, u: Vec3) -> Result<DVector<f64>> {
        let n = self.len();
        let mut f = DVector::zeros(n + 1);
        for j in 0..n {
            f[j] = self.residual(u, j)?;
        }
        f[n] = self.constraint(u);
        Ok(f)
    }

    pub fn jacobian(&self, u: Vec3) -> Result<DMatrix<f64>> {
        let n = self.len();
        let mut jac = DMatrix::zeros(n + 1, 3);
        for j in 0..n {
            let r = self.jacobian_row(u, j)?;
            jac[(j, 0)] = r.x;
            jac[(j, 1)] = r.y;
            jac[(j, 2)] = r.z;
        }
        let c = self.constraint_gradient(u);
        jac[(n, 0)] = c.x;
        jac[(n, 1)] = c.y;
        jac[(n, 2)] = c.z;
        Ok(jac)
    }
}

/// Observation indices (sorted, distinct) picked by `selection`. FDOA needs
/// one more observation than equations.
pub fn select_indices<R: Rng + ?Sized>(available: usize, selection: &Selection, method: Method, rng: &mut R) -> Result<Vec<usize>> {
    let extra = usize::from(method == Method::Fdoa);
    let mut picked: Vec<usize> = match selection {
        Selection::All => (0..available).collect(),
        Selection::Indices(ix) => ix.clone(),
        Selection::Random(n) => {
            let need = n + extra;
            if *n < 2 {
                return Err(Error::Config(format!("at least two location-related equations are required, got {n}")));
            }
            if need > available {
                return Err(Error::Config(format!("{need} observations needed but only {available} available")));
            }
            if need == available {
                (0..available).collect()
            } else {
                index::sample(rng, available, need).into_vec()
            }
        }
    };
    if let Some(&bad) = picked.iter().find(|&&i| i >= available) {
        return Err(Error::Config(format!("observation index {bad} out of range (have {available})")));
    }
    picked.sort_unstable();
    picked.dedup();
    Ok(picked)
}

/// Selects observations and assembles the system. For FDOA, `N`
/// equations consume `N + 1` observations taken in sample order and
/// differenced consecutively.
pub fn build_system<R: Rng + ?Sized>(
    observations: &[CalibratedObservation],
    selection: &Selection,
    params: SystemParams,
    rng: &mut R,
) -> Result<ResidualSystem> {
    let picked = select_indices(observations.len(), selection, params.method, rng)?;
    let chosen: Vec<CalibratedObservation> = picked.iter().map(|&i| observations[i]).collect();
    let equations = match params.method {
        Method::Foa => (0..chosen.len()).map(Equation::Foa).collect(),
        Method::Fdoa => (1..chosen.len()).map(|i| Equation::Fdoa { later: i, earlier: i - 1 }).collect(),
    };
    ResidualSystem::new(chosen, equations, params)
}

/// Radial projection of the first observation's assumed satellite position.
///
/// For a pass confined to the equatorial plane this point lies on the
/// mirror plane of the problem and the Jacobian there is singular.
pub fn initial_guess(sys: &ResidualSystem) -> Result<Vec3> {
    let first = sys
        .observations
        .first()
        .ok_or_else(|| Error::Config("system has no observations".into()))?;
    sys.earth.project_to_surface(first.sample.pos_ul_err)
}

/// Pulls a trial point back onto the sphere. A long tangent step raises
/// `‖u‖` quadratically and the scaled constraint row would otherwise reject
/// every step taken far from the solution.
fn retract(sys: &ResidualSystem, u: Vec3) -> Vec3 {
    sys.earth.project_to_surface(u).unwrap_or(u)
}

fn norm_at(sys: &ResidualSystem, u: Vec3) -> f64 {
    sys.residual_vector(u).map(|f| f.norm()).unwrap_or(f64::INFINITY)
}

/// Least-squares Gauss–Newton step with residual-norm backtracking.
pub fn newton_solve(sys: &ResidualSystem, cfg: &SolverConfig) -> Result<LocationEstimate> {
    cfg.validate()?;
    let mut u = cfg.initial_guess;
    let mut f = sys.residual_vector(u)?;
    let mut current = f.norm();
    let mut step_norm = f64::INFINITY;

    for iteration in 0..cfg.max_iter {
        let jac = sys.jacobian(u)?;
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * RANK_TOLERANCE;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        if rank < 3 || !(smax > 0.0) {
            return Err(Error::SingularGeometry { iteration, rank });
        }
        let step = svd.solve(&(-&f), tol).map_err(|e| Error::Domain(e.to_string()))?;
        let delta = Vec3::new(step[0], step[1], step[2]);
        step_norm = delta.norm();

        let mut lambda = cfg.damping;
        let mut candidate = retract(sys, u + delta * lambda);
        let mut cand_norm = norm_at(sys, candidate);
        while cand_norm > current && lambda > DAMPING_FLOOR {
            lambda *= 0.5;
            candidate = retract(sys, u + delta * lambda);
            cand_norm = norm_at(sys, candidate);
        }
        if !(cand_norm <= 10.0 * current) {
            // no acceptable descent along the Newton direction
            return Ok(LocationEstimate {
                u_hat: u,
                iterations: iteration + 1,
                converged: false,
                final_step_norm: step_norm,
                residual_norm: current,
            });
        }
        u = candidate;
        f = sys.residual_vector(u)?;
        current = f.norm();

        if step_norm < cfg.epsilon {
            return Ok(LocationEstimate {
                u_hat: u,
                iterations: iteration + 1,
                converged: true,
                final_step_norm: step_norm,
                residual_norm: current,
            });
        }
    }
    Ok(LocationEstimate {
        u_hat: u,
        iterations: cfg.max_iter,
        converged: false,
        final_step_norm: step_norm,
        residual_norm: current,
    })
}
