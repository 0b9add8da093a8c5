//! Recovery of the thermal coefficients and the per-room occupant heat from a
//! sensor trace.
//!
//! The unknowns are `theta = (alpha, beta, omega)` and `x_i(t) = gamma * 3600 *
//! M_i(t)`, the occupant heating rate of room `i` in K/h. For every room and
//! every step `t < z - 1` the heat balance gives one residual
//!
//! ```text
//! r_it = y_it - (alpha * a_it + beta * g_it + omega + x_it)
//! y_it = (T_i(t+1) - T_i(t)) / dt - phi * (T_hvac_i(t) - T_i(t)) * u_i(t)
//! a_it = [exposed_i] * (T_ext(t) - T_i(t))
//! g_it = sum_j (T_j(t) - T_i(t))
//! ```
//!
//! and the estimate minimises
//!
//! ```text
//! sum r_it^2 + lambda * sum (x_i(t+1) - x_i(t))^2 + ridge * sum x_i(t)^2
//! ```
//!
//! subject to `x >= 0` and `lo <= sum_i x_i(t) <= hi` at every step, with
//! `hi = (1 + eps1) * S`, `lo = (1 - eps2) * S` and `S = n_guess * q_avg * 3600 * gamma`.
//! The small ridge picks one point out of the otherwise flat valley along
//! which `omega` trades against a uniform shift of all `x`.

mod certify;
mod qp;

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BuildingLayout, SECONDS_PER_HOUR};
use crate::simulator::SensorTrace;

pub use certify::project_step;

/// Tuning knobs of the reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorOptions {
    /// Weight of the temporal smoothness penalty.
    pub lambda: f64,
    /// Relative slack above the assumed total occupant heat.
    pub eps1: f64,
    /// Relative slack below it; values above 1 drop the lower bound.
    pub eps2: f64,
    /// Assumed number of people in the building.
    pub n_guess: f64,
    /// Mean power of one person, W.
    pub q_avg: f64,
    /// Tie-break weight on `sum x^2`.
    pub ridge: f64,
    pub max_iterations: usize,
    /// Relative first-order optimality tolerance.
    pub kkt_tol: f64,
    /// Absolute constraint tolerance, K/h.
    pub feas_tol: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            lambda: 0.1,
            eps1: 0.2,
            eps2: 0.2,
            n_guess: 45.0,
            q_avg: 110.0,
            ridge: 1e-3,
            max_iterations: 200,
            kkt_tol: 1e-6,
            feas_tol: 1e-8,
        }
    }
}

impl EstimatorOptions {
    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps1 = eps;
        self.eps2 = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("lambda", self.lambda),
            ("n_guess", self.n_guess),
            ("ridge", self.ridge),
        ];
        for (field, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(field, format!("must be >= 0, got {v}")));
            }
        }
        for (field, v) in [("eps1", self.eps1), ("eps2", self.eps2)] {
            if !v.is_finite() {
                return Err(Error::validation(field, "must be finite"));
            }
        }
        if !(self.q_avg.is_finite() && self.q_avg > 0.0) {
            return Err(Error::validation("q_avg", format!("must be > 0, got {}", self.q_avg)));
        }
        if !(self.kkt_tol > 0.0 && self.feas_tol > 0.0) || self.max_iterations == 0 {
            return Err(Error::validation("solver tolerances", "must be positive"));
        }
        Ok(())
    }
}

/// Quantities the estimator takes as given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownConstants {
    /// Inverse heat capacity, K/J.
    pub gamma: f64,
    /// HVAC coupling rate, 1/h.
    pub phi: f64,
}

/// How the per-step total is constrained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TotalConstraint {
    /// `sum_i x_i(t) = total`.
    Equality { total: f64 },
    /// `lower <= sum_i x_i(t) <= upper`; `lower` is absent when it cannot bind.
    Box { lower: Option<f64>, upper: f64 },
}

/// Names of the three scalar unknowns in storage order.
pub const THETA_NAMES: [&str; 3] = ["alpha", "beta", "omega"];

#[derive(Debug, Clone)]
pub struct EstimationProblem {
    k: usize,
    z: usize,
    delta_t: f64,
    gamma: f64,
    /// Left-hand side with the HVAC term moved over, `(k, z-1)`.
    y: DMatrix<f64>,
    /// Regressors of alpha, beta and omega, each `(k, z-1)`.
    features: [DMatrix<f64>; 3],
    /// Which of alpha, beta and omega the data can inform.
    active: [bool; 3],
    lambda: f64,
    ridge: f64,
    total: f64,
    upper: f64,
    lower: f64,
    eps1: f64,
    eps2: f64,
    q_avg: f64,
    options: EstimatorOptions,
}

/// Builds the least-squares problem from measured temperatures.
///
/// Every reading is used as is in every row it appears in. `eps1` and `eps2`
/// may be negative to tighten the band; [`solve`] reports a band that admits
/// no nonnegative solution as [`Error::Infeasible`].
pub fn assemble(
    trace: &SensorTrace,
    layout: &BuildingLayout,
    known: &KnownConstants,
    opts: &EstimatorOptions,
) -> Result<EstimationProblem> {
    opts.validate()?;
    trace.validate()?;
    layout.validate()?;
    let (k, z) = trace.temps_meas.shape();
    if layout.k() != k {
        return Err(Error::Dimension {
            context: "layout rooms vs trace rooms".into(),
            expected: layout.k(),
            got: k,
        });
    }
    if z < 2 {
        return Err(Error::validation("horizon_steps", "need at least 2 steps"));
    }
    if !(known.gamma.is_finite() && known.gamma > 0.0) {
        return Err(Error::validation("gamma", "must be > 0"));
    }
    if !(known.phi.is_finite() && known.phi >= 0.0) {
        return Err(Error::validation("phi", "must be >= 0"));
    }
    for (name, finite) in [
        ("room temperature measurements", trace.temps_meas.iter().all(|v| v.is_finite())),
        ("ambient measurements", trace.ambient_meas.iter().all(|v| v.is_finite())),
        ("HVAC supply measurements", trace.hvac_temp_meas.iter().all(|v| v.is_finite())),
    ] {
        if !finite {
            return Err(Error::NonFinite(name.into()));
        }
    }

    let dt = trace.delta_t;
    let temps = &trace.temps_meas;
    let exposed = layout.ambient_exposed();
    let rows = z - 1;
    let mut y = DMatrix::zeros(k, rows);
    let mut a = DMatrix::zeros(k, rows);
    let mut g = DMatrix::zeros(k, rows);
    let ones = DMatrix::from_element(k, rows, 1.0);
    let mut column = vec![0.0; k];
    for t in 0..rows {
        for (i, c) in column.iter_mut().enumerate() {
            *c = temps[(i, t)];
        }
        for i in 0..k {
            let ti = column[i];
            let hvac = if trace.hvac_state[(i, t)] == 1 {
                known.phi * (trace.hvac_temp_meas[(i, t)] - ti)
            } else {
                0.0
            };
            y[(i, t)] = (temps[(i, t + 1)] - ti) / dt - hvac;
            if exposed[i] {
                a[(i, t)] = trace.ambient_meas[t] - ti;
            }
            g[(i, t)] = layout.neighbor_gradient(&column, i);
        }
    }

    let active = [exposed.iter().any(|&e| e), layout.has_adjacency(), true];
    let total = opts.n_guess * opts.q_avg * SECONDS_PER_HOUR * known.gamma;
    Ok(EstimationProblem {
        k,
        z,
        delta_t: dt,
        gamma: known.gamma,
        y,
        features: [a, g, ones],
        active,
        lambda: opts.lambda,
        ridge: opts.ridge,
        total,
        upper: (1.0 + opts.eps1) * total,
        lower: (1.0 - opts.eps2) * total,
        eps1: opts.eps1,
        eps2: opts.eps2,
        q_avg: opts.q_avg,
        options: *opts,
    })
}

impl EstimationProblem {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn steps(&self) -> usize {
        self.z
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn q_avg(&self) -> f64 {
        self.q_avg
    }

    pub fn options(&self) -> &EstimatorOptions {
        &self.options
    }

    /// Heat-balance rows, one per room and step except the last step.
    pub fn residual_count(&self) -> usize {
        self.k * (self.z - 1)
    }

    pub fn regularization_rows(&self) -> usize {
        if self.lambda > 0.0 {
            self.k * (self.z - 1)
        } else {
            0
        }
    }

    /// `k * z` occupant-heat values plus alpha, beta and omega.
    pub fn unknown_count(&self) -> usize {
        self.k * self.z + 3
    }

    /// Which of alpha, beta, omega are estimated; the others are pinned to 0.
    pub fn active_parameters(&self) -> [bool; 3] {
        self.active
    }

    /// Per-step constraint on the total occupant heating rate, K/h.
    pub fn total_constraint(&self) -> TotalConstraint {
        if self.eps1 == 0.0 && self.eps2 == 0.0 {
            TotalConstraint::Equality { total: self.total }
        } else {
            TotalConstraint::Box {
                lower: (self.eps2 <= 1.0 && self.lower > 0.0).then_some(self.lower),
                upper: self.upper,
            }
        }
    }

    /// Converts a heating rate in K/h to the occupant power in W.
    pub fn rate_to_watts(&self, x: f64) -> f64 {
        x / (self.gamma * SECONDS_PER_HOUR)
    }

    pub fn watts_to_rate(&self, w: f64) -> f64 {
        w * self.gamma * SECONDS_PER_HOUR
    }

    /// Heat-balance residuals `(k, z-1)` at the given point.
    pub fn residuals(&self, theta: [f64; 3], x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.k, self.z - 1, |i, t| {
            self.y[(i, t)]
                - (0..3)
                    .map(|j| theta[j] * self.features[j][(i, t)])
                    .sum::<f64>()
                - x[(i, t)]
        })
    }

    /// Full objective at `(theta, x)`, with `x` in K/h and shape `(k, z)`.
    pub fn objective(&self, theta: [f64; 3], x: &DMatrix<f64>) -> f64 {
        let fit = self.residuals(theta, x).norm_squared();
        let mut smooth = 0.0;
        for t in 0..self.z - 1 {
            for i in 0..self.k {
                smooth += (x[(i, t + 1)] - x[(i, t)]).powi(2);
            }
        }
        fit + self.lambda * smooth + self.ridge * x.norm_squared()
    }

    /// Objective with the occupant heat given in W.
    pub fn objective_watts(&self, theta: [f64; 3], mob_heat: &DMatrix<f64>) -> f64 {
        let x = mob_heat.map(|w| self.watts_to_rate(w));
        self.objective(theta, &x)
    }

    /// Largest violation of `x >= 0` and of the per-step totals, K/h.
    pub fn max_violation(&self, x: &DMatrix<f64>) -> f64 {
        let (lo, hi) = self.step_bounds();
        certify::max_violation(x, lo, hi)
    }

    /// Lower and upper bound on every per-step total, lower `-inf` when absent.
    fn step_bounds(&self) -> (f64, f64) {
        match self.total_constraint() {
            TotalConstraint::Equality { total } => (total, total),
            TotalConstraint::Box { lower, upper } => (lower.unwrap_or(f64::NEG_INFINITY), upper),
        }
    }

    fn check_feasible(&self) -> Result<()> {
        let (lo, hi) = self.step_bounds();
        if hi < 0.0 {
            return Err(Error::Infeasible(format!(
                "upper bound (1 + eps1) * n_guess * q_avg = {:.6} W is negative, so no \
                 nonnegative occupant heat satisfies it",
                self.rate_to_watts(hi)
            )));
        }
        if lo > hi {
            return Err(Error::Infeasible(format!(
                "lower bound (1 - eps2) * n_guess * q_avg = {:.6} W exceeds upper bound \
                 (1 + eps1) * n_guess * q_avg = {:.6} W",
                self.rate_to_watts(lo),
                self.rate_to_watts(hi)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub objective: f64,
    pub iterations: usize,
    /// Projected-gradient norm relative to `1 + |grad|`.
    pub kkt_residual: f64,
    /// K/h.
    pub max_constraint_violation: f64,
    pub converged: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub omega_hat: f64,
    /// Estimated occupant heat, W, `(room, step)`.
    pub mob_heat_hat: DMatrix<f64>,
    pub objective: f64,
    pub stats: SolverStats,
}

impl EstimationResult {
    pub fn theta(&self) -> [f64; 3] {
        [self.alpha_hat, self.beta_hat, self.omega_hat]
    }
}

/// Solves the assembled problem.
///
/// Returns [`Error::Infeasible`] when the band excludes every nonnegative
/// solution and [`Error::IterationLimit`] carrying the last iterate when the
/// optimality certificate is not reached in time.
pub fn solve(problem: &EstimationProblem) -> Result<EstimationResult> {
    problem.check_feasible()?;
    let start = Instant::now();
    let outcome = qp::solve(problem);
    let (theta, x) = (outcome.theta, outcome.x);

    let (lo, hi) = problem.step_bounds();
    let kkt_residual = certify::natural_residual(problem, theta, &x, lo, hi);
    let max_constraint_violation = certify::max_violation(&x, lo, hi);
    let objective = problem.objective(theta, &x);
    let converged = kkt_residual <= problem.options.kkt_tol
        && max_constraint_violation <= problem.options.feas_tol;
    let stats = SolverStats {
        objective,
        iterations: outcome.iterations,
        kkt_residual,
        max_constraint_violation,
        converged,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    log::debug!(
        "solve: {} iterations, kkt {:.3e}, violation {:.3e}, {:.3} s",
        stats.iterations,
        kkt_residual,
        max_constraint_violation,
        stats.wall_time_s
    );
    let result = EstimationResult {
        alpha_hat: theta[0],
        beta_hat: theta[1],
        omega_hat: theta[2],
        mob_heat_hat: x.map(|v| problem.rate_to_watts(v)),
        objective,
        stats,
    };
    if converged {
        Ok(result)
    } else {
        Err(Error::IterationLimit(Box::new(result)))
    }
}

/// Heat-balance residuals at the solution with summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `(k, z-1)`, K/h.
    pub residuals: DMatrix<f64>,
    pub max_abs: f64,
    pub rms: f64,
}

pub fn residual_report(problem: &EstimationProblem, result: &EstimationResult) -> ResidualReport {
    let x = result.mob_heat_hat.map(|w| problem.watts_to_rate(w));
    let residuals = problem.residuals(result.theta(), &x);
    let max_abs = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let rms = (residuals.norm_squared() / residuals.len().max(1) as f64).sqrt();
    ResidualReport {
        residuals,
        max_abs,
        rms,
    }
}
