//! Primal-dual interior-point method (Mehrotra predictor-corrector) for the
//! reconstruction QP.
//!
//! The Newton systems are solved without ever forming the full matrix. Sorting
//! the occupant unknowns by time, the smoothness penalty couples only adjacent
//! steps and the constraints live inside one step, so the `x` part is block
//! tridiagonal with blocks of size `k` (plus one multiplier row per step in the
//! equality case). The at most three scalar parameters couple to everything and
//! are eliminated through a small Schur complement.

use nalgebra::{DMatrix, DVector, LU};

use super::certify;
use super::{EstimationProblem, TotalConstraint};

pub(super) struct Outcome {
    pub theta: [f64; 3],
    /// `(k, z)`, K/h.
    pub x: DMatrix<f64>,
    pub iterations: usize,
}

const STEP_FRACTION: f64 = 0.99;

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Equality(f64),
    Box { lower: Option<f64>, upper: f64 },
}

/// Primal-dual iterate. Vectors over `x` are time-major: index `t * k + i`.
#[derive(Clone)]
struct Iterate {
    theta: Vec<f64>,
    x: Vec<f64>,
    s_nn: Vec<f64>,
    z_nn: Vec<f64>,
    s_hi: Vec<f64>,
    z_hi: Vec<f64>,
    s_lo: Vec<f64>,
    z_lo: Vec<f64>,
    nu: Vec<f64>,
}

/// Residuals of the optimality conditions.
struct Residuals {
    dual_theta: Vec<f64>,
    dual_x: Vec<f64>,
    nn: Vec<f64>,
    hi: Vec<f64>,
    lo: Vec<f64>,
    eq: Vec<f64>,
}

struct Direction {
    theta: Vec<f64>,
    x: Vec<f64>,
    nu: Vec<f64>,
    s_nn: Vec<f64>,
    z_nn: Vec<f64>,
    s_hi: Vec<f64>,
    z_hi: Vec<f64>,
    s_lo: Vec<f64>,
    z_lo: Vec<f64>,
}

struct Qp<'a> {
    problem: &'a EstimationProblem,
    k: usize,
    z: usize,
    /// Indices of the active scalar parameters.
    active: Vec<usize>,
    mode: Mode,
    /// `2 * F^T F` over the active parameters.
    h_theta: DMatrix<f64>,
    /// Diagonal of the `x` Hessian per step.
    diag: Vec<f64>,
    /// Off-diagonal coupling between steps `t` and `t + 1`.
    coupling: f64,
}

/// Factorised block tridiagonal matrix.
struct BlockTridiagonal {
    m: usize,
    k: usize,
    coupling: f64,
    lu: Vec<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    inverse: Vec<DMatrix<f64>>,
}

impl BlockTridiagonal {
    fn factor(blocks: Vec<DMatrix<f64>>, k: usize, coupling: f64) -> Option<Self> {
        let m = blocks[0].nrows();
        let mut lu = Vec::with_capacity(blocks.len());
        let mut inverse: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
        for mut block in blocks {
            if let Some(prev) = inverse.last() {
                let c2 = coupling * coupling;
                if c2 != 0.0 {
                    for a in 0..k {
                        for b in 0..k {
                            block[(a, b)] -= c2 * prev[(a, b)];
                        }
                    }
                }
            }
            let f = block.lu();
            let inv = f.try_inverse()?;
            if inv.iter().any(|v| !v.is_finite()) {
                return None;
            }
            lu.push(f);
            inverse.push(inv);
        }
        Some(BlockTridiagonal {
            m,
            k,
            coupling,
            lu,
            inverse,
        })
    }

    /// Solves in place; `rhs` has `m * z` rows and any number of columns.
    fn solve(&self, rhs: &mut DMatrix<f64>) {
        let (m, k, c) = (self.m, self.k, self.coupling);
        let z = self.lu.len();
        let cols = rhs.ncols();
        // Forward elimination: w_t = r_t - C S_{t-1}^{-1} w_{t-1}.
        if c != 0.0 {
            for t in 1..z {
                let prev = rhs.rows(t * m - m, m).clone_owned();
                let tmp = &self.inverse[t - 1] * prev;
                for col in 0..cols {
                    for a in 0..k {
                        rhs[(t * m + a, col)] -= c * tmp[(a, col)];
                    }
                }
            }
        }
        // Back substitution: y_t = S_t^{-1} (w_t - C y_{t+1}).
        for t in (0..z).rev() {
            let mut w = rhs.rows(t * m, m).clone_owned();
            if c != 0.0 && t + 1 < z {
                for col in 0..cols {
                    for a in 0..k {
                        w[(a, col)] -= c * rhs[((t + 1) * m + a, col)];
                    }
                }
            }
            let y = self.lu[t].solve(&w).unwrap_or(w);
            rhs.rows_mut(t * m, m).copy_from(&y);
        }
    }
}

/// Everything needed to solve Newton systems at one iterate.
struct Factorization {
    tri: BlockTridiagonal,
    /// `T^{-1} B`, one column per active parameter.
    coupled: DMatrix<f64>,
    schur: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> Qp<'a> {
    fn new(problem: &'a EstimationProblem) -> Self {
        let (k, z) = (problem.k, problem.z);
        let active: Vec<usize> = (0..3).filter(|&j| problem.active[j]).collect();
        let p = active.len();
        let h_theta = DMatrix::from_fn(p, p, |a, b| {
            2.0 * problem.features[active[a]].dot(&problem.features[active[b]])
        });
        let diag = (0..z)
            .map(|t| {
                let fit = if t + 1 < z { 1.0 } else { 0.0 };
                let degree = (t > 0) as usize as f64 + (t + 1 < z) as usize as f64;
                2.0 * (fit + problem.lambda * degree + problem.ridge)
            })
            .collect();
        let mode = match problem.total_constraint() {
            TotalConstraint::Equality { total } => Mode::Equality(total),
            TotalConstraint::Box { lower, upper } => Mode::Box { lower, upper },
        };
        Qp {
            problem,
            k,
            z,
            active,
            mode,
            h_theta,
            diag,
            coupling: -2.0 * problem.lambda,
        }
    }

    fn p(&self) -> usize {
        self.active.len()
    }

    fn block_size(&self) -> usize {
        match self.mode {
            Mode::Equality(_) => self.k + 1,
            Mode::Box { .. } => self.k,
        }
    }

    fn feature(&self, j: usize, i: usize, t: usize) -> f64 {
        self.problem.features[self.active[j]][(i, t)]
    }

    fn theta_full(&self, theta: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (j, &a) in self.active.iter().enumerate() {
            out[a] = theta[j];
        }
        out
    }

    fn to_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.k, self.z, |i, t| x[t * self.k + i])
    }

    fn initial(&self) -> Iterate {
        let (k, z) = (self.k, self.z);
        let target = match self.mode {
            Mode::Equality(total) => total,
            Mode::Box { lower, upper } => 0.5 * (lower.unwrap_or(0.0).max(0.0) + upper),
        };
        let x0 = target / k as f64;
        let floor = 1e-2 * x0.max(1e-2);
        let sum0 = x0 * k as f64;
        let (has_hi, has_lo) = match self.mode {
            Mode::Equality(_) => (false, false),
            Mode::Box { lower, .. } => (true, lower.is_some()),
        };
        let (hi, lo) = match self.mode {
            Mode::Box { lower, upper } => (upper, lower.unwrap_or(0.0)),
            Mode::Equality(_) => (0.0, 0.0),
        };
        let n_hi = if has_hi { z } else { 0 };
        let n_lo = if has_lo { z } else { 0 };
        Iterate {
            theta: vec![0.0; self.p()],
            x: vec![x0; k * z],
            s_nn: vec![x0.max(floor); k * z],
            z_nn: vec![1.0; k * z],
            s_hi: vec![(hi - sum0).max(floor); n_hi],
            z_hi: vec![1.0; n_hi],
            s_lo: vec![(sum0 - lo).max(floor); n_lo],
            z_lo: vec![1.0; n_lo],
            nu: vec![0.0; if has_hi || has_lo { 0 } else { z }],
        }
    }

    /// Gradient of the objective in the reduced parameterisation.
    fn gradient(&self, it: &Iterate) -> (Vec<f64>, Vec<f64>) {
        let x = self.to_matrix(&it.x);
        let (g_theta, g_x) = certify::gradient(self.problem, self.theta_full(&it.theta), &x);
        let gt = self.active.iter().map(|&a| g_theta[a]).collect();
        let mut gx = vec![0.0; self.k * self.z];
        for t in 0..self.z {
            for i in 0..self.k {
                gx[t * self.k + i] = g_x[(i, t)];
            }
        }
        (gt, gx)
    }

    fn step_sum(&self, x: &[f64], t: usize) -> f64 {
        x[t * self.k..(t + 1) * self.k].iter().sum()
    }

    fn residuals(&self, it: &Iterate) -> Residuals {
        let (k, z) = (self.k, self.z);
        let (dual_theta, mut dual_x) = self.gradient(it);
        for (j, d) in dual_x.iter_mut().enumerate() {
            let t = j / k;
            *d -= it.z_nn[j];
            if !it.z_hi.is_empty() {
                *d += it.z_hi[t];
            }
            if !it.z_lo.is_empty() {
                *d -= it.z_lo[t];
            }
            if !it.nu.is_empty() {
                *d += it.nu[t];
            }
        }
        let nn = it.x.iter().zip(&it.s_nn).map(|(x, s)| s - x).collect();
        let sums: Vec<f64> = (0..z).map(|t| self.step_sum(&it.x, t)).collect();
        let (hi, lo, eq) = match self.mode {
            Mode::Equality(total) => (vec![], vec![], sums.iter().map(|s| s - total).collect()),
            Mode::Box { lower, upper } => {
                let hi = (0..z).map(|t| sums[t] + it.s_hi[t] - upper).collect();
                let lo = match lower {
                    Some(l) => (0..z).map(|t| -sums[t] + it.s_lo[t] + l).collect(),
                    None => vec![],
                };
                (hi, lo, vec![])
            }
        };
        Residuals {
            dual_theta,
            dual_x,
            nn,
            hi,
            lo,
            eq,
        }
    }

    fn factor(&self, it: &Iterate) -> Option<Factorization> {
        let (k, z, m, p) = (self.k, self.z, self.block_size(), self.p());
        let blocks: Vec<DMatrix<f64>> = (0..z)
            .map(|t| {
                let mut b = DMatrix::zeros(m, m);
                let rank_one = it.z_hi.get(t).map_or(0.0, |zz| zz / it.s_hi[t])
                    + it.z_lo.get(t).map_or(0.0, |zz| zz / it.s_lo[t]);
                for a in 0..k {
                    let j = t * k + a;
                    for c in 0..k {
                        b[(a, c)] = rank_one;
                    }
                    b[(a, a)] += self.diag[t] + it.z_nn[j] / it.s_nn[j];
                }
                if m > k {
                    for a in 0..k {
                        b[(a, k)] = 1.0;
                        b[(k, a)] = 1.0;
                    }
                }
                b
            })
            .collect();
        let tri = BlockTridiagonal::factor(blocks, k, self.coupling)?;

        let mut coupled = DMatrix::zeros(m * z, p);
        for t in 0..z - 1 {
            for i in 0..k {
                for j in 0..p {
                    coupled[(t * m + i, j)] = 2.0 * self.feature(j, i, t);
                }
            }
        }
        tri.solve(&mut coupled);
        let mut schur = self.h_theta.clone();
        for a in 0..p {
            for b in 0..p {
                let mut acc = 0.0;
                for t in 0..z - 1 {
                    for i in 0..k {
                        acc += 2.0 * self.feature(a, i, t) * coupled[(t * m + i, b)];
                    }
                }
                schur[(a, b)] -= acc;
            }
        }
        let schur = schur.lu();
        if !schur.is_invertible() {
            return None;
        }
        Some(Factorization {
            tri,
            coupled,
            schur,
        })
    }

    /// Solves the Newton system for the given residuals and complementarity
    /// targets `rc_*` (the `s * z` part of the right-hand side).
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        it: &Iterate,
        f: &Factorization,
        r: &Residuals,
        rc_nn: &[f64],
        rc_hi: &[f64],
        rc_lo: &[f64],
    ) -> Direction {
        let (k, z, m, p) = (self.k, self.z, self.block_size(), self.p());
        let q = |rc: &[f64], s: &[f64], zz: &[f64], rp: &[f64]| -> Vec<f64> {
            (0..rc.len()).map(|j| (rc[j] - zz[j] * rp[j]) / s[j]).collect()
        };
        let q_nn = q(rc_nn, &it.s_nn, &it.z_nn, &r.nn);
        let q_hi = q(rc_hi, &it.s_hi, &it.z_hi, &r.hi);
        let q_lo = q(rc_lo, &it.s_lo, &it.z_lo, &r.lo);

        let mut rhs = DMatrix::zeros(m * z, 1);
        for t in 0..z {
            let shift = q_hi.get(t).copied().unwrap_or(0.0) - q_lo.get(t).copied().unwrap_or(0.0);
            for i in 0..k {
                let j = t * k + i;
                rhs[(t * m + i, 0)] = -r.dual_x[j] - q_nn[j] + shift;
            }
            if m > k {
                rhs[(t * m + k, 0)] = -r.eq[t];
            }
        }
        let rhs_theta: Vec<f64> = r.dual_theta.iter().map(|d| -d).collect();

        f.tri.solve(&mut rhs);
        let mut reduced = DVector::from_vec(rhs_theta);
        for j in 0..p {
            let mut acc = 0.0;
            for t in 0..z - 1 {
                for i in 0..k {
                    acc += 2.0 * self.feature(j, i, t) * rhs[(t * m + i, 0)];
                }
            }
            reduced[j] -= acc;
        }
        let d_theta = f.schur.solve(&reduced).unwrap_or(reduced);
        let correction = &f.coupled * &d_theta;

        let mut dx = vec![0.0; k * z];
        let mut dnu = vec![0.0; if m > k { z } else { 0 }];
        for t in 0..z {
            for i in 0..k {
                dx[t * k + i] = rhs[(t * m + i, 0)] - correction[t * m + i];
            }
            if m > k {
                dnu[t] = rhs[(t * m + k, 0)] - correction[t * m + k];
            }
        }

        let ds_nn: Vec<f64> = (0..k * z).map(|j| -r.nn[j] + dx[j]).collect();
        let dsum: Vec<f64> = (0..z).map(|t| self.step_sum(&dx, t)).collect();
        let ds_hi: Vec<f64> = (0..r.hi.len()).map(|t| -r.hi[t] - dsum[t]).collect();
        let ds_lo: Vec<f64> = (0..r.lo.len()).map(|t| -r.lo[t] + dsum[t]).collect();
        let dz = |rc: &[f64], s: &[f64], zz: &[f64], ds: &[f64]| -> Vec<f64> {
            (0..rc.len()).map(|j| (-rc[j] - zz[j] * ds[j]) / s[j]).collect()
        };
        Direction {
            theta: d_theta.iter().copied().collect(),
            z_nn: dz(rc_nn, &it.s_nn, &it.z_nn, &ds_nn),
            z_hi: dz(rc_hi, &it.s_hi, &it.z_hi, &ds_hi),
            z_lo: dz(rc_lo, &it.s_lo, &it.z_lo, &ds_lo),
            x: dx,
            nu: dnu,
            s_nn: ds_nn,
            s_hi: ds_hi,
            s_lo: ds_lo,
        }
    }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(a, d)| -a / d)
        .fold(1.0, f64::min)
}

/// Common primal-dual step to the boundary of the positive orthant.
fn step_length(it: &Iterate, d: &Direction) -> f64 {
    max_step(&it.s_nn, &d.s_nn)
        .min(max_step(&it.s_hi, &d.s_hi))
        .min(max_step(&it.s_lo, &d.s_lo))
        .min(max_step(&it.z_nn, &d.z_nn))
        .min(max_step(&it.z_hi, &d.z_hi))
        .min(max_step(&it.z_lo, &d.z_lo))
}

fn complementarity(it: &Iterate, d: Option<(&Direction, f64, f64)>) -> f64 {
    let pairs = [
        (&it.s_nn, &it.z_nn),
        (&it.s_hi, &it.z_hi),
        (&it.s_lo, &it.z_lo),
    ];
    let mut total = 0.0;
    for (n, (s, z)) in pairs.iter().enumerate() {
        for j in 0..s.len() {
            let (mut sj, mut zj) = (s[j], z[j]);
            if let Some((d, ap, ad)) = d {
                let (ds, dz) = match n {
                    0 => (d.s_nn[j], d.z_nn[j]),
                    1 => (d.s_hi[j], d.z_hi[j]),
                    _ => (d.s_lo[j], d.z_lo[j]),
                };
                sj += ap * ds;
                zj += ad * dz;
            }
            total += sj * zj;
        }
    }
    total
}

fn axpy(v: &mut [f64], a: f64, d: &[f64]) {
    for (x, dx) in v.iter_mut().zip(d) {
        *x += a * dx;
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Least squares over the scalar parameters with every `x` pinned at zero.
fn solve_theta_only(problem: &EstimationProblem, qp: &Qp) -> Outcome {
    let p = qp.p();
    let h = qp.h_theta.clone();
    let rhs = DVector::from_fn(p, |j, _| 2.0 * problem.features[qp.active[j]].dot(&problem.y));
    let theta = h.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(p));
    Outcome {
        theta: qp.theta_full(theta.as_slice()),
        x: DMatrix::zeros(qp.k, qp.z),
        iterations: 0,
    }
}

pub(super) fn solve(problem: &EstimationProblem) -> Outcome {
    let qp = Qp::new(problem);
    let upper = match qp.mode {
        Mode::Equality(total) => total,
        Mode::Box { upper, .. } => upper,
    };
    if upper <= f64::MIN_POSITIVE {
        return solve_theta_only(problem, &qp);
    }
    let (lo, hi) = match qp.mode {
        Mode::Equality(total) => (total, total),
        Mode::Box { lower, upper } => (lower.unwrap_or(f64::NEG_INFINITY), upper),
    };
    let opts = problem.options;
    let scale_b = 1.0 + upper;
    let scale_h = 1.0 + inf_norm(problem.y.as_slice());

    let mut it = qp.initial();
    let n_ineq = (it.s_nn.len() + it.s_hi.len() + it.s_lo.len()) as f64;
    let mut best = it.clone();
    let mut iterations = 0;
    for iter in 0..opts.max_iterations {
        iterations = iter;
        let r = qp.residuals(&it);
        let pres = inf_norm(&r.nn)
            .max(inf_norm(&r.hi))
            .max(inf_norm(&r.lo))
            .max(inf_norm(&r.eq));
        let dres = inf_norm(&r.dual_theta).max(inf_norm(&r.dual_x));
        let gap = complementarity(&it, None);
        let mu = gap / n_ineq;
        log::trace!("ipm {iter}: pres {pres:.2e} dres {dres:.2e} mu {mu:.2e}");
        best = it.clone();

        if mu <= 1e-8 * scale_h && pres <= 1e-9 * scale_b {
            let theta = qp.theta_full(&it.theta);
            let mut x = qp.to_matrix(&it.x);
            certify::project_all(&mut x, lo, hi);
            let cert = certify::natural_residual(problem, theta, &x, lo, hi);
            if cert <= 1e-2 * opts.kkt_tol || mu <= 1e-24 * scale_h {
                break;
            }
        }

        let Some(f) = qp.factor(&it) else {
            log::warn!("interior-point factorisation failed at iteration {iter}");
            break;
        };

        // Predictor.
        let rc_nn: Vec<f64> = it.s_nn.iter().zip(&it.z_nn).map(|(s, z)| s * z).collect();
        let rc_hi: Vec<f64> = it.s_hi.iter().zip(&it.z_hi).map(|(s, z)| s * z).collect();
        let rc_lo: Vec<f64> = it.s_lo.iter().zip(&it.z_lo).map(|(s, z)| s * z).collect();
        let aff = qp.direction(&it, &f, &r, &rc_nn, &rc_hi, &rc_lo);
        let a_aff = step_length(&it, &aff);
        let mu_aff = complementarity(&it, Some((&aff, a_aff, a_aff))) / n_ineq;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector with centring.
        let target = sigma * mu;
        let corr = |rc: &[f64], ds: &[f64], dz: &[f64]| -> Vec<f64> {
            (0..rc.len()).map(|j| rc[j] + ds[j] * dz[j] - target).collect()
        };
        let rc_nn = corr(&rc_nn, &aff.s_nn, &aff.z_nn);
        let rc_hi = corr(&rc_hi, &aff.s_hi, &aff.z_hi);
        let rc_lo = corr(&rc_lo, &aff.s_lo, &aff.z_lo);
        let d = qp.direction(&it, &f, &r, &rc_nn, &rc_hi, &rc_lo);
        let ap = (STEP_FRACTION * step_length(&it, &d)).min(1.0);
        let ad = ap;

        axpy(&mut it.theta, ap, &d.theta);
        axpy(&mut it.x, ap, &d.x);
        axpy(&mut it.s_nn, ap, &d.s_nn);
        axpy(&mut it.s_hi, ap, &d.s_hi);
        axpy(&mut it.s_lo, ap, &d.s_lo);
        axpy(&mut it.nu, ad, &d.nu);
        axpy(&mut it.z_nn, ad, &d.z_nn);
        axpy(&mut it.z_hi, ad, &d.z_hi);
        axpy(&mut it.z_lo, ad, &d.z_lo);
        iterations = iter + 1;
        best = it.clone();
    }

    let mut x = qp.to_matrix(&best.x);
    certify::project_all(&mut x, lo, hi);
    Outcome {
        theta: qp.theta_full(&best.theta),
        x,
        iterations,
    }
}
