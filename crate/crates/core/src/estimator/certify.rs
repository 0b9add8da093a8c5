//! Feasibility and first-order optimality checks, independent of how the point
//! was found.

use nalgebra::DMatrix;

use super::EstimationProblem;

/// Euclidean projection of `p` onto `{x >= 0, lo <= sum x <= hi}`.
///
/// The projection has the form `max(p - tau, 0)` with `tau` chosen so that the
/// sum lands on the violated bound. Requires `lo <= hi` and `hi >= 0`.
pub fn project_step(p: &[f64], lo: f64, hi: f64, out: &mut [f64]) {
    let free: f64 = p.iter().map(|v| v.max(0.0)).sum();
    let target = if free > hi {
        hi
    } else if free < lo {
        lo
    } else {
        for (o, v) in out.iter_mut().zip(p) {
            *o = v.max(0.0);
        }
        return;
    };
    if target <= 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (j, &v) in sorted.iter().enumerate() {
        acc += v;
        let candidate = (acc - target) / (j + 1) as f64;
        let next = sorted.get(j + 1).copied().unwrap_or(f64::NEG_INFINITY);
        tau = candidate;
        if candidate >= next {
            break;
        }
    }
    for (o, v) in out.iter_mut().zip(p) {
        *o = (v - tau).max(0.0);
    }
}

/// Projects every column of `x` onto its per-step set.
pub(crate) fn project_all(x: &mut DMatrix<f64>, lo: f64, hi: f64) {
    let k = x.nrows();
    let mut buf = vec![0.0; k];
    for mut col in x.column_iter_mut() {
        let p: Vec<f64> = col.iter().copied().collect();
        project_step(&p, lo, hi, &mut buf);
        col.copy_from_slice(&buf);
    }
}

pub(crate) fn max_violation(x: &DMatrix<f64>, lo: f64, hi: f64) -> f64 {
    let mut worst = 0.0f64;
    for col in x.column_iter() {
        worst = worst.max(col.iter().fold(0.0f64, |m, v| m.max(-v)));
        let s = col.sum();
        worst = worst.max(s - hi);
        if lo.is_finite() {
            worst = worst.max(lo - s);
        }
    }
    worst
}

/// Gradient of the objective with respect to `theta` and `x`.
pub(crate) fn gradient(
    problem: &EstimationProblem,
    theta: [f64; 3],
    x: &DMatrix<f64>,
) -> ([f64; 3], DMatrix<f64>) {
    let (k, z) = (problem.k, problem.z);
    let r = problem.residuals(theta, x);
    let mut g_theta = [0.0; 3];
    for (j, g) in g_theta.iter_mut().enumerate() {
        if problem.active[j] {
            *g = -2.0 * problem.features[j].dot(&r);
        }
    }
    let lambda = problem.lambda;
    let ridge = problem.ridge;
    let g_x = DMatrix::from_fn(k, z, |i, t| {
        let mut g = 2.0 * ridge * x[(i, t)];
        if t + 1 < z {
            g -= 2.0 * r[(i, t)];
            g -= 2.0 * lambda * (x[(i, t + 1)] - x[(i, t)]);
        }
        if t > 0 {
            g += 2.0 * lambda * (x[(i, t)] - x[(i, t - 1)]);
        }
        g
    });
    (g_theta, g_x)
}

/// `|v - P(v - grad f(v))| / (1 + |grad f(v)|)`, zero exactly at a minimiser.
pub(crate) fn natural_residual(
    problem: &EstimationProblem,
    theta: [f64; 3],
    x: &DMatrix<f64>,
    lo: f64,
    hi: f64,
) -> f64 {
    let (g_theta, g_x) = gradient(problem, theta, x);
    let mut step = x - &g_x;
    project_all(&mut step, lo, hi);
    let mut num = (x - step).norm_squared();
    num += g_theta.iter().map(|g| g * g).sum::<f64>();
    let grad_norm = (g_x.norm_squared() + g_theta.iter().map(|g| g * g).sum::<f64>()).sqrt();
    num.sqrt() / (1.0 + grad_norm)
}
