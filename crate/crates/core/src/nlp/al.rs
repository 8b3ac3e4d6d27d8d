//! Bound-constrained augmented Lagrangian with a projected Newton inner
//! solver.
//!
//! Equality rows are scaled by `w_i = 1 / max(1, max_j |J_ij|)` at the
//! starting point so that collocation rows (whose Jacobian carries the
//! `O(N²/T)` differentiation entries) and boundary rows are comparable.
//! Convergence is always judged on the unscaled residuals.

use nalgebra::{DMatrix, DVector};

use crate::transcription::CollocationProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct AlSettings {
    pub max_outer: usize,
    pub max_inner: usize,
    pub constraint_tol: f64,
    pub optimality_tol: f64,
    pub feasibility_tol: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    pub stop_when_feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum AlOutcome {
    Converged,
    /// Feasibility reached in feasibility-only mode.
    Feasible,
    /// Violation stopped improving while the penalty grew.
    Stalled,
    PenaltyLimit,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub(crate) struct AlResult {
    pub z: Vec<f64>,
    pub outcome: AlOutcome,
    pub violation: f64,
    pub stationarity: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub penalty: f64,
}

struct Merit<'a> {
    problem: &'a CollocationProblem,
    weights: Vec<f64>,
    lambda: Vec<f64>,
    rho: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Merit<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        let c = self.problem.residuals(z);
        let mut v = self.problem.objective(z);
        for ((ci, wi), li) in c.iter().zip(&self.weights).zip(&self.lambda) {
            let g = wi * ci;
            v += li * g + 0.5 * self.rho * g * g;
        }
        v
    }

    /// Gradient of the merit and the unscaled multiplier estimate
    /// `y_i = w_i (λ_i + ρ w_i c_i)`.
    fn gradient(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = self.problem.residuals(z);
        let y: Vec<f64> = c
            .iter()
            .zip(&self.weights)
            .zip(&self.lambda)
            .map(|((ci, wi), li)| wi * (li + self.rho * wi * ci))
            .collect();
        let jac = self.problem.jacobian(z);
        let mut g = jac.transpose_mul(&y);
        g[self.problem.layout.objective_index()] += 1.0;
        (g, y)
    }

    fn hessian(&self, z: &[f64], y: &[f64]) -> Vec<f64> {
        let nv = z.len();
        let mut h = vec![0.0; nv * nv];
        let jac = self.problem.jacobian(z);
        for (row, wi) in jac.rows.iter().zip(&self.weights) {
            let s = self.rho * wi * wi;
            for &(a, va) in row {
                let sa = s * va;
                let base = a * nv;
                for &(b, vb) in row {
                    h[base + b] += sa * vb;
                }
            }
        }
        self.problem.add_constraint_hessian(z, y, &mut h);
        h
    }

    fn project(&self, z: &mut [f64]) {
        for ((zi, lo), hi) in z.iter_mut().zip(&self.lower).zip(&self.upper) {
            *zi = zi.clamp(*lo, *hi);
        }
    }

    fn projected_gradient_norm(&self, z: &[f64], g: &[f64]) -> f64 {
        z.iter()
            .zip(g)
            .zip(self.lower.iter().zip(&self.upper))
            .map(|((&zi, &gi), (&lo, &hi))| (zi - (zi - gi).clamp(lo, hi)).abs())
            .fold(0.0, f64::max)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

pub(crate) fn row_weights(problem: &CollocationProblem, z: &[f64]) -> Vec<f64> {
    problem
        .jacobian(z)
        .rows
        .iter()
        .map(|row| 1.0 / row.iter().fold(1.0f64, |a, &(_, v)| a.max(v.abs())))
        .collect()
}

/// Approximate minimizer of `g·d + ½ dᵀ(H + σI)d` over the box
/// `lo − z ≤ d ≤ hi − z`: Newton steps on the free subspace with
/// violators clipped to their bound and bound-held variables released
/// once if the reduced gradient points inward. `None` when a factorization
/// fails.
fn box_newton_step(
    m: &Merit,
    z: &[f64],
    g: &[f64],
    h: &[f64],
    shift: f64,
    mut held: Vec<bool>,
) -> Option<Vec<f64>> {
    let nv = z.len();
    let mut released = vec![false; nv];
    let mut d = vec![0.0; nv];
    for _round in 0..12 {
        for i in 0..nv {
            if held[i] {
                d[i] = if g[i] > 0.0 || m.lower[i] == m.upper[i] && z[i] <= m.lower[i] {
                    m.lower[i] - z[i]
                } else {
                    m.upper[i] - z[i]
                };
                if !d[i].is_finite() {
                    d[i] = 0.0;
                }
            }
        }
        let free: Vec<usize> = (0..nv).filter(|&i| !held[i]).collect();
        let nf = free.len();
        let mut mat = DMatrix::from_fn(nf, nf, |a, b| h[free[a] * nv + free[b]]);
        for k in 0..nf {
            mat[(k, k)] += shift;
        }
        let rhs = DVector::from_iterator(
            nf,
            free.iter().map(|&i| {
                let row = &h[i * nv..(i + 1) * nv];
                -g[i] - (0..nv).filter(|&j| held[j]).map(|j| row[j] * d[j]).sum::<f64>()
            }),
        );
        let sol = mat.cholesky()?.solve(&rhs);
        for (k, &i) in free.iter().enumerate() {
            d[i] = sol[k];
        }
        let mut changed = false;
        for &i in &free {
            let t = z[i] + d[i];
            if t < m.lower[i] || t > m.upper[i] {
                held[i] = true;
                changed = true;
            }
        }
        if changed {
            continue;
        }
        for i in 0..nv {
            if held[i] && !released[i] && m.lower[i] != m.upper[i] {
                let row = &h[i * nv..(i + 1) * nv];
                let r = g[i] + row.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() + shift * d[i];
                let at_lower = z[i] + d[i] <= m.lower[i];
                if (at_lower && r < 0.0) || (!at_lower && r > 0.0) {
                    held[i] = false;
                    released[i] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Some(d)
}

/// Projected Newton iterations on the merit until the projected gradient
/// falls below `omega`. The Hessian is shifted by a Levenberg parameter
/// that adapts to the ratio of actual to predicted decrease and persists
/// across calls. Returns iterations used and the final measure.
fn inner_solve(m: &Merit, z: &mut Vec<f64>, shift: &mut f64, omega: f64, max_iter: usize) -> (usize, f64) {
    const MIN_SHIFT: f64 = 1e-6;
    let nv = z.len();
    let mut value = m.value(z);
    let mut pg = f64::INFINITY;
    for it in 0..max_iter {
        let (g, y) = m.gradient(z);
        pg = m.projected_gradient_norm(z, &g);
        if pg <= omega {
            return (it, pg);
        }
        let eps = pg.min(1e-3);
        let held: Vec<bool> = (0..nv)
            .map(|i| {
                let (lo, hi) = (m.lower[i], m.upper[i]);
                lo == hi || (z[i] <= lo + eps && g[i] > 0.0) || (z[i] >= hi - eps && g[i] < 0.0)
            })
            .collect();
        let h = m.hessian(z, &y);

        let mut accepted = false;
        for _attempt in 0..40 {
            let Some(d) = box_newton_step(m, z, &g, &h, *shift, held.clone()) else {
                *shift = (*shift * 4.0).max(MIN_SHIFT);
                continue;
            };
            let mut trial: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + b).collect();
            m.project(&mut trial);
            let p: Vec<f64> = trial.iter().zip(z.iter()).map(|(a, b)| a - b).collect();
            let mut curvature = 0.0;
            for (i, &pi) in p.iter().enumerate() {
                if pi != 0.0 {
                    let row = &h[i * nv..(i + 1) * nv];
                    curvature += pi * row.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            let slope: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
            let predicted = -(slope + 0.5 * curvature);
            let tv = m.value(&trial);
            let actual = value - tv;
            let noise_floor = 1e-13 * (1.0 + value.abs());
            let ok = if predicted > noise_floor {
                actual >= 1e-4 * predicted
            } else {
                predicted > -noise_floor && actual >= -noise_floor
            };
            if ok {
                let ratio = if predicted > noise_floor { actual / predicted } else { 1.0 };
                if ratio > 0.75 {
                    *shift = if *shift <= MIN_SHIFT { 0.0 } else { *shift / 4.0 };
                } else if ratio < 0.25 {
                    *shift = (*shift * 4.0).max(MIN_SHIFT);
                }
                *z = trial;
                value = tv;
                accepted = true;
                break;
            }
            *shift = (*shift * 4.0).max(MIN_SHIFT);
        }
        if !accepted {
            return (it + 1, pg);
        }
    }
    (max_iter, pg)
}

pub(crate) fn solve_from(problem: &CollocationProblem, z0: &[f64], s: &AlSettings) -> AlResult {
    let (lower, upper) = problem.bounds();
    let mut z = z0.to_vec();
    for ((zi, lo), hi) in z.iter_mut().zip(&lower).zip(&upper) {
        *zi = zi.clamp(*lo, *hi);
    }
    let mut m = Merit {
        problem,
        weights: row_weights(problem, &z),
        lambda: vec![0.0; problem.layout.num_constraints()],
        rho: s.initial_penalty,
        lower,
        upper,
    };
    let min_weight = m.weights.iter().cloned().fold(1.0, f64::min);
    let mut omega = 1.0 / m.rho;
    let mut eta = m.rho.powf(-0.1);
    let mut inner_total = 0;
    let mut shift = 0.0;
    let mut history: Vec<f64> = Vec::new();
    let result = |z: Vec<f64>, outcome, violation, stationarity, outer, inner, penalty| AlResult {
        z,
        outcome,
        violation,
        stationarity,
        outer_iterations: outer,
        inner_iterations: inner,
        penalty,
    };

    for outer in 1..=s.max_outer {
        let (its, pg) = inner_solve(&m, &mut z, &mut shift, omega, s.max_inner);
        inner_total += its;
        let c = problem.residuals(&z);
        let violation = max_abs(&c);
        let scaled = c
            .iter()
            .zip(&m.weights)
            .fold(0.0f64, |a, (ci, wi)| a.max((ci * wi).abs()));
        if !violation.is_finite() || !pg.is_finite() {
            return result(z, AlOutcome::IterationLimit, f64::INFINITY, f64::INFINITY, outer, inner_total, m.rho);
        }
        if s.stop_when_feasible && violation < s.feasibility_tol {
            return result(z, AlOutcome::Feasible, violation, pg, outer, inner_total, m.rho);
        }
        if violation < s.constraint_tol && pg <= s.optimality_tol {
            return result(z, AlOutcome::Converged, violation, pg, outer, inner_total, m.rho);
        }
        history.push(violation);
        let stalled = history.len() > 3
            && violation > s.feasibility_tol
            && violation > 0.9 * history[history.len() - 4];
        if stalled && m.rho >= 1e6 {
            return result(z, AlOutcome::Stalled, violation, pg, outer, inner_total, m.rho);
        }
        if scaled <= eta {
            for ((li, ci), wi) in m.lambda.iter_mut().zip(&c).zip(&m.weights) {
                *li += m.rho * wi * ci;
            }
            eta /= m.rho.powf(0.9);
            omega *= 0.1;
        } else {
            m.rho *= s.penalty_growth;
            if m.rho > s.max_penalty {
                return result(z, AlOutcome::PenaltyLimit, violation, pg, outer, inner_total, m.rho);
            }
            eta = m.rho.powf(-0.1);
            omega = 1.0 / m.rho;
        }
        eta = eta.max(0.1 * s.constraint_tol * min_weight);
        omega = omega.max(0.1 * s.optimality_tol);
    }
    let c = problem.residuals(&z);
    let (g, _) = m.gradient(&z);
    let pg = m.projected_gradient_norm(&z, &g);
    result(z, AlOutcome::IterationLimit, max_abs(&c), pg, s.max_outer, inner_total, m.rho)
}
