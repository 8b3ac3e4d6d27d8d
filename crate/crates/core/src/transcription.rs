//! Direct transcription of the optimal control problem on an LGL grid.
//!
//! Decision vector layout (`n = N + 1` nodes):
//!
//! ```text
//! [ x1_0 .. x1_N | x2_0 .. x2_N | x3_0 .. x3_N | u_0 .. u_N ]
//! ```
//!
//! Equality constraints, in order: `3n` collocation residuals
//! `(2/T) Σ_i D_ki x_ri − f_r(x_k, u_k)` (all of `r = 1` first, then
//! `r = 2`, `r = 3`), three initial conditions and two terminal
//! conditions `x2_N − u_N x1_N = 0`, `x3_N = 0`. The objective is `x2_N`.

use serde::{Deserialize, Serialize};

use crate::controls::{ControlProfile, NodalControl};
use crate::dynamics::{rhs_hessian, rhs_jacobian, rhs_unchecked, EngineConfig};
use crate::error::{domain, Result};
use crate::lgl::LglGrid;

/// Index arithmetic for the decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub nodes: usize,
}

impl Layout {
    #[inline]
    pub fn x(&self, r: usize, k: usize) -> usize {
        r * self.nodes + k
    }

    #[inline]
    pub fn u(&self, k: usize) -> usize {
        3 * self.nodes + k
    }

    pub fn num_vars(&self) -> usize {
        4 * self.nodes
    }

    pub fn num_constraints(&self) -> usize {
        3 * self.nodes + 5
    }

    /// Index of the objective variable `x2_N`.
    pub fn objective_index(&self) -> usize {
        self.x(1, self.nodes - 1)
    }
}

/// Sparse row representation of a Jacobian; column indices within a row
/// are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    pub cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|row| {
                let mut d = vec![0.0; self.cols];
                for &(j, v) in row {
                    d[j] += v;
                }
                d
            })
            .collect()
    }

    /// `Jᵀ y`.
    pub fn transpose_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &yi) in self.rows.iter().zip(y) {
            if yi != 0.0 {
                for &(j, v) in row {
                    out[j] += v * yi;
                }
            }
        }
        out
    }
}

/// The discrete nonlinear program for one configuration and grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationProblem {
    pub grid: LglGrid,
    pub config: EngineConfig,
    pub layout: Layout,
}

/// Transcribes `config` on an LGL grid of order `order`.
pub fn transcribe(config: &EngineConfig, order: usize) -> Result<CollocationProblem> {
    if order < 4 {
        return Err(domain(format!("collocation order must be >= 4, got {order}")));
    }
    let config = EngineConfig::new(config.freq_ratio, config.noise, config.duration)?;
    let grid = LglGrid::new(order)?;
    Ok(CollocationProblem {
        layout: Layout { nodes: grid.len() },
        grid,
        config,
    })
}

impl CollocationProblem {
    pub fn order(&self) -> usize {
        self.grid.order
    }

    fn time_scale(&self) -> f64 {
        2.0 / self.config.duration
    }

    /// Physical times `t_k = (τ_k + 1) T/2` of the nodes.
    pub fn node_times(&self) -> Vec<f64> {
        let half = 0.5 * self.config.duration;
        self.grid.nodes.iter().map(|&tau| (tau + 1.0) * half).collect()
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        z[self.layout.objective_index()]
    }

    /// Lower and upper bounds of every decision variable.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let l = self.layout;
        let n = l.nodes;
        let lo = self.config.u_min();
        let mut lower = vec![f64::NEG_INFINITY; l.num_vars()];
        let mut upper = vec![f64::INFINITY; l.num_vars()];
        for k in 0..n {
            lower[l.u(k)] = lo;
            upper[l.u(k)] = 1.0;
        }
        lower[l.u(0)] = 1.0;
        upper[l.u(n - 1)] = lo;
        (lower, upper)
    }

    #[inline]
    fn node_state(&self, z: &[f64], k: usize) -> ([f64; 3], f64) {
        let l = self.layout;
        ([z[l.x(0, k)], z[l.x(1, k)], z[l.x(2, k)]], z[l.u(k)])
    }

    /// All equality-constraint residuals.
    pub fn residuals(&self, z: &[f64]) -> Vec<f64> {
        let l = self.layout;
        let n = l.nodes;
        let s = self.time_scale();
        let noise = &self.config.noise;
        let mut c = vec![0.0; l.num_constraints()];
        for k in 0..n {
            let (x, u) = self.node_state(z, k);
            let f = rhs_unchecked(x, u, noise);
            let drow = self.grid.d_row(k);
            for r in 0..3 {
                let dx: f64 = drow.iter().zip(&z[r * n..(r + 1) * n]).map(|(a, b)| a * b).sum();
                c[r * n + k] = s * dx - f[r];
            }
        }
        let m = 3 * n;
        c[m] = z[l.x(0, 0)] - 1.0;
        c[m + 1] = z[l.x(1, 0)] - 1.0;
        c[m + 2] = z[l.x(2, 0)];
        c[m + 3] = z[l.x(1, n - 1)] - z[l.u(n - 1)] * z[l.x(0, n - 1)];
        c[m + 4] = z[l.x(2, n - 1)];
        c
    }

    /// Collocation rows only, `3n` entries.
    pub fn collocation_residuals(&self, z: &[f64]) -> Vec<f64> {
        let mut c = self.residuals(z);
        c.truncate(3 * self.layout.nodes);
        c
    }

    /// Analytic Jacobian of [`residuals`](Self::residuals).
    pub fn jacobian(&self, z: &[f64]) -> SparseRows {
        let l = self.layout;
        let n = l.nodes;
        let s = self.time_scale();
        let noise = &self.config.noise;
        let mut rows = Vec::with_capacity(l.num_constraints());
        for r in 0..3 {
            for k in 0..n {
                let (x, u) = self.node_state(z, k);
                let jf = rhs_jacobian(x, u, noise);
                let mut row: Vec<(usize, f64)> = self
                    .grid
                    .d_row(k)
                    .iter()
                    .enumerate()
                    .map(|(i, &d)| (l.x(r, i), s * d))
                    .collect();
                for (a, &df) in jf[r].iter().enumerate() {
                    if df == 0.0 {
                        continue;
                    }
                    if a == r {
                        row[k].1 -= df;
                    } else if a < 3 {
                        row.push((l.x(a, k), -df));
                    } else {
                        row.push((l.u(k), -df));
                    }
                }
                rows.push(row);
            }
        }
        rows.push(vec![(l.x(0, 0), 1.0)]);
        rows.push(vec![(l.x(1, 0), 1.0)]);
        rows.push(vec![(l.x(2, 0), 1.0)]);
        rows.push(vec![
            (l.x(1, n - 1), 1.0),
            (l.x(0, n - 1), -z[l.u(n - 1)]),
            (l.u(n - 1), -z[l.x(0, n - 1)]),
        ]);
        rows.push(vec![(l.x(2, n - 1), 1.0)]);
        SparseRows {
            cols: l.num_vars(),
            rows,
        }
    }

    /// `Σ_i y_i ∇²c_i(z)`, added into the row-major dense matrix `h`.
    pub fn add_constraint_hessian(&self, z: &[f64], y: &[f64], h: &mut [f64]) {
        let l = self.layout;
        let n = l.nodes;
        let nv = l.num_vars();
        let noise = &self.config.noise;
        let idx = |a: usize, k: usize| if a < 3 { l.x(a, k) } else { l.u(k) };
        for k in 0..n {
            let (x, u) = self.node_state(z, k);
            let hf = rhs_hessian(x, u, noise);
            for r in 0..3 {
                let yi = y[r * n + k];
                if yi == 0.0 {
                    continue;
                }
                for a in 0..4 {
                    for b in 0..4 {
                        let v = hf[r][a][b];
                        if v != 0.0 {
                            h[idx(a, k) * nv + idx(b, k)] -= yi * v;
                        }
                    }
                }
            }
        }
        let yt = y[3 * n + 3];
        let (i, j) = (l.x(0, n - 1), l.u(n - 1));
        h[i * nv + j] -= yt;
        h[j * nv + i] -= yt;
    }

    /// Nodal `(x1, x2, x3, u)` columns of a decision vector.
    pub fn split<'a>(&self, z: &'a [f64]) -> [&'a [f64]; 4] {
        let n = self.layout.nodes;
        [&z[0..n], &z[n..2 * n], &z[2 * n..3 * n], &z[3 * n..4 * n]]
    }

    /// Serializable description for debugging and cross-checking.
    pub fn dump(&self) -> ProblemDump {
        let (lower, upper) = self.bounds();
        ProblemDump {
            order: self.order(),
            config: self.config,
            nodes: self.grid.nodes.clone(),
            node_times: self.node_times(),
            diff_matrix: (0..self.grid.len()).map(|k| self.grid.d_row(k).to_vec()).collect(),
            lower_bounds: lower.iter().map(|v| v.is_finite().then_some(*v)).collect(),
            upper_bounds: upper.iter().map(|v| v.is_finite().then_some(*v)).collect(),
            layout: LayoutDump {
                num_vars: self.layout.num_vars(),
                num_constraints: self.layout.num_constraints(),
                variable_blocks: ["x1", "x2", "x3", "u"].map(String::from).to_vec(),
                constraint_blocks: [
                    "collocation_x1",
                    "collocation_x2",
                    "collocation_x3",
                    "initial_x1",
                    "initial_x2",
                    "initial_x3",
                    "terminal_x2_minus_u_x1",
                    "terminal_x3",
                ]
                .map(String::from)
                .to_vec(),
                objective_index: self.layout.objective_index(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutDump {
    pub num_vars: usize,
    pub num_constraints: usize,
    pub variable_blocks: Vec<String>,
    pub constraint_blocks: Vec<String>,
    pub objective_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDump {
    pub order: usize,
    pub config: EngineConfig,
    pub nodes: Vec<f64>,
    pub node_times: Vec<f64>,
    pub diff_matrix: Vec<Vec<f64>>,
    /// `null` marks an unbounded side.
    pub lower_bounds: Vec<Option<f64>>,
    pub upper_bounds: Vec<Option<f64>>,
    pub layout: LayoutDump,
}

/// Continuous control from nodal values: barycentric interpolation on the
/// grid, mapped to `[0, duration]`. Clamping to the admissible set happens
/// where the profile is consumed.
pub fn interpolate_control(grid: &LglGrid, values: &[f64], duration: f64) -> Result<ControlProfile> {
    if values.len() != grid.len() {
        return Err(domain(format!(
            "expected {} nodal values, got {}",
            grid.len(),
            values.len()
        )));
    }
    if !(duration > 0.0) {
        return Err(domain("duration must be positive"));
    }
    Ok(ControlProfile::Nodal(NodalControl {
        nodes: grid.nodes.clone(),
        weights: grid.weights.clone(),
        values: values.to_vec(),
        duration,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::NoiseParams;
    use crate::integrator::IntegrationOptions;
    use approx::assert_abs_diff_eq;

    fn problem(noise: NoiseParams, t: f64, order: usize) -> CollocationProblem {
        transcribe(&EngineConfig::new(1.0 / 3.0, noise, t).unwrap(), order).unwrap()
    }

    #[test]
    fn equilibrium_has_zero_collocation_residuals() {
        let p = problem(NoiseParams::NONE, 3.0, 12);
        let l = p.layout;
        let mut z = vec![0.0; l.num_vars()];
        for k in 0..l.nodes {
            z[l.x(0, k)] = 1.0;
            z[l.x(1, k)] = 1.0;
            z[l.u(k)] = 1.0;
        }
        let c = p.residuals(&z);
        for v in &c[..3 * l.nodes + 3] {
            assert!(v.abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn order_below_four_is_rejected() {
        let cfg = EngineConfig::new(0.5, NoiseParams::NONE, 1.0).unwrap();
        assert!(transcribe(&cfg, 3).is_err());
        assert!(transcribe(&cfg, 4).is_ok());
    }

    #[test]
    fn bounds_fix_endpoint_controls() {
        let p = problem(NoiseParams::NONE, 3.0, 8);
        let (lo, hi) = p.bounds();
        let l = p.layout;
        assert_eq!((lo[l.u(0)], hi[l.u(0)]), (1.0, 1.0));
        assert_eq!((lo[l.u(8)], hi[l.u(8)]), (1.0 / 9.0, 1.0 / 9.0));
        assert_eq!((lo[l.u(3)], hi[l.u(3)]), (1.0 / 9.0, 1.0));
        assert!(lo[l.x(0, 3)].is_infinite());
    }

    #[test]
    fn interpolation_is_cardinal_and_constant_preserving() {
        let g = LglGrid::new(10).unwrap();
        let vals: Vec<f64> = (0..11).map(|i| 0.2 + 0.05 * i as f64).collect();
        let p = interpolate_control(&g, &vals, 4.0).unwrap();
        for (k, &tau) in g.nodes.iter().enumerate() {
            let t = (tau + 1.0) * 2.0;
            assert_abs_diff_eq!(p.value(t).unwrap(), vals[k], epsilon = 1e-14);
        }
        let c = interpolate_control(&g, &[0.7; 11], 4.0).unwrap();
        for i in 0..=40 {
            assert_abs_diff_eq!(c.value(i as f64 * 0.1).unwrap(), 0.7, epsilon = 1e-14);
        }
        assert!(interpolate_control(&g, &[0.7; 10], 4.0).is_err());
    }

    fn sample_point(p: &CollocationProblem) -> Vec<f64> {
        let l = p.layout;
        let t = p.node_times();
        let mut z = vec![0.0; l.num_vars()];
        for k in 0..l.nodes {
            let s = t[k] / p.config.duration;
            z[l.x(0, k)] = 1.0 + 1.5 * s + 0.1 * (3.0 * s).sin();
            z[l.x(1, k)] = 1.0 - 0.6 * s * s;
            z[l.x(2, k)] = 0.3 * (2.0 * s).sin();
            z[l.u(k)] = 1.0 - 0.8 * s + 0.05 * (7.0 * s).cos();
        }
        z
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = problem(NoiseParams::new(0.02, 0.01).unwrap(), 2.5, 9);
        let z = sample_point(&p);
        let jac = p.jacobian(&z).to_dense();
        let h = 1e-6;
        for j in 0..z.len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let (cp, cm) = (p.residuals(&zp), p.residuals(&zm));
            for i in 0..cp.len() {
                let fd = (cp[i] - cm[i]) / (2.0 * h);
                assert!((fd - jac[i][j]).abs() < 1e-6, "({i},{j}) {fd} vs {}", jac[i][j]);
            }
        }
    }

    #[test]
    fn constraint_hessian_matches_finite_differences() {
        let p = problem(NoiseParams::new(0.03, 0.02).unwrap(), 2.0, 6);
        let z = sample_point(&p);
        let nv = z.len();
        let y: Vec<f64> = (0..p.layout.num_constraints()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let mut hess = vec![0.0; nv * nv];
        p.add_constraint_hessian(&z, &y, &mut hess);
        let grad = |z: &[f64]| p.jacobian(z).transpose_mul(&y);
        let h = 1e-6;
        for j in 0..nv {
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[j] += h;
            zm[j] -= h;
            let (gp, gm) = (grad(&zp), grad(&zm));
            for i in 0..nv {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert!((fd - hess[i * nv + j]).abs() < 1e-6, "({i},{j})");
            }
        }
    }

    #[test]
    fn residuals_of_a_resolved_trajectory_decay_spectrally() {
        use crate::controls::omega_profile_rescaled;
        use crate::integrator::integrate_at;
        let mut last = f64::INFINITY;
        for order in [8, 16, 32] {
            let p = problem(NoiseParams::dephasing(0.01).unwrap(), 3.0, order);
            let ctl = omega_profile_rescaled(1, 1.0 / 3.0, 3.0).unwrap();
            let t = p.node_times();
            let opts = IntegrationOptions {
                rel_tol: 1e-12,
                abs_tol: 1e-13,
                ..Default::default()
            };
            let traj = integrate_at(&p.config, &ctl, &opts, &t).unwrap();
            let l = p.layout;
            let mut z = vec![0.0; l.num_vars()];
            for k in 0..l.nodes {
                let s = traj.states[k].to_array();
                for r in 0..3 {
                    z[l.x(r, k)] = s[r];
                }
                z[l.u(k)] = traj.controls[k];
            }
            let worst = p
                .collocation_residuals(&z)
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(worst < last, "order {order}: {worst} >= {last}");
            last = worst;
        }
        assert!(last < 1e-6, "{last}");
    }

    #[test]
    fn dump_is_json_serializable() {
        let p = problem(NoiseParams::dephasing(0.01).unwrap(), 2.0, 6);
        let text = serde_json::to_string(&p.dump()).unwrap();
        let back: ProblemDump = serde_json::from_str(&text).unwrap();
        assert_eq!(back.nodes.len(), 7);
        assert_eq!(back.diff_matrix.len(), 7);
        assert_eq!(back.layout.num_constraints, 26);
        assert_eq!(back.upper_bounds[0], None);
    }
}
