//! Legendre–Gauss–Lobatto nodes, spectral differentiation and barycentric
//! interpolation on `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Legendre polynomial `L_n(t)` and its derivative by the three-term
/// recurrence.
pub fn legendre_eval(n: usize, t: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, t);
    let (mut d_prev, mut d) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * t * p - kf * p_prev) / (kf + 1.0);
        let d_next = d_prev + (2.0 * kf + 1.0) * p;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d)
}

/// The `n + 1` LGL nodes: `±1` and the roots of `L_n'`, ascending.
///
/// Interior nodes are found by Newton iteration on `L_n'` seeded with the
/// Chebyshev–Gauss–Lobatto points, then symmetrized about the origin.
pub fn lgl_nodes(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(domain("LGL order must be at least 1"));
    }
    let nf = n as f64;
    let lambda = nf * (nf + 1.0);
    let mut nodes = vec![0.0; n + 1];
    nodes[0] = -1.0;
    nodes[n] = 1.0;
    for (j, node) in nodes.iter_mut().enumerate().take(n).skip(1) {
        let mut t = -(std::f64::consts::PI * j as f64 / nf).cos();
        let mut converged = false;
        for _ in 0..100 {
            let (p, d) = legendre_eval(n, t);
            // L'' from the Legendre equation.
            let dd = (2.0 * t * d - lambda * p) / (1.0 - t * t);
            let step = d / dd;
            t -= step;
            if step.abs() <= 4.0 * f64::EPSILON * t.abs().max(1e-3) {
                converged = true;
                break;
            }
        }
        if !converged || !(t > -1.0 && t < 1.0) {
            return Err(domain(format!(
                "Newton iteration for LGL node {j} of order {n} did not converge"
            )));
        }
        *node = t;
    }
    for j in 1..=(n - 1) / 2 {
        let a = 0.5 * (nodes[n - j] - nodes[j]);
        nodes[j] = -a;
        nodes[n - j] = a;
    }
    if n % 2 == 0 {
        nodes[n / 2] = 0.0;
    }
    if nodes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(domain(format!("LGL nodes of order {n} are not increasing")));
    }
    Ok(nodes)
}

/// The LGL differentiation matrix, row-major `(n+1) × (n+1)`.
pub fn diff_matrix(nodes: &[f64], n: usize) -> Result<Vec<f64>> {
    if nodes.len() != n + 1 {
        return Err(domain(format!(
            "expected {} nodes, got {}",
            n + 1,
            nodes.len()
        )));
    }
    let m = n + 1;
    let ln: Vec<f64> = nodes.iter().map(|&t| legendre_eval(n, t).0).collect();
    let mut d = vec![0.0; m * m];
    for k in 0..m {
        for i in 0..m {
            if k != i {
                d[k * m + i] = ln[k] / ln[i] / (nodes[k] - nodes[i]);
            }
        }
    }
    let corner = (n * (n + 1)) as f64 / 4.0;
    d[0] = -corner;
    d[m * m - 1] = corner;
    Ok(d)
}

/// Nodes, differentiation matrix and barycentric weights of one order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LglGrid {
    pub order: usize,
    pub nodes: Vec<f64>,
    /// Row-major `(order+1)²` entries.
    pub diff_matrix: Vec<f64>,
    /// Barycentric weights, proportional to `1/L_N(t_i)` on this grid.
    pub weights: Vec<f64>,
}

impl LglGrid {
    pub fn new(order: usize) -> Result<Self> {
        let nodes = lgl_nodes(order)?;
        let diff_matrix = diff_matrix(&nodes, order)?;
        let weights = nodes.iter().map(|&t| 1.0 / legendre_eval(order, t).0).collect();
        Ok(Self {
            order,
            nodes,
            diff_matrix,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.order + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn d(&self, k: usize, i: usize) -> f64 {
        self.diff_matrix[k * self.len() + i]
    }

    pub fn d_row(&self, k: usize) -> &[f64] {
        let m = self.len();
        &self.diff_matrix[k * m..(k + 1) * m]
    }

    /// `D · values`.
    pub fn differentiate(&self, values: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.d_row(k).iter().zip(values).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Interpolating polynomial through `(nodes, values)` evaluated at `t`.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        barycentric_eval(&self.nodes, &self.weights, values, t)
    }
}

/// Second-form barycentric evaluation; exact at the nodes.
pub fn barycentric_eval(nodes: &[f64], weights: &[f64], values: &[f64], t: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&tj, &wj), &fj) in nodes.iter().zip(weights).zip(values) {
        let diff = t - tj;
        if diff == 0.0 {
            return fj;
        }
        let c = wj / diff;
        num += c * fj;
        den += c;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn legendre_small_cases() {
        assert_eq!(legendre_eval(2, 0.0).0, -0.5);
        for n in 0..40 {
            assert_abs_diff_eq!(legendre_eval(n, 1.0).0, 1.0, epsilon = 1e-13);
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert_abs_diff_eq!(legendre_eval(n, -1.0).0, sign, epsilon = 1e-13);
            // L_n'(1) = n(n+1)/2
            assert_abs_diff_eq!(
                legendre_eval(n, 1.0).1,
                (n * (n + 1)) as f64 / 2.0,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn legendre_five_against_closed_form() {
        // L5 = (63t^5 - 70t^3 + 15t)/8, L5' = (315t^4 - 210t^2 + 15)/8
        let t: f64 = 0.3;
        let (p, d) = legendre_eval(5, t);
        let p_exact = (63.0 * t.powi(5) - 70.0 * t.powi(3) + 15.0 * t) / 8.0;
        let d_exact = (315.0 * t.powi(4) - 210.0 * t.powi(2) + 15.0) / 8.0;
        assert_abs_diff_eq!(p, p_exact, epsilon = 1e-15);
        assert_abs_diff_eq!(d, d_exact, epsilon = 1e-14);
        // Values computed independently in exact rational arithmetic.
        assert_abs_diff_eq!(p, 0.34538625, epsilon = 1e-15);
        assert_abs_diff_eq!(d, -0.1685625, epsilon = 1e-14);
    }

    #[test]
    fn low_order_nodes() {
        assert_eq!(lgl_nodes(1).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(lgl_nodes(2).unwrap(), vec![-1.0, 0.0, 1.0]);
        let n3 = lgl_nodes(3).unwrap();
        let r = 1.0 / 5f64.sqrt();
        assert_abs_diff_eq!(n3[1], -r, epsilon = 1e-15);
        assert_abs_diff_eq!(n3[2], r, epsilon = 1e-15);
        assert!(lgl_nodes(0).is_err());
    }

    #[test]
    fn nodes_are_roots_of_derivative() {
        for n in [4, 10, 25, 40, 69, 120, 200] {
            let nodes = lgl_nodes(n).unwrap();
            assert_eq!(nodes.len(), n + 1);
            for &t in &nodes[1..n] {
                let (_, d) = legendre_eval(n, t);
                // |L_n'| near a root grows like n^2 times the rounding in t.
                assert!(d.abs() < 1e-13 * (n * n) as f64, "n={n} t={t} L'={d}");
            }
        }
    }

    #[test]
    fn order_69_grid_is_symmetric() {
        let nodes = lgl_nodes(69).unwrap();
        assert_eq!(nodes.len(), 70);
        for k in 0..70 {
            assert_abs_diff_eq!(nodes[k], -nodes[69 - k], epsilon = 1e-13);
        }
    }

    #[test]
    fn order_one_matrix() {
        let d = diff_matrix(&[-1.0, 1.0], 1).unwrap();
        assert_eq!(d, vec![-0.5, 0.5, -0.5, 0.5]);
    }

    #[test]
    fn matrix_is_exact_on_monomials() {
        for n in [4, 12, 30, 69] {
            let g = LglGrid::new(n).unwrap();
            for m in 0..=n {
                let f: Vec<f64> = g.nodes.iter().map(|t| t.powi(m as i32)).collect();
                let df = g.differentiate(&f);
                for (k, &t) in g.nodes.iter().enumerate() {
                    let exact = if m == 0 { 0.0 } else { m as f64 * t.powi(m as i32 - 1) };
                    assert!(
                        (df[k] - exact).abs() < 1e-10 * (n * n) as f64,
                        "n={n} m={m} k={k}: {} vs {exact}",
                        df[k]
                    );
                }
            }
        }
    }

    #[test]
    fn matrix_antisymmetry() {
        let g = LglGrid::new(69).unwrap();
        let n = g.order;
        for k in 0..=n {
            for i in 0..=n {
                assert_abs_diff_eq!(g.d(k, i), -g.d(n - k, n - i), epsilon = 1e-12 * g.d(0, 0).abs());
            }
        }
    }

    #[test]
    fn cardinality_and_partition_of_unity() {
        let g = LglGrid::new(20).unwrap();
        for j in 0..g.len() {
            let mut e = vec![0.0; g.len()];
            e[j] = 1.0;
            for (k, &t) in g.nodes.iter().enumerate() {
                let expected = if k == j { 1.0 } else { 0.0 };
                assert_eq!(g.interpolate(&e, t), expected);
            }
        }
        let ones = vec![2.5; g.len()];
        for i in 0..50 {
            let t = -1.0 + 2.0 * (i as f64 + 0.37) / 50.0;
            assert_abs_diff_eq!(g.interpolate(&ones, t), 2.5, epsilon = 1e-13);
        }
    }
}
