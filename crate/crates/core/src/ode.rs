//! Dormand–Prince 5(4) for three-dimensional systems, with continuous
//! output and event location.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

pub type Vec3 = [f64; 3];

/// Step-size control settings.
#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

/// One accepted step with its continuous-extension coefficients.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    /// Upper end of validity; below `t0 + h` when an event cut the step.
    pub t_end: f64,
    rc: [Vec3; 5],
}

impl DenseStep {
    pub fn eval(&self, t: f64) -> Vec3 {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let mut y = [0.0; 3];
        for (i, yi) in y.iter_mut().enumerate() {
            let r = &self.rc;
            *yi = r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
        }
        y
    }
}

/// Result of one call to [`solve`].
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub steps: Vec<DenseStep>,
    pub t_end: f64,
    pub y_end: Vec3,
    /// Set when integration stopped at an event.
    pub event_time: Option<f64>,
    pub evaluations: usize,
    pub rejected: usize,
}

impl OdeSolution {
    /// Continuous output at `t` within the integrated span.
    pub fn eval(&self, t: f64) -> Vec3 {
        if t >= self.t_end {
            return self.y_end;
        }
        let i = self
            .steps
            .partition_point(|s| s.t0 + s.h <= t)
            .min(self.steps.len() - 1);
        self.steps[i].eval(t)
    }
}

fn axpy(y: &Vec3, terms: &[(f64, &Vec3)]) -> Vec3 {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..3 {
            out[i] += c * k[i];
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t1`.
///
/// When `event` is given, integration stops at the first time where it
/// changes sign from negative to non-negative.
pub fn solve<F, G>(
    mut f: F,
    t0: f64,
    y0: Vec3,
    t1: f64,
    ctl: &StepControl,
    mut event: Option<G>,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &Vec3) -> Result<Vec3>,
    G: FnMut(f64, &Vec3) -> f64,
{
    let span = t1 - t0;
    let mut out = OdeSolution {
        steps: Vec::new(),
        t_end: t0,
        y_end: y0,
        event_time: None,
        evaluations: 0,
        rejected: 0,
    };
    if !(span > 0.0) {
        return Ok(out);
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    out.evaluations += 1;
    let mut g_prev = event.as_mut().map(|g| g(t, &y));
    let mut h = initial_step(&mut f, t, &y, &k1, span, ctl)?;
    out.evaluations += 1;
    let mut last_rejected = false;

    for _ in 0..ctl.max_steps {
        if t1 - t <= 1e-14 * t1.abs().max(1.0) {
            break;
        }
        h = h.min(ctl.max_step).min(t1 - t);
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Stiffness { t, h });
        }
        let k2 = f(t + C2 * h, &axpy(&y, &[(h * A21, &k1)]))?;
        let k3 = f(t + C3 * h, &axpy(&y, &[(h * A31, &k1), (h * A32, &k2)]))?;
        let k4 = f(
            t + C4 * h,
            &axpy(&y, &[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)]),
        )?;
        let k5 = f(
            t + C5 * h,
            &axpy(&y, &[(h * A51, &k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)]),
        )?;
        let k6 = f(
            t + h,
            &axpy(
                &y,
                &[(h * A61, &k1), (h * A62, &k2), (h * A63, &k3), (h * A64, &k4), (h * A65, &k5)],
            ),
        )?;
        let y_new = axpy(
            &y,
            &[(h * A71, &k1), (h * A73, &k3), (h * A74, &k4), (h * A75, &k5), (h * A76, &k6)],
        );
        let k7 = f(t + h, &y_new)?;
        out.evaluations += 6;

        if !y_new.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { t: t + h });
        }

        let mut err = 0.0;
        for i in 0..3 {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = ctl.abs_tol + ctl.rel_tol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / 3.0).sqrt();

        if err <= 1.0 {
            let mut rc = [[0.0; 3]; 5];
            for i in 0..3 {
                let dy = y_new[i] - y[i];
                let bspl = h * k1[i] - dy;
                rc[0][i] = y[i];
                rc[1][i] = dy;
                rc[2][i] = bspl;
                rc[3][i] = dy - h * k7[i] - bspl;
                rc[4][i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let mut step = DenseStep {
                t0: t,
                h,
                t_end: t + h,
                rc,
            };

            if let (Some(g), Some(gp)) = (event.as_mut(), g_prev) {
                let g_new = g(t + h, &y_new);
                if gp < 0.0 && g_new >= 0.0 {
                    let te = locate_event(&step, g, t, gp, g_new);
                    let ye = step.eval(te);
                    step.t_end = te;
                    out.steps.push(step);
                    out.t_end = te;
                    out.y_end = ye;
                    out.event_time = Some(te);
                    return Ok(out);
                }
                g_prev = Some(g_new);
            }

            out.steps.push(step);
            t += h;
            y = y_new;
            k1 = k7;
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac.clamp(0.2, 10.0);
            last_rejected = false;
        } else {
            out.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            last_rejected = true;
        }
    }
    if t1 - t > 1e-14 * t1.abs().max(1.0) {
        return Err(Error::Stiffness { t, h });
    }
    if let Some(last) = out.steps.last_mut() {
        last.t_end = t1;
    }
    out.t_end = t1;
    out.y_end = y;
    Ok(out)
}

fn initial_step<F>(f: &mut F, t: f64, y: &Vec3, f0: &Vec3, span: f64, ctl: &StepControl) -> Result<f64>
where
    F: FnMut(f64, &Vec3) -> Result<Vec3>,
{
    let sc: Vec<f64> = y.iter().map(|v| ctl.abs_tol + ctl.rel_tol * v.abs()).collect();
    let norm = |v: &Vec3| -> f64 {
        (v.iter().zip(&sc).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() / 3.0).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span).min(ctl.max_step);
    let y1 = axpy(y, &[(h0, f0)]);
    let f1 = f(t + h0, &y1)?;
    let diff: Vec3 = [f1[0] - f0[0], f1[1] - f0[1], f1[2] - f0[2]];
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span).min(ctl.max_step))
}

/// Illinois-modified regula falsi on the continuous extension.
fn locate_event<G: FnMut(f64, &Vec3) -> f64>(
    step: &DenseStep,
    g: &mut G,
    mut a: f64,
    mut ga: f64,
    gb: f64,
) -> f64 {
    let mut b = step.t0 + step.h;
    let mut gb = gb;
    if gb == 0.0 {
        return b;
    }
    let mut side = 0;
    for _ in 0..200 {
        let m = (a * gb - b * ga) / (gb - ga);
        let m = if m > a && m < b { m } else { 0.5 * (a + b) };
        let gm = g(m, &step.eval(m));
        if gm >= 0.0 {
            b = m;
            gb = gm;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        } else {
            a = m;
            ga = gm;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        }
        if b - a <= 4.0 * f64::EPSILON * b.abs().max(1.0) || gm == 0.0 {
            break;
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ctl(tol: f64) -> StepControl {
        StepControl {
            rel_tol: tol,
            abs_tol: tol * 1e-2,
            max_step: 1.0,
            max_steps: 1_000_000,
        }
    }

    type NoEvent = fn(f64, &Vec3) -> f64;

    #[test]
    fn harmonic_oscillator_matches_closed_form() {
        let sol = solve(
            |_, y: &Vec3| Ok([y[1], -y[0], 0.0]),
            0.0,
            [1.0, 0.0, 0.0],
            10.0,
            &ctl(1e-10),
            None::<NoEvent>,
        )
        .unwrap();
        assert_abs_diff_eq!(sol.y_end[0], 10f64.cos(), epsilon = 1e-8);
        assert_abs_diff_eq!(sol.y_end[1], -10f64.sin(), epsilon = 1e-8);
        for i in 0..=100 {
            let t = i as f64 * 0.1;
            let y = sol.eval(t);
            assert_abs_diff_eq!(y[0], t.cos(), epsilon = 1e-7);
        }
    }

    #[test]
    fn event_stops_at_crossing() {
        // y = t, event y - 0.3 = 0
        let sol = solve(
            |_, _: &Vec3| Ok([1.0, 0.0, 0.0]),
            0.0,
            [0.0; 3],
            1.0,
            &ctl(1e-9),
            Some(|_: f64, y: &Vec3| y[0] - 0.3),
        )
        .unwrap();
        let te = sol.event_time.unwrap();
        assert_abs_diff_eq!(te, 0.3, epsilon = 1e-13);
        assert_abs_diff_eq!(sol.y_end[0], 0.3, epsilon = 1e-13);
    }

    #[test]
    fn divergence_is_reported() {
        let r = solve(
            |_, y: &Vec3| Ok([y[0] * y[0], 0.0, 0.0]),
            0.0,
            [1.0, 0.0, 0.0],
            2.0,
            &ctl(1e-8),
            None::<NoEvent>,
        );
        assert!(matches!(r, Err(Error::Stiffness { .. }) | Err(Error::Divergence { .. })));
    }
}
