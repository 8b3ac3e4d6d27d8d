//! Moment dynamics of the expansion stroke in normalized variables.
//!
//! Time is measured in units of `1/ω_h`, energies in units of the initial
//! energy `E_h`, and the control is `u = ω²/ω_h²`. The state
//!
//! ```text
//! x1 = (ω_h²/ω²)(E − L)/E_h,   x2 = (E + L)/E_h,   x3 = (ω_h/ω) C/E_h
//! ```
//!
//! evolves without any dependence on `du/dt`, so controls may jump.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Dimensionless noise strengths (`ω_h γ_a`, `ω_h γ_p`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Amplitude (stiffness) noise.
    pub gamma_a: f64,
    /// Phase damping.
    pub gamma_p: f64,
}

impl NoiseParams {
    pub const NONE: NoiseParams = NoiseParams {
        gamma_a: 0.0,
        gamma_p: 0.0,
    };

    pub fn new(gamma_a: f64, gamma_p: f64) -> Result<Self> {
        if !(gamma_a.is_finite() && gamma_a >= 0.0) {
            return Err(domain(format!("gamma_a must be >= 0, got {gamma_a}")));
        }
        if !(gamma_p.is_finite() && gamma_p >= 0.0) {
            return Err(domain(format!("gamma_p must be >= 0, got {gamma_p}")));
        }
        Ok(Self { gamma_a, gamma_p })
    }

    pub fn dephasing(gamma_p: f64) -> Result<Self> {
        Self::new(0.0, gamma_p)
    }

    pub fn amplitude(gamma_a: f64) -> Result<Self> {
        Self::new(gamma_a, 0.0)
    }

    pub fn is_noiseless(&self) -> bool {
        self.gamma_a == 0.0 && self.gamma_p == 0.0
    }
}

/// A complete problem instance: frequency ratio, noise and stroke duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// `ω_c/ω_h`, strictly between 0 and 1.
    pub freq_ratio: f64,
    pub noise: NoiseParams,
    /// Stroke duration `ω_h T`.
    pub duration: f64,
}

impl EngineConfig {
    pub fn new(freq_ratio: f64, noise: NoiseParams, duration: f64) -> Result<Self> {
        if !(freq_ratio > 0.0 && freq_ratio < 1.0) {
            return Err(domain(format!(
                "frequency ratio must lie in (0, 1), got {freq_ratio}"
            )));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(domain(format!("duration must be > 0, got {duration}")));
        }
        NoiseParams::new(noise.gamma_a, noise.gamma_p)?;
        Ok(Self {
            freq_ratio,
            noise,
            duration,
        })
    }

    /// Builds a configuration from dimensional quantities (angular
    /// frequencies in rad/s, noise strengths in s, duration in s).
    pub fn from_physical_units(
        omega_h: f64,
        omega_c: f64,
        gamma_a: f64,
        gamma_p: f64,
        duration: f64,
    ) -> Result<Self> {
        if !(omega_h > 0.0) {
            return Err(domain("omega_h must be positive"));
        }
        Self::new(
            omega_c / omega_h,
            NoiseParams::new(omega_h * gamma_a, omega_h * gamma_p)?,
            omega_h * duration,
        )
    }

    /// Lower control bound `ω_c²/ω_h²`.
    pub fn u_min(&self) -> f64 {
        self.freq_ratio * self.freq_ratio
    }

    pub fn with_duration(&self, duration: f64) -> Result<Self> {
        Self::new(self.freq_ratio, self.noise, duration)
    }
}

/// Normalized moment state `(x1, x2, x3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
}

impl MomentState {
    /// Thermal state at the start of the stroke.
    pub const INITIAL: MomentState = MomentState {
        x1: 1.0,
        x2: 1.0,
        x3: 0.0,
    };

    pub const fn new(x1: f64, x2: f64, x3: f64) -> Self {
        Self { x1, x2, x3 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x1, self.x2, self.x3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite() && self.x3.is_finite()
    }

    /// `x1 > 0` and `x2 > 0`; holds on every physical trajectory.
    pub fn is_positive(&self) -> bool {
        self.x1 > 0.0 && self.x2 > 0.0
    }
}

/// Energy, Lagrangian and correlation in units of `E_h`, together with the
/// control at which they were evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalState {
    pub energy: f64,
    pub lagrangian_mean: f64,
    pub correlation: f64,
    pub control: f64,
}

/// Time derivative of the normalized state.
pub fn rhs(state: &MomentState, u: f64, noise: &NoiseParams) -> Result<MomentState> {
    if !state.is_finite() || !u.is_finite() {
        return Err(domain("non-finite state or control in rhs"));
    }
    Ok(rhs_unchecked(state.to_array(), u, noise).into())
}

impl From<[f64; 3]> for MomentState {
    fn from(a: [f64; 3]) -> Self {
        Self::from_array(a)
    }
}

/// Right-hand side on raw arrays; used in inner loops.
#[inline]
pub fn rhs_unchecked(x: [f64; 3], u: f64, noise: &NoiseParams) -> [f64; 3] {
    let NoiseParams { gamma_a, gamma_p } = *noise;
    let [x1, x2, x3] = x;
    [
        -2.0 * gamma_p * u * x1 + 2.0 * gamma_p * x2 + 2.0 * x3,
        2.0 * (gamma_a + gamma_p) * u * u * x1 - 2.0 * gamma_p * u * x2 - 2.0 * u * x3,
        -u * x1 + x2 - 4.0 * gamma_p * u * x3,
    ]
}

/// Partial derivatives of the right-hand side. Row `r` holds
/// `∂f_r/∂(x1, x2, x3, u)`.
pub fn rhs_jacobian(x: [f64; 3], u: f64, noise: &NoiseParams) -> [[f64; 4]; 3] {
    let NoiseParams { gamma_a, gamma_p } = *noise;
    let g = gamma_a + gamma_p;
    let [x1, x2, x3] = x;
    [
        [-2.0 * gamma_p * u, 2.0 * gamma_p, 2.0, -2.0 * gamma_p * x1],
        [
            2.0 * g * u * u,
            -2.0 * gamma_p * u,
            -2.0 * u,
            4.0 * g * u * x1 - 2.0 * gamma_p * x2 - 2.0 * x3,
        ],
        [-u, 1.0, -4.0 * gamma_p * u, -x1 - 4.0 * gamma_p * x3],
    ]
}

/// Second derivatives of the right-hand side. Entry `[r][a][b]` is
/// `∂²f_r/∂v_a∂v_b` with `v = (x1, x2, x3, u)`.
pub fn rhs_hessian(x: [f64; 3], u: f64, noise: &NoiseParams) -> [[[f64; 4]; 4]; 3] {
    let NoiseParams { gamma_a, gamma_p } = *noise;
    let g = gamma_a + gamma_p;
    let x1 = x[0];
    let mut h = [[[0.0; 4]; 4]; 3];
    h[0][0][3] = -2.0 * gamma_p;
    h[1][0][3] = 4.0 * g * u;
    h[1][1][3] = -2.0 * gamma_p;
    h[1][2][3] = -2.0;
    h[1][3][3] = 4.0 * g * x1;
    h[2][0][3] = -1.0;
    h[2][2][3] = -4.0 * gamma_p;
    for hr in h.iter_mut() {
        for a in 0..3 {
            hr[3][a] = hr[a][3];
        }
    }
    h
}

/// Physical moments `(E, L, C)/E_h` from the normalized state.
pub fn to_physical(state: &MomentState, u: f64) -> Result<PhysicalState> {
    if !(u > 0.0) {
        return Err(domain(format!("control must be positive, got {u}")));
    }
    Ok(PhysicalState {
        energy: 0.5 * (state.x2 + u * state.x1),
        lagrangian_mean: 0.5 * (state.x2 - u * state.x1),
        correlation: u.sqrt() * state.x3,
        control: u,
    })
}

/// Inverse of [`to_physical`].
pub fn from_physical(phys: &PhysicalState) -> Result<MomentState> {
    let u = phys.control;
    if !(u > 0.0) {
        return Err(domain(format!("control must be positive, got {u}")));
    }
    Ok(MomentState {
        x1: (phys.energy - phys.lagrangian_mean) / u,
        x2: phys.energy + phys.lagrangian_mean,
        x3: phys.correlation / u.sqrt(),
    })
}

/// Casimir companion in normalized variables, `x1 x2 − x3²`.
///
/// Equals `(E² − L² − C²)/(u E_h²)`; conserved without noise.
pub fn casimir_companion(state: &MomentState) -> f64 {
    state.x1 * state.x2 - state.x3 * state.x3
}

/// Time derivative of [`casimir_companion`] along the flow.
///
/// Differentiating `x1 x2 − x3²` with [`rhs`] gives
/// `2γ_a (u x1)² + 2γ_p (x2 − u x1)² + 8γ_p u x3²`, which in physical
/// moments is `2[γ_a (E−L)² + 4γ_p (L² + C²)]`.
pub fn casimir_rate(state: &MomentState, u: f64, noise: &NoiseParams) -> Result<f64> {
    let p = to_physical(state, u)?;
    let el = p.energy - p.lagrangian_mean;
    let l = p.lagrangian_mean;
    let c = p.correlation;
    Ok(2.0 * (noise.gamma_a * el * el + 4.0 * noise.gamma_p * (l * l + c * c)))
}

/// Efficiency loss `δ = (ω_h/ω_c)(E_c/E_h) − 1`.
pub fn delta_measure(final_energy_ratio: f64, freq_ratio: f64) -> Result<f64> {
    if !(freq_ratio > 0.0 && freq_ratio < 1.0) {
        return Err(domain(format!(
            "frequency ratio must lie in (0, 1), got {freq_ratio}"
        )));
    }
    if !(final_energy_ratio > 0.0) {
        return Err(domain(format!(
            "final energy ratio must be positive, got {final_energy_ratio}"
        )));
    }
    Ok(final_energy_ratio / freq_ratio - 1.0)
}

/// Energy left in the `L` and `C` modes, `√(L² + C²)/E_h`.
pub fn parasitic_energy(final_state: &PhysicalState) -> f64 {
    final_state.lagrangian_mean.hypot(final_state.correlation)
}
