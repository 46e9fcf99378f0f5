//! Rotation-angle dependence of the radiative damping and the dissipation order
//! parameter built from it.
//!
//! Rotating the resonator projects the line's excitation field onto two orthogonal
//! current patterns: `γ1(θ) = γ1(0)·cos²θ`, `γ2(θ) = γ2(90°)·sin²θ`. The order
//! parameter `Φγ = (γ1² − γ2²)/(γ1² + γ2²)` runs from +1 (mode 1 dominates the
//! radiative loss) to −1 (mode 2 dominates); with `δ = γ2(90°)/γ1(0)` it becomes
//! `(cos⁴θ − δ² sin⁴θ)/(cos⁴θ + δ² sin⁴θ)` and vanishes at `tan²θ = 1/δ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{check_grid, HybridModeSet};
use crate::units::{Angle, DampingRate};

/// Maximal radiative rates of the two photon modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularCouplingModel {
    /// `γ1` at 0°.
    pub gamma1_max: DampingRate,
    /// `γ2` at 90°.
    pub gamma2_max: DampingRate,
}

impl AngularCouplingModel {
    pub fn new(gamma1_max: DampingRate, gamma2_max: DampingRate) -> Self {
        Self { gamma1_max, gamma2_max }
    }

    /// `δ = γ2(90°)/γ1(0)`; `None` when `γ1(0) = 0`.
    pub fn delta(&self) -> Option<f64> {
        (self.gamma1_max.hz() > 0.0).then(|| self.gamma2_max.hz() / self.gamma1_max.hz())
    }
}

/// Signed loop-by-loop mutual inductances (H): two loops for mode 1, four for mode 2.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LoopContributions {
    pub mode1: [f64; 2],
    pub mode2: [f64; 4],
}

pub fn effective_mutual_mode1(c: &LoopContributions) -> f64 {
    (c.mode1[0] + c.mode1[1]) / 2.0
}

pub fn effective_mutual_mode2(c: &LoopContributions) -> f64 {
    ((c.mode2[0] + c.mode2[1]) + (c.mode2[2] + c.mode2[3])) / 2.0
}

/// `(cos²θ, sin²θ)`, exact at multiples of 90° and even in θ.
fn cos2_sin2(theta: Angle) -> (f64, f64) {
    let t = theta.degrees().abs() % 180.0;
    if t == 0.0 {
        return (1.0, 0.0);
    }
    if t == 90.0 {
        return (0.0, 1.0);
    }
    let (s, c) = t.to_radians().sin_cos();
    (c * c, s * s)
}

/// Radiative rates `(γ1(θ), γ2(θ))`.
pub fn gamma_of_angle(model: &AngularCouplingModel, theta: Angle) -> (DampingRate, DampingRate) {
    let (c2, s2) = cos2_sin2(theta);
    (
        DampingRate::from_hz(model.gamma1_max.hz() * c2).expect("non-negative"),
        DampingRate::from_hz(model.gamma2_max.hz() * s2).expect("non-negative"),
    )
}

/// `Φγ` from an arbitrary pair of radiative rates.
pub fn order_parameter_from_rates(gamma1: DampingRate, gamma2: DampingRate) -> Result<f64> {
    let (a, b) = (gamma1.hz().powi(2), gamma2.hz().powi(2));
    if a + b == 0.0 {
        return Err(Error::Undefined("both radiative rates are zero".into()));
    }
    Ok((a - b) / (a + b))
}

/// `Φγ(θ)` in terms of the damping ratio `δ`.
pub fn order_parameter_delta(delta: f64, theta: Angle) -> Result<f64> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::invalid("damping ratio", format!("{delta} must be finite and >= 0")));
    }
    let (c2, s2) = cos2_sin2(theta);
    let p = c2 * c2;
    let q = delta * delta * s2 * s2;
    if p + q == 0.0 {
        return Err(Error::Undefined(format!(
            "both rates vanish at {}° for δ = {delta}",
            theta.degrees()
        )));
    }
    Ok((p - q) / (p + q))
}

/// `Φγ(θ)` for a projection model. Uses the `δ` form when `γ1(0) > 0` and the raw
/// rates otherwise.
pub fn order_parameter(model: &AngularCouplingModel, theta: Angle) -> Result<f64> {
    match model.delta() {
        Some(delta) => order_parameter_delta(delta, theta),
        None => {
            let (g1, g2) = gamma_of_angle(model, theta);
            order_parameter_from_rates(g1, g2)
        }
    }
}

/// Zero crossings of `Φγ`: `θc1 = arctan(δ^(−1/2))` and its mirror `180° − θc1`.
pub fn critical_angles(delta: f64) -> Result<(Angle, Angle)> {
    if !(delta > 0.0) || delta.is_nan() {
        return Err(Error::invalid("damping ratio", format!("{delta} must be > 0")));
    }
    let first = delta.powf(-0.5).atan().to_degrees();
    Ok((Angle::from_degrees(first), Angle::from_degrees(180.0 - first)))
}

/// Angles outside the measured 0°–90° span are model extrapolations.
pub fn is_extrapolated(theta: Angle) -> bool {
    !(0.0..=90.0).contains(&theta.degrees())
}

/// `Φγ` over a (δ, θ) grid, rows indexed by δ and columns by θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMap {
    pub theta_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    /// Row-major, `values[i * theta_grid.len() + j] = Φγ(theta_grid[j]; delta_grid[i])`.
    pub values: Vec<f64>,
    /// `(θ, δ = cot²θ)` samples of the `Φγ = 0` boundary at every finite grid angle.
    pub zero_contour: Vec<(f64, f64)>,
}

impl TransitionMap {
    pub fn get(&self, delta_index: usize, theta_index: usize) -> f64 {
        self.values[delta_index * self.theta_grid.len() + theta_index]
    }
}

/// Evaluate `Φγ` on the grid (angles in degrees).
pub fn transition_map(theta_grid: &[f64], delta_grid: &[f64]) -> Result<TransitionMap> {
    check_grid("angle grid", theta_grid)?;
    check_grid("damping-ratio grid", delta_grid)?;
    if let Some(d) = delta_grid.iter().find(|&&d| d <= 0.0) {
        return Err(Error::invalid("damping ratio", format!("{d} must be > 0")));
    }
    let rows = delta_grid
        .par_iter()
        .map(|&delta| {
            theta_grid
                .iter()
                .map(|&t| order_parameter_delta(delta, Angle::from_degrees(t)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransitionMap {
        theta_grid: theta_grid.to_vec(),
        delta_grid: delta_grid.to_vec(),
        values: rows.concat(),
        zero_contour: zero_contour(theta_grid),
    })
}

/// `(θ, cot²θ)` at every grid angle where the cotangent is finite.
pub fn zero_contour(theta_grid: &[f64]) -> Vec<(f64, f64)> {
    theta_grid
        .iter()
        .filter_map(|&t| {
            let (c2, s2) = cos2_sin2(Angle::from_degrees(t));
            (s2 > 0.0).then(|| (t, c2 / s2))
        })
        .collect()
}

/// `C = g²/(K·Γ)`; any consistent frequency unit.
pub fn cooperativity(g: f64, photon_linewidth: f64, magnon_linewidth: f64) -> Result<f64> {
    if !(photon_linewidth > 0.0) {
        return Err(Error::invalid("photon linewidth", format!("{photon_linewidth} must be > 0")));
    }
    if !(magnon_linewidth > 0.0) {
        return Err(Error::invalid("magnon linewidth", format!("{magnon_linewidth} must be > 0")));
    }
    Ok(g * g / (photon_linewidth * magnon_linewidth))
}

/// `(C1, C2)` of a parameter set: `g31²/(K1 Γ)` and `g23²/(K2 Γ)` with total HWHM widths.
pub fn mode_cooperativities(params: &HybridModeSet) -> Result<(f64, f64)> {
    let m = &params.modes;
    let gamma = m.magnon.total_damping().hz();
    Ok((
        cooperativity(params.couplings.g31(), m.photon1.total_damping().hz(), gamma)?,
        cooperativity(params.couplings.g23(), m.photon2.total_damping().hz(), gamma)?,
    ))
}
