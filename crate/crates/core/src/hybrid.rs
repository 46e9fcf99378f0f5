//! Three-mode photon-photon-magnon model.
//!
//! Two photon modes and one magnon mode share a single waveguide continuum. Each mode
//! `i` has a bare frequency `ω_i`, an intrinsic rate `β_i` and a radiative rate `γ_i`
//! into the line, so its complex frequency is `ω̃_i' = ω_i − i(β_i + γ_i)`. The modes
//! couple coherently through `g_ij` and dissipatively through the shared continuum,
//! `−i√(γ_i γ_j)`, which makes the coupling matrix complex-symmetric but not Hermitian.
//!
//! All matrix entries are angular (rad/s); rates and couplings are carried in Hz and
//! scaled by `2π` when the matrix is assembled.

use std::f64::consts::{SQRT_2, TAU};
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{extrinsic_damping, intrinsic_damping, ResonatorRLC};
use crate::error::{Error, Result};
use crate::units::{db_to_linear, ComplexS21, DampingRate, Frequency};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Frequency and HWHM rates of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    pub frequency: Frequency,
    /// Intrinsic rate.
    pub beta: DampingRate,
    /// Radiative rate into the line.
    pub gamma: DampingRate,
}

impl ModeParams {
    pub fn new(frequency: Frequency, beta: DampingRate, gamma: DampingRate) -> Self {
        Self { frequency, beta, gamma }
    }

    /// Photon mode of a circuit resonator, rates from the closed-form expressions.
    pub fn from_resonator(res: &ResonatorRLC, z0: f64) -> Result<Self> {
        Ok(Self::new(res.resonance(), intrinsic_damping(res), extrinsic_damping(res, z0)?))
    }

    /// `β + γ`.
    pub fn total_damping(&self) -> DampingRate {
        self.beta + self.gamma
    }

    /// `ω − i·2π(β + γ)` in rad/s. The imaginary part is never positive.
    pub fn complex_frequency(&self) -> Complex64 {
        Complex64::new(self.frequency.angular(), -self.total_damping().angular())
    }
}

/// Photon mode 1, photon mode 2 and the magnon, in matrix order.
///
/// The magnon frequency stored here is only used by [`coupling_matrix_of`]; the
/// field-driven entry points replace it with the Kittel frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeTriplet {
    pub photon1: ModeParams,
    pub photon2: ModeParams,
    pub magnon: ModeParams,
}

impl ModeTriplet {
    pub fn as_array(&self) -> [ModeParams; 3] {
        [self.photon1, self.photon2, self.magnon]
    }

    pub fn with_magnon_frequency(&self, f: Frequency) -> Self {
        let mut out = *self;
        out.magnon.frequency = f;
        out
    }
}

/// Coherent coupling strengths in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CouplingSet {
    g12: f64,
    g23: f64,
    g31: f64,
}

impl CouplingSet {
    pub fn from_hz(g12: f64, g23: f64, g31: f64) -> Result<Self> {
        for (name, v) in [("g12", g12), ("g23", g23), ("g31", g31)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("{v} must be finite and >= 0")));
            }
        }
        Ok(Self { g12, g23, g31 })
    }

    pub fn from_mhz(g12: f64, g23: f64, g31: f64) -> Result<Self> {
        Self::from_hz(g12 * 1e6, g23 * 1e6, g31 * 1e6)
    }

    pub fn g12(&self) -> f64 {
        self.g12
    }

    pub fn g23(&self) -> f64 {
        self.g23
    }

    pub fn g31(&self) -> f64 {
        self.g31
    }

    /// Coupling between matrix indices `i` and `j` (0 = photon 1, 1 = photon 2, 2 = magnon).
    fn between(&self, i: usize, j: usize) -> f64 {
        match (i.min(j), i.max(j)) {
            (0, 1) => self.g12,
            (1, 2) => self.g23,
            (0, 2) => self.g31,
            _ => 0.0,
        }
    }
}

/// In-plane Kittel constants: `γ/2π` in MHz/Oe and `4πMs` in G.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KittelParams {
    gyro: f64,
    m_eff: f64,
}

impl KittelParams {
    pub fn new(gyro_mhz_per_oe: f64, m_eff_gauss: f64) -> Result<Self> {
        for (name, v) in [("gyromagnetic ratio", gyro_mhz_per_oe), ("effective magnetization", m_eff_gauss)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("{v} must be finite and > 0")));
            }
        }
        Ok(Self {
            gyro: gyro_mhz_per_oe,
            m_eff: m_eff_gauss,
        })
    }

    pub fn gyro_mhz_per_oe(&self) -> f64 {
        self.gyro
    }

    pub fn m_eff_gauss(&self) -> f64 {
        self.m_eff
    }
}

/// Full parameter set of the three-mode model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridModeSet {
    pub modes: ModeTriplet,
    pub couplings: CouplingSet,
    pub kittel: KittelParams,
}

impl HybridModeSet {
    pub fn get(&self, p: HybridParam) -> f64 {
        match p {
            HybridParam::G12 => self.couplings.g12,
            HybridParam::G23 => self.couplings.g23,
            HybridParam::G31 => self.couplings.g31,
            HybridParam::Gyro => self.kittel.gyro,
            HybridParam::MEff => self.kittel.m_eff,
        }
    }

    pub fn with(&self, p: HybridParam, value: f64) -> Result<Self> {
        let mut out = *self;
        let c = &self.couplings;
        match p {
            HybridParam::G12 => out.couplings = CouplingSet::from_hz(value, c.g23, c.g31)?,
            HybridParam::G23 => out.couplings = CouplingSet::from_hz(c.g12, value, c.g31)?,
            HybridParam::G31 => out.couplings = CouplingSet::from_hz(c.g12, c.g23, value)?,
            HybridParam::Gyro => out.kittel = KittelParams::new(value, self.kittel.m_eff)?,
            HybridParam::MEff => out.kittel = KittelParams::new(self.kittel.gyro, value)?,
        }
        Ok(out)
    }

    /// Mode triplet with the magnon tuned to the Kittel frequency at `h_oe`.
    pub fn modes_at(&self, h_oe: f64) -> Result<ModeTriplet> {
        Ok(self.modes.with_magnon_frequency(kittel_frequency(h_oe, &self.kittel)?))
    }
}

/// Scalar parameters of [`HybridModeSet`] that the coupling-stage fit may vary.
/// Couplings are in Hz, `Gyro` in MHz/Oe and `MEff` in G.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HybridParam {
    G12,
    G23,
    G31,
    Gyro,
    MEff,
}

impl HybridParam {
    pub const ALL: [HybridParam; 5] = [Self::G12, Self::G23, Self::G31, Self::Gyro, Self::MEff];

    pub fn name(self) -> &'static str {
        match self {
            Self::G12 => "g12",
            Self::G23 => "g23",
            Self::G31 => "g31",
            Self::Gyro => "gyro",
            Self::MEff => "m_eff",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Self::G12 | Self::G23 | Self::G31 => "Hz",
            Self::Gyro => "MHz/Oe",
            Self::MEff => "G",
        }
    }
}

impl fmt::Display for HybridParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for HybridParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        HybridParam::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid("hybrid parameter", format!("unknown name {s:?}")))
    }
}

/// Ferromagnetic resonance `γ/2π·√(H(H + 4πMs))` for an in-plane field in Oe.
pub fn kittel_frequency(h_oe: f64, k: &KittelParams) -> Result<Frequency> {
    if !(h_oe.is_finite() && h_oe >= 0.0) {
        return Err(Error::invalid("field", format!("{h_oe} Oe must be finite and >= 0")));
    }
    Frequency::from_mhz(k.gyro * (h_oe * (h_oe + k.m_eff)).sqrt())
}

/// Non-negative root of `H(H + 4πMs) = (f/γ')²`.
pub fn kittel_field(f: Frequency, k: &KittelParams) -> f64 {
    let q = (f.mhz() / k.gyro).powi(2);
    // 2q / (m + √(m² + 4q)) avoids the cancellation of the textbook root
    2.0 * q / (k.m_eff + (k.m_eff * k.m_eff + 4.0 * q).sqrt())
}

/// Coupling matrix for explicit mode frequencies (magnon included).
pub fn coupling_matrix_of(modes: &ModeTriplet, couplings: &CouplingSet) -> Matrix3<Complex64> {
    let m = modes.as_array();
    Matrix3::from_fn(|i, j| {
        if i == j {
            m[i].complex_frequency()
        } else {
            let dissipative = (m[i].gamma.hz() * m[j].gamma.hz()).sqrt();
            TAU * Complex64::new(couplings.between(i, j), -dissipative)
        }
    })
}

/// Coupling matrix with the magnon at the Kittel frequency of `h_oe`.
pub fn coupling_matrix(params: &HybridModeSet, h_oe: f64) -> Result<Matrix3<Complex64>> {
    Ok(coupling_matrix_of(&params.modes_at(h_oe)?, &params.couplings))
}

fn order_branches(mut ev: [Complex64; 3]) -> [Complex64; 3] {
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    ev
}

/// Complex eigenfrequencies (rad/s), ascending by real part, ties by imaginary part.
pub fn eigenbranches(matrix: &Matrix3<Complex64>) -> Result<[Complex64; 3]> {
    let fail = || Error::EigenSolver {
        matrix: format!("{:?}", matrix.as_slice()),
    };
    if matrix.iter().any(|z| !z.is_finite()) {
        return Err(fail());
    }
    // shift and normalise so the solver works on O(1) entries around the spectrum
    let shift = (matrix[(0, 0)].re + matrix[(1, 1)].re + matrix[(2, 2)].re) / 3.0;
    let shifted = matrix - Matrix3::from_diagonal_element(Complex64::new(shift, 0.0));
    let scale = shifted.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok([Complex64::new(shift, 0.0); 3]);
    }
    let normalized = shifted.unscale(scale);
    let schur = nalgebra::Schur::try_new(normalized, 1e-15, 500).ok_or_else(fail)?;
    let (_, t) = schur.unpack();
    if (0..2).any(|k| t[(k + 1, k)].norm() > 1e-12) {
        return Err(fail());
    }
    let ev = [0, 1, 2].map(|k| t[(k, k)] * scale + shift);
    Ok(order_branches(ev))
}

/// Reorder each slice of a sweep so that branch `k` continues branch `k` of the
/// previous slice, choosing the permutation with the smallest total jump.
///
/// The jump is measured in the complex plane: where two branches cross in real part
/// within one step, their different linewidths still tell them apart.
pub fn track_branches(sweep: &[[Complex64; 3]]) -> Vec<[Complex64; 3]> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out: Vec<[Complex64; 3]> = Vec::with_capacity(sweep.len());
    for slice in sweep {
        let next = match out.last() {
            None => *slice,
            Some(prev) => {
                let mut best = PERMS[0];
                let mut best_cost = f64::INFINITY;
                for p in PERMS {
                    let cost: f64 = (0..3).map(|k| (slice[p[k]] - prev[k]).norm()).sum();
                    // strict comparison keeps the identity on ties
                    if cost < best_cost {
                        best_cost = cost;
                        best = p;
                    }
                }
                best.map(|k| slice[k])
            }
        };
        out.push(next);
    }
    out
}

/// Eigenbranches along a field sweep, continuity-tracked. Values in rad/s.
pub fn branch_sweep(params: &HybridModeSet, h_grid: &[f64]) -> Result<Vec<[Complex64; 3]>> {
    let raw = h_grid
        .iter()
        .map(|&h| eigenbranches(&coupling_matrix(params, h)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(track_branches(&raw))
}

fn input_vector(modes: &ModeTriplet) -> Vector3<Complex64> {
    let m = modes.as_array();
    Vector3::from_fn(|i, _| Complex64::new(SQRT_2 * m[i].gamma.angular().sqrt(), 0.0))
}

/// Transmission `1 + Kᵀ M⁻¹ K` with `M = i(ω·1 − H_coupling)` for explicit modes.
pub fn s21_hybrid_of(modes: &ModeTriplet, couplings: &CouplingSet, f: Frequency) -> Result<ComplexS21> {
    if f.hz() <= 0.0 {
        return Err(Error::invalid("frequency", "transmission needs f > 0"));
    }
    let k = input_vector(modes);
    if k.iter().all(|z| z.re == 0.0) {
        return Ok(ComplexS21::ONE);
    }
    let h = coupling_matrix_of(modes, couplings);
    let w = Complex64::new(f.angular(), 0.0);
    let m = (Matrix3::from_diagonal_element(w) - h) * I;
    let singular = || Error::Singular {
        what: "input-output matrix",
        location: format!("magnon f = {} Hz, f = {} Hz", modes.magnon.frequency.hz(), f.hz()),
    };
    let x = m.lu().solve(&k).ok_or_else(singular)?;
    let s = Complex64::new(1.0, 0.0) + k.dot(&x);
    if !s.is_finite() {
        return Err(singular());
    }
    Ok(ComplexS21(s))
}

/// Transmission at bias field `h_oe` (Oe) and probe frequency `f`.
pub fn s21_hybrid(params: &HybridModeSet, h_oe: f64, f: Frequency) -> Result<ComplexS21> {
    s21_hybrid_of(&params.modes_at(h_oe)?, &params.couplings, f).map_err(|e| match e {
        Error::Singular { what, location } => Error::Singular {
            what,
            location: format!("H = {h_oe} Oe, {location}"),
        },
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MagnitudeScale {
    Linear,
    Db,
}

/// Free-form provenance carried alongside a map.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MapMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<serde_json::Value>,
}

/// `|S21|` on a field × frequency grid, row-major with field outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSweepMap {
    h_grid: Vec<f64>,
    f_grid: Vec<f64>,
    values: Vec<f64>,
    scale: MagnitudeScale,
    pub metadata: MapMetadata,
}

pub(crate) fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(name, "grid is empty"));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(name, "grid has non-finite values"));
    }
    if let Some(k) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            name,
            format!("grid not strictly increasing at index {}", k + 1),
        ));
    }
    Ok(())
}

impl FieldSweepMap {
    /// `h_grid` in Oe, `f_grid` in Hz.
    pub fn new(h_grid: Vec<f64>, f_grid: Vec<f64>, values: Vec<f64>, scale: MagnitudeScale) -> Result<Self> {
        check_grid("field grid", &h_grid)?;
        check_grid("frequency grid", &f_grid)?;
        if values.len() != h_grid.len() * f_grid.len() {
            return Err(Error::invalid(
                "map values",
                format!(
                    "{} values for a {}x{} grid",
                    values.len(),
                    h_grid.len(),
                    f_grid.len()
                ),
            ));
        }
        Ok(Self {
            h_grid,
            f_grid,
            values,
            scale,
            metadata: MapMetadata::default(),
        })
    }

    pub fn h_grid(&self) -> &[f64] {
        &self.h_grid
    }

    pub fn f_grid(&self) -> &[f64] {
        &self.f_grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&self) -> MagnitudeScale {
        self.scale
    }

    pub fn rows(&self) -> usize {
        self.h_grid.len()
    }

    pub fn cols(&self) -> usize {
        self.f_grid.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.cols();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols() + j]
    }

    pub fn to_scale(&self, scale: MagnitudeScale) -> FieldSweepMap {
        let values = match (self.scale, scale) {
            (a, b) if a == b => self.values.clone(),
            (MagnitudeScale::Linear, MagnitudeScale::Db) => {
                self.values.iter().map(|&v| if v == 0.0 { f64::NEG_INFINITY } else { 20.0 * v.log10() }).collect()
            }
            _ => self.values.iter().map(|&v| db_to_linear(v)).collect(),
        };
        FieldSweepMap {
            values,
            scale,
            ..self.clone()
        }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<FieldSweepMap> {
        let mut out = FieldSweepMap::new(self.h_grid.clone(), self.f_grid.clone(), values, self.scale)?;
        out.metadata = self.metadata.clone();
        Ok(out)
    }
}

/// `|S21|` (linear) of the three-mode model over a field × frequency grid.
///
/// Rows are evaluated in parallel and assembled in index order, so the result does
/// not depend on scheduling.
pub fn field_sweep(params: &HybridModeSet, h_grid: &[f64], f_grid: &[f64]) -> Result<FieldSweepMap> {
    check_grid("field grid", h_grid)?;
    check_grid("frequency grid", f_grid)?;
    let rows = h_grid
        .par_iter()
        .enumerate()
        .map(|(i, &h)| {
            let modes = params.modes_at(h)?;
            f_grid
                .iter()
                .enumerate()
                .map(|(j, &f)| {
                    let at = |e: Error| match e {
                        Error::Singular { what, location } => Error::Singular {
                            what,
                            location: format!("grid index ({i}, {j}), H = {h} Oe, {location}"),
                        },
                        other => other,
                    };
                    let f = Frequency::from_hz(f).map_err(at)?;
                    s21_hybrid_of(&modes, &params.couplings, f).map(|s| s.magnitude()).map_err(at)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    FieldSweepMap::new(h_grid.to_vec(), f_grid.to_vec(), rows.concat(), MagnitudeScale::Linear)
}
