//! Two-stage parameter extraction.
//!
//! Stage 1 ([`fit_circuit`]) fits the lumped circuit to photon-only spectra. Stage 2
//! ([`fit_hybrid`]) fits coupling strengths to a field-sweep map with the photon
//! modes held at the values the circuit stage produced (see
//! [`ModeParams::from_resonator`](crate::hybrid::ModeParams::from_resonator)).
//! Both run on the bounded Levenberg-Marquardt solver in [`lm`].

mod circuit_fit;
mod hybrid_fit;
pub mod lm;
mod resonances;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::circuit::CircuitParam;
use crate::error::{Error, Result};
use crate::hybrid::{FieldSweepMap, HybridParam, MagnitudeScale};
use crate::units::{ComplexS21, Frequency};

pub use circuit_fit::{fit_circuit, fit_circuit_joint, CircuitDataset, CircuitFit, JointCircuitFit};
pub use hybrid_fit::{extract_ridges, fit_hybrid, BranchResidual, HybridFit, Ridge, RidgePoint};
pub use lm::{Termination, Tolerances};
pub use resonances::{extract_resonances, find_dips, Resonance, MIN_POINTS};

/// Where a spectrum came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_oe: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Reference impedance declared by the file, Ω.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<f64>,
}

/// A transmission trace on a strictly increasing frequency grid. Magnitude-only
/// traces store `|S21|` as a real value and carry a flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    f_grid: Vec<Frequency>,
    s21: Vec<ComplexS21>,
    magnitude_only: bool,
    pub provenance: Provenance,
}

fn check_frequencies(f_grid: &[Frequency]) -> Result<()> {
    if f_grid.is_empty() {
        return Err(Error::invalid("spectrum", "no points"));
    }
    if let Some(k) = f_grid.windows(2).position(|w| w[1].hz() <= w[0].hz()) {
        return Err(Error::invalid(
            "spectrum",
            format!("frequency grid not strictly increasing at index {}", k + 1),
        ));
    }
    Ok(())
}

impl Spectrum {
    pub fn new(f_grid: Vec<Frequency>, s21: Vec<ComplexS21>) -> Result<Self> {
        check_frequencies(&f_grid)?;
        if s21.len() != f_grid.len() {
            return Err(Error::invalid("spectrum", format!("{} values for {} frequencies", s21.len(), f_grid.len())));
        }
        if let Some(k) = s21.iter().position(|s| !s.value().is_finite()) {
            return Err(Error::invalid("spectrum", format!("non-finite S21 at index {k}")));
        }
        Ok(Self {
            f_grid,
            s21,
            magnitude_only: false,
            provenance: Provenance::default(),
        })
    }

    /// Linear magnitudes without phase. Values are not clipped at zero so that
    /// additive noise survives.
    pub fn from_magnitudes(f_grid: Vec<Frequency>, magnitudes: Vec<f64>) -> Result<Self> {
        let s21 = magnitudes.into_iter().map(|m| ComplexS21::new(m, 0.0)).collect();
        let mut out = Self::new(f_grid, s21)?;
        out.magnitude_only = true;
        Ok(out)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn len(&self) -> usize {
        self.f_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_grid.is_empty()
    }

    pub fn f_grid(&self) -> &[Frequency] {
        &self.f_grid
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        self.f_grid.iter().map(|f| f.hz()).collect()
    }

    /// Complex values; for magnitude-only traces the imaginary parts are zero.
    pub fn s21(&self) -> &[ComplexS21] {
        &self.s21
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        if self.magnitude_only {
            self.s21.iter().map(|s| s.re()).collect()
        } else {
            self.s21.iter().map(|s| s.magnitude()).collect()
        }
    }

    pub fn is_magnitude_only(&self) -> bool {
        self.magnitude_only
    }
}

/// Parameters a fit can vary.
pub trait ParamKey: Copy + Ord + fmt::Display + Send + Sync + 'static {
    fn name(self) -> &'static str;
    fn unit(self) -> &'static str;
    /// Magnitude used when the starting value is zero or tiny.
    fn typical_scale(self) -> f64;
}

impl ParamKey for CircuitParam {
    fn name(self) -> &'static str {
        CircuitParam::name(self)
    }

    fn unit(self) -> &'static str {
        CircuitParam::unit(self)
    }

    fn typical_scale(self) -> f64 {
        use CircuitParam::*;
        match self {
            LineInductance | M1 | M2 | M12 => 1e-10,
            LineCapacitance | C1 | C2 => 1e-13,
            F1 | F2 => 1e8,
            R1 | R2 => 0.1,
        }
    }
}

impl ParamKey for HybridParam {
    fn name(self) -> &'static str {
        HybridParam::name(self)
    }

    fn unit(self) -> &'static str {
        HybridParam::unit(self)
    }

    fn typical_scale(self) -> f64 {
        match self {
            HybridParam::G12 | HybridParam::G23 | HybridParam::G31 => 1e6,
            HybridParam::Gyro => 0.1,
            HybridParam::MEff => 100.0,
        }
    }
}

/// Per-parameter fit setting. Parameters absent from a [`FitConfig`] are frozen at
/// the base model's value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    #[serde(default = "yes")]
    pub free: bool,
    /// Overrides the base model's value as starting point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<f64>,
    /// Defaults to 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    /// Defaults to unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

fn yes() -> bool {
    true
}

impl ParamSpec {
    pub fn free() -> Self {
        Self {
            free: true,
            initial: None,
            lower: None,
            upper: None,
        }
    }

    pub fn fixed() -> Self {
        Self { free: false, ..Self::free() }
    }

    pub fn starting_at(mut self, value: f64) -> Self {
        self.initial = Some(value);
        self
    }

    pub fn bounded(mut self, lower: f64, upper: f64) -> Self {
        self.lower = Some(lower);
        self.upper = Some(upper);
        self
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower.unwrap_or(0.0)
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper.unwrap_or(f64::INFINITY)
    }
}

/// Residual definition of the circuit stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `|S21_model| − |S21_data|`.
    #[default]
    Magnitude,
    /// Real and imaginary differences; needs phase data.
    Complex,
}

/// Objective of the coupling stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage2Objective {
    /// Linear `|S21|` of the three-mode model against every map cell.
    #[default]
    Surface,
    /// Eigenbranch real parts against dip ridges extracted from the map (Hz).
    EigenRidge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound(serialize = "P: Serialize + Ord", deserialize = "P: Deserialize<'de> + Ord")
)]
pub struct FitConfig<P> {
    #[serde(default = "BTreeMap::new")]
    pub params: BTreeMap<P, ParamSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub loss: Loss,
    /// Circuit stage: replace free resonance starting values by matched dips.
    #[serde(default = "yes")]
    pub seed_from_dips: bool,
    #[serde(default)]
    pub objective: Stage2Objective,
    /// Minimum dip prominence in linear `|S21|` for resonance and ridge detection.
    #[serde(default = "default_prominence")]
    pub prominence: f64,
}

fn default_max_iterations() -> usize {
    200
}

fn default_prominence() -> f64 {
    0.01
}

impl<P: ParamKey> Default for FitConfig<P> {
    fn default() -> Self {
        Self {
            params: BTreeMap::new(),
            tolerances: Tolerances::default(),
            max_iterations: default_max_iterations(),
            loss: Loss::default(),
            seed_from_dips: true,
            objective: Stage2Objective::default(),
            prominence: default_prominence(),
        }
    }
}

impl<P: ParamKey> FitConfig<P> {
    /// Free every listed parameter with default bounds.
    pub fn freeing(params: &[P]) -> Self {
        let mut out = Self::default();
        for &p in params {
            out.params.insert(p, ParamSpec::free());
        }
        out
    }

    pub fn set(mut self, param: P, spec: ParamSpec) -> Self {
        self.params.insert(param, spec);
        self
    }

    pub fn free_params(&self) -> Vec<P> {
        self.params.iter().filter(|(_, s)| s.free).map(|(p, _)| *p).collect()
    }

    /// Starting value for `param` given the base model's value.
    pub fn initial(&self, param: P, base: f64) -> f64 {
        self.params.get(&param).and_then(|s| s.initial).unwrap_or(base)
    }

    pub(crate) fn validate(&self, base: impl Fn(P) -> f64) -> Result<()> {
        self.tolerances.validate()?;
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be at least 1"));
        }
        if !(self.prominence.is_finite() && self.prominence > 0.0) {
            return Err(Error::invalid("prominence", format!("{} must be finite and > 0", self.prominence)));
        }
        for (&p, spec) in &self.params {
            let (lo, hi) = (spec.lower_bound(), spec.upper_bound());
            let x0 = self.initial(p, base(p));
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::invalid(p.name(), format!("bounds [{lo}, {hi}] are empty")));
            }
            if !(x0.is_finite() && lo <= x0 && x0 <= hi) {
                return Err(Error::invalid(p.name(), format!("initial value {x0} outside bounds [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedParameter {
    pub name: String,
    pub unit: String,
    pub value: f64,
    pub initial: f64,
    pub free: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    pub lower: f64,
    /// `None` when unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub at_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub schema_version: u32,
    pub parameters: Vec<FittedParameter>,
    /// Sum of squared residuals.
    pub objective: f64,
    /// One entry per data point.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<&FittedParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameter(name).map(|p| p.value)
    }
}

/// A free value closer than this fraction of its scale to a bound is reported as at the bound.
/// Parameters whose optimum sits on a bound approach it only asymptotically.
pub const AT_BOUND: f64 = 1e-6;

/// Free-parameter slot of an assembled fit problem.
pub(crate) struct Slot {
    pub name: String,
    pub unit: &'static str,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
    pub scale: f64,
}

impl Slot {
    pub fn new<P: ParamKey>(name: String, param: P, spec: &ParamSpec, initial: f64) -> Self {
        Self {
            name,
            unit: param.unit(),
            initial,
            lower: spec.lower_bound(),
            upper: spec.upper_bound(),
            scale: initial.abs().max(param.typical_scale()),
        }
    }
}

/// Frozen parameter reported alongside the free ones.
pub(crate) struct FrozenEntry {
    pub name: String,
    pub unit: &'static str,
    pub value: f64,
}

pub(crate) fn solve_slots<F>(
    slots: &[Slot],
    frozen: Vec<FrozenEntry>,
    residuals: F,
    per_point: impl Fn(&[f64]) -> Vec<f64>,
    tolerances: &Tolerances,
    max_iterations: usize,
) -> Result<(Vec<f64>, FitResult)>
where
    F: Fn(&[f64]) -> Option<Vec<f64>> + Sync,
{
    let x0: Vec<f64> = slots.iter().map(|s| s.initial).collect();
    let lower: Vec<f64> = slots.iter().map(|s| s.lower).collect();
    let upper: Vec<f64> = slots.iter().map(|s| s.upper).collect();
    let scale: Vec<f64> = slots.iter().map(|s| s.scale).collect();
    let out = lm::minimize(
        lm::Problem {
            residuals,
            x0: &x0,
            lower: &lower,
            upper: &upper,
            scale: &scale,
        },
        tolerances,
        max_iterations,
    )?;
    let mut parameters: Vec<FittedParameter> = slots
        .iter()
        .zip(&out.x)
        .zip(&out.std_errors)
        .map(|((s, &value), &std_error)| FittedParameter {
            name: s.name.clone(),
            unit: s.unit.to_string(),
            value,
            initial: s.initial,
            free: true,
            std_error,
            lower: s.lower,
            upper: s.upper.is_finite().then_some(s.upper),
            at_bound: value - s.lower <= AT_BOUND * s.scale || s.upper - value <= AT_BOUND * s.scale,
        })
        .collect();
    parameters.extend(frozen.into_iter().map(|f| FittedParameter {
        name: f.name,
        unit: f.unit.to_string(),
        value: f.value,
        initial: f.value,
        free: false,
        std_error: None,
        lower: f.value,
        upper: Some(f.value),
        at_bound: false,
    }));
    let result = FitResult {
        schema_version: crate::SCHEMA_VERSION,
        parameters,
        objective: out.objective,
        residuals: per_point(&out.residuals),
        iterations: out.iterations,
        evaluations: out.evaluations,
        converged: out.termination.converged(),
        termination: out.termination,
        objective_trace: out.trace,
    };
    Ok((out.x, result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub n_points: usize,
    pub rms: f64,
    pub max_abs: f64,
    pub objective: f64,
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    pub parameters: Vec<FittedParameter>,
    pub residuals: Vec<f64>,
    pub objective_trace: Vec<f64>,
}

impl ResidualReport {
    /// Plain-text parameter table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>16} {:>14} {:<5} flags", "param", "value", "std.err", "unit");
        for p in &self.parameters {
            let err = p.std_error.map_or_else(|| "-".to_string(), |e| format!("{e:.6e}"));
            let mut flags = Vec::new();
            if !p.free {
                flags.push("fixed");
            }
            if p.at_bound {
                flags.push("at-bound");
            }
            let _ = writeln!(s, "{:<10} {:>16.9e} {:>14} {:<5} {}", p.name, p.value, err, p.unit, flags.join(","));
        }
        let _ = writeln!(
            s,
            "points {}  rms {:.6e}  max {:.6e}  objective {:.6e}  iterations {}  {}",
            self.n_points,
            self.rms,
            self.max_abs,
            self.objective,
            self.iterations,
            if self.converged { "converged" } else { "NOT CONVERGED" }
        );
        s
    }
}

pub fn residual_report(result: &FitResult) -> ResidualReport {
    let n = result.residuals.len();
    let rms = if n == 0 {
        0.0
    } else {
        (result.residuals.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt()
    };
    ResidualReport {
        n_points: n,
        rms,
        max_abs: result.residuals.iter().fold(0.0, |m, r| m.max(r.abs())),
        objective: result.objective,
        converged: result.converged,
        termination: result.termination,
        iterations: result.iterations,
        parameters: result.parameters.clone(),
        residuals: result.residuals.clone(),
        objective_trace: result.objective_trace.clone(),
    }
}

fn gaussian(sigma: f64, seed: u64) -> Result<(Normal<f64>, ChaCha8Rng)> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid("noise sigma", format!("{sigma} must be finite and >= 0")));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid("noise sigma", e.to_string()))?;
    Ok((normal, ChaCha8Rng::seed_from_u64(seed)))
}

/// Magnitude-only copy of `spec` with additive Gaussian noise on `|S21|`.
pub fn add_magnitude_noise(spec: &Spectrum, sigma: f64, seed: u64) -> Result<Spectrum> {
    let (normal, mut rng) = gaussian(sigma, seed)?;
    let noisy = spec.magnitudes().into_iter().map(|m| m + normal.sample(&mut rng)).collect();
    Ok(Spectrum::from_magnitudes(spec.f_grid.clone(), noisy)?.with_provenance(spec.provenance.clone()))
}

/// Linear-scale copy of `map` with additive Gaussian noise on `|S21|`, drawn in
/// row-major order.
pub fn add_map_noise(map: &FieldSweepMap, sigma: f64, seed: u64) -> Result<FieldSweepMap> {
    let (normal, mut rng) = gaussian(sigma, seed)?;
    let linear = map.to_scale(MagnitudeScale::Linear);
    let noisy = linear.values().iter().map(|v| v + normal.sample(&mut rng)).collect();
    linear.with_values(noisy)
}
