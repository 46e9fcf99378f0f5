//! Two-mode equivalent circuit of the resonator/microstrip system.
//!
//! The microstrip is a series inductance `L` between two shunt admittances
//! `Y1 = Y2 = iωC/2`. Two series-RLC resonators hang off the line through mutual
//! inductances `M1`, `M2` and may couple to each other through `M12`. Eliminating the
//! resonator currents from Kirchhoff's loop equations leaves the line with the series
//! impedance `Zs = iωL + ΔZ(ω)`, and the whole network reduces to a shunt-series-shunt
//! ABCD cascade.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{ComplexS21, DampingRate, Frequency};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn require(name: &str, value: f64, positive: bool) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::invalid(name, format!("{value} is not finite")));
    }
    if positive && value <= 0.0 {
        return Err(Error::invalid(name, format!("{value} must be > 0")));
    }
    if value < 0.0 {
        return Err(Error::invalid(name, format!("{value} must be >= 0")));
    }
    Ok(value)
}

/// Lumped model of the bare microstrip section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionLine {
    inductance: f64,
    capacitance: f64,
    z0: f64,
}

impl TransmissionLine {
    /// `inductance` in H, total shunt `capacitance` in F, characteristic impedance in Ω.
    ///
    /// Zero `L` or `C` is accepted (a degenerate, purely shunt or purely series line);
    /// `z0` must be strictly positive.
    pub fn new(inductance: f64, capacitance: f64, z0: f64) -> Result<Self> {
        Ok(Self {
            inductance: require("line inductance", inductance, false)?,
            capacitance: require("line capacitance", capacitance, false)?,
            z0: require("reference impedance", z0, true)?,
        })
    }

    pub fn inductance(&self) -> f64 {
        self.inductance
    }

    pub fn capacitance(&self) -> f64 {
        self.capacitance
    }

    pub fn z0(&self) -> f64 {
        self.z0
    }

    /// Each of the two identical shunt admittances, `iωC/2`.
    pub fn shunt_admittance(&self, f: Frequency) -> Complex64 {
        I * f.angular() * self.capacitance / 2.0
    }
}

/// A series RLC photon mode and its mutual inductance to the line.
///
/// Stored by resonance frequency rather than inductance: the coupled impedance only
/// sees `L_r` through `ω0 = 1/√(L_r C_r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorRLC {
    resonance: f64,
    capacitance: f64,
    resistance: f64,
    mutual: f64,
}

impl ResonatorRLC {
    /// Build from `L_r` (H), `C_r` (F), `R_r` (Ω) and `M` (H).
    pub fn new(inductance: f64, capacitance: f64, resistance: f64, mutual: f64) -> Result<Self> {
        let l = require("resonator inductance", inductance, true)?;
        let c = require("resonator capacitance", capacitance, true)?;
        let f0 = 1.0 / (std::f64::consts::TAU * (l * c).sqrt());
        Self::from_resonance(Frequency::from_hz(f0)?, c, resistance, mutual)
    }

    /// Build from the resonance frequency and `C_r`; `L_r = 1/(ω0² C_r)`.
    pub fn from_resonance(f0: Frequency, capacitance: f64, resistance: f64, mutual: f64) -> Result<Self> {
        let resonance = require("resonance frequency", f0.hz(), true)?;
        Ok(Self {
            resonance,
            capacitance: require("resonator capacitance", capacitance, true)?,
            resistance: require("resonator resistance", resistance, false)?,
            mutual: require("mutual inductance", mutual, false)?,
        })
    }

    pub fn resonance(&self) -> Frequency {
        Frequency::from_hz(self.resonance).expect("validated on construction")
    }

    /// `ω0` in rad/s.
    pub fn angular_resonance(&self) -> f64 {
        std::f64::consts::TAU * self.resonance
    }

    pub fn inductance(&self) -> f64 {
        let w0 = self.angular_resonance();
        1.0 / (w0 * w0 * self.capacitance)
    }

    pub fn capacitance(&self) -> f64 {
        self.capacitance
    }

    pub fn resistance(&self) -> f64 {
        self.resistance
    }

    pub fn mutual(&self) -> f64 {
        self.mutual
    }
}

/// The full photon-only circuit: line, two resonators and their mutual coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeCircuit {
    pub line: TransmissionLine,
    pub mode1: ResonatorRLC,
    pub mode2: ResonatorRLC,
    mutual12: f64,
}

impl TwoModeCircuit {
    pub fn new(line: TransmissionLine, mode1: ResonatorRLC, mode2: ResonatorRLC, mutual12: f64) -> Result<Self> {
        Ok(Self {
            line,
            mode1,
            mode2,
            mutual12: require("inter-resonator mutual inductance", mutual12, false)?,
        })
    }

    pub fn mutual12(&self) -> f64 {
        self.mutual12
    }

    /// The same circuit with every mutual inductance set to zero.
    pub fn decoupled(&self) -> Self {
        let mut out = *self;
        out.mode1.mutual = 0.0;
        out.mode2.mutual = 0.0;
        out.mutual12 = 0.0;
        out
    }

    pub fn get(&self, param: CircuitParam) -> f64 {
        use CircuitParam::*;
        match param {
            LineInductance => self.line.inductance,
            LineCapacitance => self.line.capacitance,
            F1 => self.mode1.resonance,
            C1 => self.mode1.capacitance,
            R1 => self.mode1.resistance,
            M1 => self.mode1.mutual,
            F2 => self.mode2.resonance,
            C2 => self.mode2.capacitance,
            R2 => self.mode2.resistance,
            M2 => self.mode2.mutual,
            M12 => self.mutual12,
        }
    }

    /// Copy with one parameter replaced. Resonance frequencies stay fixed when a
    /// capacitance changes.
    pub fn with(&self, param: CircuitParam, value: f64) -> Result<Self> {
        use CircuitParam::*;
        let mut out = *self;
        let name = param.name();
        match param {
            LineInductance => out.line.inductance = require(name, value, false)?,
            LineCapacitance => out.line.capacitance = require(name, value, false)?,
            F1 => out.mode1.resonance = require(name, value, true)?,
            C1 => out.mode1.capacitance = require(name, value, true)?,
            R1 => out.mode1.resistance = require(name, value, false)?,
            M1 => out.mode1.mutual = require(name, value, false)?,
            F2 => out.mode2.resonance = require(name, value, true)?,
            C2 => out.mode2.capacitance = require(name, value, true)?,
            R2 => out.mode2.resistance = require(name, value, false)?,
            M2 => out.mode2.mutual = require(name, value, false)?,
            M12 => out.mutual12 = require(name, value, false)?,
        }
        Ok(out)
    }
}

/// Named scalar parameters of a [`TwoModeCircuit`], in SI units.
///
/// `F1`/`F2` are resonance frequencies in Hz. `Z0` is not a parameter: it is the
/// fixed reference of the measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CircuitParam {
    #[serde(rename = "l")]
    LineInductance,
    #[serde(rename = "c")]
    LineCapacitance,
    F1,
    C1,
    R1,
    M1,
    F2,
    C2,
    R2,
    M2,
    M12,
}

impl CircuitParam {
    pub const ALL: [CircuitParam; 11] = [
        CircuitParam::LineInductance,
        CircuitParam::LineCapacitance,
        CircuitParam::F1,
        CircuitParam::C1,
        CircuitParam::R1,
        CircuitParam::M1,
        CircuitParam::F2,
        CircuitParam::C2,
        CircuitParam::R2,
        CircuitParam::M2,
        CircuitParam::M12,
    ];

    pub fn name(self) -> &'static str {
        use CircuitParam::*;
        match self {
            LineInductance => "l",
            LineCapacitance => "c",
            F1 => "f1",
            C1 => "c1",
            R1 => "r1",
            M1 => "m1",
            F2 => "f2",
            C2 => "c2",
            R2 => "r2",
            M2 => "m2",
            M12 => "m12",
        }
    }

    pub fn unit(self) -> &'static str {
        use CircuitParam::*;
        match self {
            LineInductance | M1 | M2 | M12 => "H",
            LineCapacitance | C1 | C2 => "F",
            F1 | F2 => "Hz",
            R1 | R2 => "Ohm",
        }
    }

    /// Whether the physical domain is strictly positive (otherwise non-negative).
    pub fn strictly_positive(self) -> bool {
        matches!(self, CircuitParam::F1 | CircuitParam::F2 | CircuitParam::C1 | CircuitParam::C2)
    }
}

impl fmt::Display for CircuitParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CircuitParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CircuitParam::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid("circuit parameter", format!("unknown name {s:?}")))
    }
}

/// Transfer matrix of a two-port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbcdMatrix {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl AbcdMatrix {
    pub fn identity() -> Self {
        Self {
            a: Complex64::new(1.0, 0.0),
            b: Complex64::new(0.0, 0.0),
            c: Complex64::new(0.0, 0.0),
            d: Complex64::new(1.0, 0.0),
        }
    }

    pub fn series(z: Complex64) -> Self {
        Self {
            b: z,
            ..Self::identity()
        }
    }

    pub fn shunt(y: Complex64) -> Self {
        Self {
            c: y,
            ..Self::identity()
        }
    }

    /// Cascade `self` followed by `next`.
    pub fn then(&self, next: &AbcdMatrix) -> AbcdMatrix {
        AbcdMatrix {
            a: self.a * next.a + self.b * next.c,
            b: self.a * next.b + self.b * next.d,
            c: self.c * next.a + self.d * next.c,
            d: self.c * next.b + self.d * next.d,
        }
    }

    /// `AD − BC`; unity for any cascade of reciprocal elements.
    pub fn determinant(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    /// `S21 = 2/(A + B/Z0 + C·Z0 + D)` for equal real reference impedances.
    pub fn s21(&self, z0: f64) -> Option<Complex64> {
        let denom = self.a + self.b / z0 + self.c * z0 + self.d;
        if denom.norm() == 0.0 || !denom.is_finite() {
            None
        } else {
            Some(2.0 / denom)
        }
    }
}

fn check_frequency(f: Frequency) -> Result<f64> {
    if f.hz() <= 0.0 {
        return Err(Error::invalid("frequency", "circuit evaluation needs f > 0"));
    }
    Ok(f.angular())
}

/// Impedance contributed to the line by the two coupled resonators.
pub fn delta_impedance(circuit: &TwoModeCircuit, f: Frequency) -> Result<Complex64> {
    let w = check_frequency(f)?;
    let (r1, r2) = (&circuit.mode1, &circuit.mode2);
    let (w1, w2) = (r1.angular_resonance(), r2.angular_resonance());
    let (c1, c2) = (r1.capacitance, r2.capacitance);
    let (m1, m2, m12) = (r1.mutual, r2.mutual, circuit.mutual12);

    let x1 = 1.0 - (w / w1).powi(2);
    let x2 = 1.0 - (w / w2).powi(2);
    let loss = w * c1 * c2 * (r1.resistance * m2 * m2 + r2.resistance * m1 * m1);
    let bracket = Complex64::new(
        c1 * m1 * m1 * x2 + c2 * m2 * m2 * x1 + 2.0 * w * m12 * m1 * m2 * c1 * c2,
        loss,
    );
    if bracket == Complex64::new(0.0, 0.0) {
        return Ok(bracket);
    }
    let numerator = I * w.powi(3) * bracket;

    let d1 = Complex64::new(x1, w * r1.resistance * c1);
    let d2 = Complex64::new(x2, w * r2.resistance * c2);
    let cross = w.powi(4) * m12 * m12 * c1 * c2;
    let denominator = d1 * d2 - cross;

    let scale = (1.0 + (w / w1).powi(2) + w * r1.resistance * c1)
        * (1.0 + (w / w2).powi(2) + w * r2.resistance * c2)
        + cross;
    if denominator.norm() < 1e-30 * scale {
        return Err(Error::Singular {
            what: "coupled-resonator impedance",
            location: format!("f = {} Hz", f.hz()),
        });
    }
    Ok(numerator / denominator)
}

/// `Zs = iωL + ΔZ`.
pub fn series_impedance(circuit: &TwoModeCircuit, f: Frequency) -> Result<Complex64> {
    let w = check_frequency(f)?;
    Ok(I * w * circuit.line.inductance + delta_impedance(circuit, f)?)
}

/// Shunt `Y1`, series `Zs`, shunt `Y2`, multiplied out.
pub fn abcd_cascade(zs: Complex64, y1: Complex64, y2: Complex64) -> AbcdMatrix {
    let one = Complex64::new(1.0, 0.0);
    AbcdMatrix {
        a: one + y2 * zs,
        b: zs,
        c: y1 + y2 * (one + y1 * zs),
        d: one + y1 * zs,
    }
}

/// ABCD matrix of the whole circuit at `f`.
pub fn circuit_abcd(circuit: &TwoModeCircuit, f: Frequency) -> Result<AbcdMatrix> {
    let zs = series_impedance(circuit, f)?;
    let y = circuit.line.shunt_admittance(f);
    Ok(abcd_cascade(zs, y, y))
}

pub fn s21_circuit(circuit: &TwoModeCircuit, f: Frequency) -> Result<ComplexS21> {
    circuit_abcd(circuit, f)?
        .s21(circuit.line.z0)
        .map(ComplexS21)
        .ok_or_else(|| Error::Singular {
            what: "S21 denominator",
            location: format!("f = {} Hz", f.hz()),
        })
}

/// [`s21_circuit`] over a frequency grid, evaluated in parallel, returned in grid order.
pub fn s21_circuit_sweep(circuit: &TwoModeCircuit, grid: &[Frequency]) -> Result<Vec<ComplexS21>> {
    grid.par_iter().map(|&f| s21_circuit(circuit, f)).collect()
}

/// Resistive HWHM rate `ω0² R C / 2`, reported in Hz.
pub fn intrinsic_damping(res: &ResonatorRLC) -> DampingRate {
    let w0 = res.angular_resonance();
    DampingRate::from_angular(w0 * w0 * res.resistance * res.capacitance / 2.0)
        .expect("non-negative by construction")
}

/// Radiative HWHM rate into the line, `ω0⁴ M² C / (2 Z0)`, reported in Hz.
pub fn extrinsic_damping(res: &ResonatorRLC, z0: f64) -> Result<DampingRate> {
    require("reference impedance", z0, true)?;
    let w0 = res.angular_resonance();
    DampingRate::from_angular(w0.powi(4) * res.mutual * res.mutual * res.capacitance / (2.0 * z0))
}
