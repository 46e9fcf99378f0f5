//! Reference parameter sets for the four measured resonator orientations.
//!
//! These are fitted values of the reference device, used by tests, examples and
//! synthetic-data generation. Run configs never fall back to them implicitly.

use crate::circuit::{ResonatorRLC, TransmissionLine, TwoModeCircuit};
use crate::hybrid::{CouplingSet, HybridModeSet, KittelParams, ModeParams, ModeTriplet};
use crate::polarization::AngularCouplingModel;
use crate::units::{Angle, DampingRate, Frequency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReferenceAngle {
    Deg0,
    Deg30,
    Deg60,
    Deg90,
}

impl ReferenceAngle {
    pub const ALL: [ReferenceAngle; 4] = [Self::Deg0, Self::Deg30, Self::Deg60, Self::Deg90];

    pub fn angle(self) -> Angle {
        Angle::from_degrees(match self {
            Self::Deg0 => 0.0,
            Self::Deg30 => 30.0,
            Self::Deg60 => 60.0,
            Self::Deg90 => 90.0,
        })
    }

    fn column(self) -> usize {
        self as usize
    }
}

pub const LINE_INDUCTANCE: f64 = 0.9196e-9;
pub const LINE_CAPACITANCE: f64 = 1.2884e-12;
pub const Z0: f64 = 50.0;
pub const C1: f64 = 0.2193e-12;
pub const C2: f64 = 0.2988e-12;
pub const R1: f64 = 0.9831;
pub const R2: f64 = 0.8007;

/// Photon resonances in GHz per orientation (0°, 30°, 60°, 90°).
pub const F1_GHZ: [f64; 4] = [3.9350, 3.7557, 3.8816, 3.8816];
pub const F2_GHZ: [f64; 4] = [5.6778, 5.6778, 5.7342, 5.7138];
/// Mutual inductances in nH.
pub const M1_NH: [f64; 4] = [0.2150, 0.1840, 0.1100, 0.0];
pub const M2_NH: [f64; 4] = [0.0, 0.0930, 0.1620, 0.1820];

/// Hybrid-model rates in MHz.
pub const BETA1_MHZ: f64 = 11.0;
pub const BETA2_MHZ: f64 = 25.0;
pub const BETA3_MHZ: f64 = 1.0;
pub const GAMMA3_MHZ: f64 = 0.01;
pub const GAMMA1_MHZ: [f64; 4] = [3.0, 2.2, 0.75, 0.0];
pub const GAMMA2_MHZ: [f64; 4] = [0.0, 3.5, 10.0, 13.0];
pub const G31_MHZ: [f64; 4] = [56.5, 80.0, 98.0, 0.0];
pub const G23_MHZ: [f64; 4] = [0.0, 76.0, 50.0, 30.0];

/// Maximal radiative rates, γ1 at 0° and γ2 at 90°, in MHz.
pub const GAMMA1_MAX_MHZ: f64 = 3.0;
pub const GAMMA2_MAX_MHZ: f64 = 13.0;

pub fn circuit_table(angle: ReferenceAngle) -> TwoModeCircuit {
    let k = angle.column();
    let line = TransmissionLine::new(LINE_INDUCTANCE, LINE_CAPACITANCE, Z0).unwrap();
    let mode1 = ResonatorRLC::from_resonance(Frequency::from_ghz(F1_GHZ[k]).unwrap(), C1, R1, M1_NH[k] * 1e-9).unwrap();
    let mode2 = ResonatorRLC::from_resonance(Frequency::from_ghz(F2_GHZ[k]).unwrap(), C2, R2, M2_NH[k] * 1e-9).unwrap();
    TwoModeCircuit::new(line, mode1, mode2, 0.0).unwrap()
}

pub fn kittel_yig() -> KittelParams {
    KittelParams::new(2.8, 1750.0).unwrap()
}

pub fn hybrid_table(angle: ReferenceAngle) -> HybridModeSet {
    let k = angle.column();
    let mode = |f_ghz: f64, beta: f64, gamma: f64| {
        ModeParams::new(
            Frequency::from_ghz(f_ghz).unwrap(),
            DampingRate::from_mhz(beta).unwrap(),
            DampingRate::from_mhz(gamma).unwrap(),
        )
    };
    HybridModeSet {
        modes: ModeTriplet {
            photon1: mode(F1_GHZ[k], BETA1_MHZ, GAMMA1_MHZ[k]),
            photon2: mode(F2_GHZ[k], BETA2_MHZ, GAMMA2_MHZ[k]),
            magnon: mode(0.0, BETA3_MHZ, GAMMA3_MHZ),
        },
        couplings: CouplingSet::from_mhz(0.0, G23_MHZ[k], G31_MHZ[k]).unwrap(),
        kittel: kittel_yig(),
    }
}

pub fn angular_model() -> AngularCouplingModel {
    AngularCouplingModel::new(
        DampingRate::from_mhz(GAMMA1_MAX_MHZ).unwrap(),
        DampingRate::from_mhz(GAMMA2_MAX_MHZ).unwrap(),
    )
}
