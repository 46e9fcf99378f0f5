//! Unit-carrying scalars shared by every model.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_rate(name: &str, value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::invalid(name, format!("{value} is not finite")));
    }
    if value < 0.0 {
        return Err(Error::invalid(name, format!("{value} is negative")));
    }
    Ok(value)
}

/// Linear frequency in Hz.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Frequency(f64);

impl Frequency {
    pub const ZERO: Frequency = Frequency(0.0);

    pub fn from_hz(hz: f64) -> Result<Self> {
        check_rate("frequency", hz).map(Self)
    }

    pub fn from_mhz(mhz: f64) -> Result<Self> {
        Self::from_hz(mhz * 1e6)
    }

    pub fn from_ghz(ghz: f64) -> Result<Self> {
        Self::from_hz(ghz * 1e9)
    }

    /// Inverse of [`Frequency::angular`].
    pub fn from_angular(rad_per_s: f64) -> Result<Self> {
        Self::from_hz(rad_per_s / TAU)
    }

    pub fn hz(self) -> f64 {
        self.0
    }

    pub fn mhz(self) -> f64 {
        self.0 * 1e-6
    }

    pub fn ghz(self) -> f64 {
        self.0 * 1e-9
    }

    /// Angular frequency in rad/s.
    pub fn angular(self) -> f64 {
        TAU * self.0
    }
}

impl TryFrom<f64> for Frequency {
    type Error = Error;
    fn try_from(hz: f64) -> Result<Self> {
        Self::from_hz(hz)
    }
}

impl From<Frequency> for f64 {
    fn from(f: Frequency) -> f64 {
        f.0
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Hz", self.0)
    }
}

/// `2π·f` in rad/s.
pub fn to_angular(f: Frequency) -> f64 {
    f.angular()
}

/// Half-width-at-half-maximum decay rate, stored in linear Hz.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct DampingRate(f64);

impl DampingRate {
    pub const ZERO: DampingRate = DampingRate(0.0);

    pub fn from_hz(hz: f64) -> Result<Self> {
        check_rate("damping rate", hz).map(Self)
    }

    pub fn from_mhz(mhz: f64) -> Result<Self> {
        Self::from_hz(mhz * 1e6)
    }

    pub fn from_angular(rad_per_s: f64) -> Result<Self> {
        Self::from_hz(rad_per_s / TAU)
    }

    pub fn hz(self) -> f64 {
        self.0
    }

    pub fn mhz(self) -> f64 {
        self.0 * 1e-6
    }

    /// The same rate in rad/s, as it enters the mode equations.
    pub fn angular(self) -> f64 {
        TAU * self.0
    }
}

impl std::ops::Add for DampingRate {
    type Output = DampingRate;
    fn add(self, rhs: DampingRate) -> DampingRate {
        DampingRate(self.0 + rhs.0)
    }
}

impl TryFrom<f64> for DampingRate {
    type Error = Error;
    fn try_from(hz: f64) -> Result<Self> {
        Self::from_hz(hz)
    }
}

impl From<DampingRate> for f64 {
    fn from(d: DampingRate) -> f64 {
        d.0
    }
}

/// A rotation angle. The raw value in degrees is preserved as given.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct Angle(f64);

impl Angle {
    pub fn from_degrees(deg: f64) -> Self {
        Self(deg)
    }

    pub fn from_radians(rad: f64) -> Self {
        Self(rad.to_degrees())
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }

    /// Same orientation folded into `[0°, 180°)`.
    pub fn normalized(self) -> Angle {
        let folded = self.0.rem_euclid(180.0);
        // rem_euclid can round up to exactly 180 for tiny negative inputs
        Angle(if folded >= 180.0 { 0.0 } else { folded })
    }
}

/// Complex forward transmission amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexS21(pub Complex64);

impl ComplexS21 {
    pub const ONE: ComplexS21 = ComplexS21(Complex64::new(1.0, 0.0));

    pub fn new(re: f64, im: f64) -> Self {
        Self(Complex64::new(re, im))
    }

    pub fn re(self) -> f64 {
        self.0.re
    }

    pub fn im(self) -> f64 {
        self.0.im
    }

    pub fn value(self) -> Complex64 {
        self.0
    }

    pub fn magnitude(self) -> f64 {
        self.0.re.hypot(self.0.im)
    }

    /// Phase in radians.
    pub fn phase(self) -> f64 {
        self.0.arg()
    }

    pub fn db(self) -> f64 {
        db_magnitude(self)
    }
}

impl From<Complex64> for ComplexS21 {
    fn from(c: Complex64) -> Self {
        Self(c)
    }
}

/// `20·log10|s|`; a zero amplitude maps to `f64::NEG_INFINITY`.
pub fn db_magnitude(s: ComplexS21) -> f64 {
    let mag = s.magnitude();
    if mag == 0.0 {
        f64::NEG_INFINITY
    } else {
        20.0 * mag.log10()
    }
}

/// Linear amplitude from a dB value (inverse of [`db_magnitude`] on the magnitude).
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}
