//! Touchstone v1 two-port reader (S21 channel only).

use std::path::Path;

use num_complex::Complex64;

use crate::error::{ParseError, Result};
use crate::fit::{Provenance, Spectrum};
use crate::units::{db_to_linear, ComplexS21, Frequency};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    RealImag,
    MagAngle,
    DbAngle,
}

/// Settings from the `#` option line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionLine {
    /// Multiplier to Hz.
    pub frequency_unit: f64,
    pub format: DataFormat,
    pub z0: f64,
}

impl Default for OptionLine {
    fn default() -> Self {
        Self {
            frequency_unit: 1e9,
            format: DataFormat::MagAngle,
            z0: 50.0,
        }
    }
}

/// `(cos, sin)` of an angle in degrees, exact on multiples of 90°.
fn unit_phasor(deg: f64) -> Complex64 {
    let turns = deg / 90.0;
    if turns.fract() == 0.0 && turns.abs() < 1e15 {
        return match (turns as i64).rem_euclid(4) {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    let (s, c) = deg.to_radians().sin_cos();
    Complex64::new(c, s)
}

fn parse_option_line(body: &str, source: &str, line: usize) -> Result<OptionLine, ParseError> {
    let err = |msg: String| ParseError::new(source, Some(line), msg);
    let mut out = OptionLine::default();
    let mut tokens = body.split_whitespace();
    while let Some(tok) = tokens.next() {
        match tok.to_ascii_uppercase().as_str() {
            "HZ" => out.frequency_unit = 1.0,
            "KHZ" => out.frequency_unit = 1e3,
            "MHZ" => out.frequency_unit = 1e6,
            "GHZ" => out.frequency_unit = 1e9,
            "S" => {}
            "Y" | "Z" | "H" | "G" => return Err(err(format!("parameter type {tok} is not supported, only S"))),
            "RI" => out.format = DataFormat::RealImag,
            "MA" => out.format = DataFormat::MagAngle,
            "DB" => out.format = DataFormat::DbAngle,
            "R" => {
                let value = tokens.next().ok_or_else(|| err("option line: R without a value".into()))?;
                let z0: f64 = value
                    .parse()
                    .map_err(|_| err(format!("option line: reference impedance {value:?} is not a number")))?;
                if !(z0.is_finite() && z0 > 0.0) {
                    return Err(err(format!("option line: reference impedance {z0} must be > 0")));
                }
                out.z0 = z0;
            }
            _ => return Err(err(format!("option line: unknown token {tok:?}"))),
        }
    }
    Ok(out)
}

/// Parse a two-port Touchstone v1 document. `source` names it in errors.
pub fn parse_touchstone(text: &str, source: &str) -> Result<Spectrum, ParseError> {
    let mut options: Option<OptionLine> = None;
    let mut freqs = Vec::new();
    let mut values = Vec::new();
    let mut last_f = f64::NEG_INFINITY;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |msg: String| ParseError::new(source, Some(line), msg);
        let content = raw.split('!').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            return Err(err("Touchstone v2 keyword found; only v1 files are supported".into()));
        }
        if let Some(body) = content.strip_prefix('#') {
            if options.is_some() {
                return Err(err("second option line".into()));
            }
            options = Some(parse_option_line(body, source, line)?);
            continue;
        }
        let opts = options.ok_or_else(|| err("data before the option line".into()))?;
        let nums = content
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("{t:?} is not a number"))))
            .collect::<Result<Vec<f64>, _>>()?;
        if nums.len() != 9 {
            return Err(err(format!(
                "expected 9 columns (frequency and four S-parameter pairs), found {}",
                nums.len()
            )));
        }
        let f = nums[0] * opts.frequency_unit;
        if !(f.is_finite() && f >= 0.0) {
            return Err(err(format!("frequency {} is not a non-negative number", nums[0])));
        }
        if f <= last_f {
            return Err(err(format!("frequency {} does not increase", nums[0])));
        }
        last_f = f;
        let (a, b) = (nums[3], nums[4]);
        let s21 = match opts.format {
            DataFormat::RealImag => Complex64::new(a, b),
            DataFormat::MagAngle => unit_phasor(b) * a,
            DataFormat::DbAngle => unit_phasor(b) * db_to_linear(a),
        };
        if !s21.is_finite() {
            return Err(err("S21 is not finite".into()));
        }
        freqs.push(Frequency::from_hz(f).map_err(|e| err(e.to_string()))?);
        values.push(ComplexS21(s21));
    }
    let opts = options.ok_or_else(|| ParseError::new(source, None, "no option line"))?;
    if freqs.is_empty() {
        return Err(ParseError::new(source, None, "no data rows"));
    }
    let spectrum = Spectrum::new(freqs, values).map_err(|e| ParseError::new(source, None, e.to_string()))?;
    Ok(spectrum.with_provenance(Provenance {
        source: Some(source.to_string()),
        z0: Some(opts.z0),
        ..Provenance::default()
    }))
}

pub fn load_touchstone(path: &Path) -> Result<Spectrum> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_touchstone(&text, &path.display().to_string())?)
}
