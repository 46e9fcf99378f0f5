//! Spectrum CSV: optional `#` header lines holding a JSON object, then a header row
//! and one row per frequency.
//!
//! Complex files carry `freq_hz,re_s21,im_s21,mag_db`; magnitude files carry
//! `freq_hz,mag_s21,mag_db`. The reader also accepts `mag_db_s21` as the dB column.
//! Numbers are written in shortest round-trip form, so write-then-read is exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ParseError, Result};
use crate::fit::{Provenance, Spectrum};
use crate::units::{db_magnitude, db_to_linear, ComplexS21, Frequency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsvKind {
    CsvComplex,
    CsvMagnitude,
}

/// Column names to look up. Magnitude files need one of `mag` (linear) or `mag_db`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    #[serde(default = "ColumnMap::default_freq")]
    pub freq: String,
    #[serde(default = "ColumnMap::default_re")]
    pub re: String,
    #[serde(default = "ColumnMap::default_im")]
    pub im: String,
    #[serde(default = "ColumnMap::default_mag")]
    pub mag: String,
    #[serde(default = "ColumnMap::default_mag_db")]
    pub mag_db: Vec<String>,
}

impl ColumnMap {
    fn default_freq() -> String {
        "freq_hz".into()
    }
    fn default_re() -> String {
        "re_s21".into()
    }
    fn default_im() -> String {
        "im_s21".into()
    }
    fn default_mag() -> String {
        "mag_s21".into()
    }
    fn default_mag_db() -> Vec<String> {
        vec!["mag_db_s21".into(), "mag_db".into()]
    }
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            freq: Self::default_freq(),
            re: Self::default_re(),
            im: Self::default_im(),
            mag: Self::default_mag(),
            mag_db: Self::default_mag_db(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CsvHeader {
    schema_version: u32,
    kind: String,
    #[serde(default)]
    provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parameters: Option<serde_json::Value>,
}

/// Spectrum as CSV text. `parameters` lands in the header block.
pub fn write_spectrum_csv(spec: &Spectrum, parameters: Option<&serde_json::Value>) -> String {
    let header = CsvHeader {
        schema_version: crate::SCHEMA_VERSION,
        kind: "spectrum".into(),
        provenance: spec.provenance.clone(),
        parameters: parameters.cloned(),
    };
    let mut out = format!("# {}\n", serde_json::to_string(&header).expect("header serializes"));
    if spec.is_magnitude_only() {
        out.push_str("freq_hz,mag_s21,mag_db\n");
        for (f, m) in spec.f_grid().iter().zip(spec.magnitudes()) {
            out.push_str(&format!("{},{},{}\n", f.hz(), m, db_magnitude(ComplexS21::new(m.abs(), 0.0))));
        }
    } else {
        out.push_str("freq_hz,re_s21,im_s21,mag_db\n");
        for (f, s) in spec.f_grid().iter().zip(spec.s21()) {
            out.push_str(&format!("{},{},{},{}\n", f.hz(), s.re(), s.im(), s.db()));
        }
    }
    out
}

fn leading_comment_json(text: &str) -> Option<CsvHeader> {
    let body: String = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#'))
        .collect::<Vec<_>>()
        .join("\n");
    serde_json::from_str(&body).ok()
}

enum Layout {
    Complex { re: usize, im: usize },
    Linear(usize),
    Db(usize),
}

/// Parse spectrum CSV text. With `kind = None` the layout is inferred from the
/// header row: re/im columns win, then linear magnitude, then dB.
pub fn parse_spectrum_csv(text: &str, source: &str, kind: Option<CsvKind>, columns: &ColumnMap) -> Result<Spectrum, ParseError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header_line = text.lines().take_while(|l| l.starts_with('#')).count() + 1;
    let headers = reader
        .headers()
        .map_err(|e| ParseError::new(source, Some(header_line), e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(ParseError::new(source, None, "empty file: no header row"));
    }
    let find = |name: &str| headers.iter().position(|h| h == name);
    let missing = |what: &str| ParseError::new(source, Some(header_line), format!("missing column {what}"));
    let freq = find(&columns.freq).ok_or_else(|| missing(&columns.freq))?;
    let complex = find(&columns.re).zip(find(&columns.im));
    let linear = find(&columns.mag);
    let db = columns.mag_db.iter().find_map(|n| find(n));
    let layout = match kind {
        Some(CsvKind::CsvComplex) => complex
            .map(|(re, im)| Layout::Complex { re, im })
            .ok_or_else(|| missing(&format!("{} and {}", columns.re, columns.im)))?,
        Some(CsvKind::CsvMagnitude) => linear
            .map(Layout::Linear)
            .or(db.map(Layout::Db))
            .ok_or_else(|| missing(&format!("{} or {}", columns.mag, columns.mag_db.join(" or "))))?,
        None => complex
            .map(|(re, im)| Layout::Complex { re, im })
            .or(linear.map(Layout::Linear))
            .or(db.map(Layout::Db))
            .ok_or_else(|| missing("for S21 (complex, linear or dB magnitude)"))?,
    };

    let mut freqs = Vec::new();
    let mut s21 = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize);
            ParseError::new(source, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize);
        let err = |msg: String| ParseError::new(source, line, msg);
        let cell = |i: usize| -> Result<f64, ParseError> {
            let raw = record.get(i).ok_or_else(|| err(format!("missing cell in column {}", &headers[i])))?;
            raw.parse::<f64>().map_err(|_| err(format!("{raw:?} in column {} is not a number", &headers[i])))
        };
        let f = cell(freq)?;
        if !(f.is_finite() && f >= 0.0) {
            return Err(err(format!("frequency {f} is not a non-negative number")));
        }
        if f <= last {
            return Err(err(format!("frequency {f} does not increase")));
        }
        last = f;
        let value = match layout {
            Layout::Complex { re, im } => ComplexS21::new(cell(re)?, cell(im)?),
            Layout::Linear(i) => ComplexS21::new(cell(i)?, 0.0),
            Layout::Db(i) => ComplexS21::new(db_to_linear(cell(i)?), 0.0),
        };
        if !value.value().is_finite() {
            return Err(err("S21 is not finite".into()));
        }
        freqs.push(Frequency::from_hz(f).map_err(|e| err(e.to_string()))?);
        s21.push(value);
    }
    if freqs.is_empty() {
        return Err(ParseError::new(source, None, "no data rows"));
    }
    let wrap = |e: crate::Error| ParseError::new(source, None, e.to_string());
    let mut spectrum = match layout {
        Layout::Complex { .. } => Spectrum::new(freqs, s21).map_err(wrap)?,
        _ => Spectrum::from_magnitudes(freqs, s21.iter().map(|s| s.re()).collect()).map_err(wrap)?,
    };
    let mut provenance = leading_comment_json(text).map(|h| h.provenance).unwrap_or_default();
    provenance.source.get_or_insert_with(|| source.to_string());
    spectrum.provenance = provenance;
    Ok(spectrum)
}

pub fn load_csv_spectrum(path: &Path, kind: Option<CsvKind>, columns: &ColumnMap) -> Result<Spectrum> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_spectrum_csv(&text, &path.display().to_string(), kind, columns)?)
}
