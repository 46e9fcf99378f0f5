//! Grid files: a pretty-printed JSON header carrying both axes and provenance,
//! followed by the matrix as headerless CSV (one line per row-axis value).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ParseError, Result};
use crate::hybrid::{FieldSweepMap, MagnitudeScale, MapMetadata};
use crate::polarization::{zero_contour, TransitionMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// `|S21|`, rows = field (Oe), columns = frequency (Hz).
    FieldSweep,
    /// `Φγ`, rows = damping ratio, columns = angle (deg).
    TransitionMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridHeader {
    pub schema_version: u32,
    pub kind: GridKind,
    pub quantity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<MagnitudeScale>,
    pub rows: Axis,
    pub cols: Axis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub header: GridHeader,
    /// Row-major.
    pub values: Vec<f64>,
}

impl GridFile {
    pub fn from_field_sweep(map: &FieldSweepMap) -> Self {
        Self {
            header: GridHeader {
                schema_version: crate::SCHEMA_VERSION,
                kind: GridKind::FieldSweep,
                quantity: "s21_magnitude".into(),
                scale: Some(map.scale()),
                rows: Axis {
                    name: "h".into(),
                    unit: "Oe".into(),
                    values: map.h_grid().to_vec(),
                },
                cols: Axis {
                    name: "f".into(),
                    unit: "Hz".into(),
                    values: map.f_grid().to_vec(),
                },
                theta_deg: map.metadata.theta_deg,
                source: map.metadata.source.clone(),
                parameters: map.metadata.parameters.clone(),
            },
            values: map.values().to_vec(),
        }
    }

    pub fn to_field_sweep(&self) -> Result<FieldSweepMap> {
        if self.header.kind != GridKind::FieldSweep {
            return Err(crate::Error::invalid("grid file", "not a field-sweep map"));
        }
        let scale = self.header.scale.unwrap_or(MagnitudeScale::Linear);
        let mut map = FieldSweepMap::new(
            self.header.rows.values.clone(),
            self.header.cols.values.clone(),
            self.values.clone(),
            scale,
        )?;
        map.metadata = MapMetadata {
            theta_deg: self.header.theta_deg,
            source: self.header.source.clone(),
            parameters: self.header.parameters.clone(),
        };
        Ok(map)
    }

    pub fn from_transition_map(map: &TransitionMap, parameters: Option<serde_json::Value>) -> Self {
        Self {
            header: GridHeader {
                schema_version: crate::SCHEMA_VERSION,
                kind: GridKind::TransitionMap,
                quantity: "order_parameter".into(),
                scale: None,
                rows: Axis {
                    name: "delta".into(),
                    unit: "1".into(),
                    values: map.delta_grid.clone(),
                },
                cols: Axis {
                    name: "theta".into(),
                    unit: "deg".into(),
                    values: map.theta_grid.clone(),
                },
                theta_deg: None,
                source: None,
                parameters,
            },
            values: map.values.clone(),
        }
    }

    pub fn to_transition_map(&self) -> Result<TransitionMap> {
        if self.header.kind != GridKind::TransitionMap {
            return Err(crate::Error::invalid("grid file", "not a transition map"));
        }
        Ok(TransitionMap {
            theta_grid: self.header.cols.values.clone(),
            delta_grid: self.header.rows.values.clone(),
            values: self.values.clone(),
            zero_contour: zero_contour(&self.header.cols.values),
        })
    }
}

pub fn write_grid(grid: &GridFile) -> String {
    let mut out = serde_json::to_string_pretty(&grid.header).expect("header serializes");
    out.push('\n');
    let cols = grid.header.cols.values.len().max(1);
    for row in grid.values.chunks(cols) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn check_axis(axis: &Axis, source: &str) -> Result<(), ParseError> {
    let bad = |msg: String| ParseError::new(source, None, format!("axis {}: {msg}", axis.name));
    if axis.values.is_empty() {
        return Err(bad("no values".into()));
    }
    if let Some(k) = axis.values.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(bad(format!("not strictly increasing at index {}", k + 1)));
    }
    Ok(())
}

pub fn parse_grid(text: &str, source: &str) -> Result<GridFile, ParseError> {
    let mut stream = serde_json::Deserializer::from_str(text).into_iter::<GridHeader>();
    let header = match stream.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(ParseError::new(source, Some(e.line()), format!("header: {e}"))),
        None => return Err(ParseError::new(source, None, "empty file: no JSON header")),
    };
    if header.schema_version != crate::SCHEMA_VERSION {
        return Err(ParseError::new(
            source,
            None,
            format!("schema version {} (expected {})", header.schema_version, crate::SCHEMA_VERSION),
        ));
    }
    check_axis(&header.rows, source)?;
    check_axis(&header.cols, source)?;
    let offset = stream.byte_offset();
    let lines_before = text[..offset].matches('\n').count();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(&text.as_bytes()[offset..]);
    let (n_rows, n_cols) = (header.rows.values.len(), header.cols.values.len());
    let mut values = Vec::with_capacity(n_rows * n_cols);
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| lines_before + p.line() as usize);
            ParseError::new(source, line, e.to_string())
        })?;
        let line = record.position().map(|p| lines_before + p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let err = |msg: String| ParseError::new(source, line, msg);
        if rows == n_rows {
            return Err(err(format!("more than the {n_rows} rows the header declares")));
        }
        if record.len() != n_cols {
            return Err(err(format!("{} columns, the header declares {n_cols}", record.len())));
        }
        for cell in record.iter() {
            let v: f64 = cell.parse().map_err(|_| err(format!("{cell:?} is not a number")))?;
            if v.is_nan() {
                return Err(err("NaN cell".into()));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows != n_rows {
        return Err(ParseError::new(source, None, format!("{rows} rows, the header declares {n_rows}")));
    }
    Ok(GridFile { header, values })
}

pub fn load_grid(path: &Path) -> Result<GridFile> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_grid(&text, &path.display().to_string())?)
}
