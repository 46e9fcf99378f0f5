use serde::{Deserialize, Serialize};

use super::Spectrum;
use crate::error::{Error, Result};
use crate::units::{DampingRate, Frequency};

/// Shortest trace [`extract_resonances`] accepts.
pub const MIN_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub frequency: Frequency,
    /// Half width at half depth; `None` when neither flank reaches half depth.
    pub hwhm: Option<DampingRate>,
    /// Prominence in linear `|S21|`.
    pub depth: f64,
}

/// Dips of `|S21|` whose prominence reaches `prominence`, in frequency order.
pub fn extract_resonances(spec: &Spectrum, prominence: f64) -> Result<Vec<Resonance>> {
    if spec.len() < MIN_POINTS {
        return Err(Error::invalid(
            "spectrum",
            format!("{} points, resonance search needs at least {MIN_POINTS}", spec.len()),
        ));
    }
    if !(prominence.is_finite() && prominence > 0.0) {
        return Err(Error::invalid("prominence", format!("{prominence} must be finite and > 0")));
    }
    Ok(find_dips(&spec.frequencies_hz(), &spec.magnitudes(), prominence))
}

/// Prominent local minima of `mag` over `f` (Hz). A flat run counts as one minimum
/// located at its middle sample.
pub fn find_dips(f: &[f64], mag: &[f64], prominence: f64) -> Vec<Resonance> {
    let n = mag.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if !(mag[i] < mag[i - 1]) {
            i += 1;
            continue;
        }
        let mut end = i;
        while end + 1 < n && mag[end + 1] == mag[i] {
            end += 1;
        }
        if end + 1 >= n || !(mag[end + 1] > mag[i]) {
            i = end + 1;
            continue;
        }
        let level = mag[i];
        let left_peak = flank_peak(mag[..i].iter().rev(), level);
        let right_peak = flank_peak(mag[end + 1..].iter(), level);
        let depth = left_peak.min(right_peak) - level;
        if depth >= prominence {
            let centre = (i + end) / 2;
            out.push(Resonance {
                frequency: Frequency::from_hz(refine(f, mag, centre)).unwrap_or(Frequency::ZERO),
                hwhm: half_width(f, mag, i, end, level + depth / 2.0),
                depth,
            });
        }
        i = end + 1;
    }
    out
}

/// Highest sample before the trace drops below `level` again.
fn flank_peak<'a>(samples: impl Iterator<Item = &'a f64>, level: f64) -> f64 {
    let mut peak = level;
    for &v in samples {
        if v < level {
            break;
        }
        peak = peak.max(v);
    }
    peak
}

/// Vertex of the parabola through the minimum and its neighbours.
fn refine(f: &[f64], mag: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= f.len() {
        return f[i];
    }
    let (x0, x1, x2) = (f[i - 1], f[i], f[i + 1]);
    let (y0, y1, y2) = (mag[i - 1], mag[i], mag[i + 1]);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curvature = (d12 - d01) / (x2 - x0);
    if !(curvature > 0.0) {
        return x1;
    }
    // Newton form: y0 + d01 (x − x0) + curvature (x − x0)(x − x1)
    let vertex = 0.5 * (x0 + x1) - d01 / (2.0 * curvature);
    vertex.clamp(x0, x2)
}

fn half_width(f: &[f64], mag: &[f64], start: usize, end: usize, half: f64) -> Option<DampingRate> {
    let left = (1..=start).rev().find(|&j| mag[j - 1] >= half).map(|j| crossing(f[j - 1], mag[j - 1], f[j], mag[j], half));
    let right = (end..f.len() - 1).find(|&j| mag[j + 1] >= half).map(|j| crossing(f[j], mag[j], f[j + 1], mag[j + 1], half));
    let centre = 0.5 * (f[start] + f[end]);
    let width = match (left, right) {
        (Some(a), Some(b)) => (b - a) / 2.0,
        (Some(a), None) => centre - a,
        (None, Some(b)) => b - centre,
        (None, None) => return None,
    };
    DampingRate::from_hz(width).ok()
}

fn crossing(x0: f64, y0: f64, x1: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        return 0.5 * (x0 + x1);
    }
    x0 + (level - y0) * (x1 - x0) / (y1 - y0)
}
