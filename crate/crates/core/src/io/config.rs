//! JSON run configuration. Physical values are always explicit; only tolerances and
//! grids have defaults. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::spectrum_csv::{load_csv_spectrum, ColumnMap, CsvKind};
use super::touchstone::load_touchstone;
use crate::circuit::{CircuitParam, ResonatorRLC, TransmissionLine, TwoModeCircuit};
use crate::error::{Error, ParseError, Result};
use crate::fit::{FitConfig, Spectrum};
use crate::hybrid::{CouplingSet, HybridModeSet, HybridParam, KittelParams, ModeParams, ModeTriplet};
use crate::polarization::AngularCouplingModel;
use crate::units::{DampingRate, Frequency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// Upper limit on a generated grid's `points`.
pub const MAX_GRID_POINTS: usize = 10_000_000;

/// Either explicit `values` or `start`/`stop`/`points` with a spacing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default)]
    pub spacing: Spacing,
}

impl GridSpec {
    pub fn range(start: f64, stop: f64, points: usize) -> Self {
        Self {
            start: Some(start),
            stop: Some(stop),
            points: Some(points),
            ..Self::default()
        }
    }

    pub fn resolve(&self, name: &str) -> Result<Vec<f64>> {
        let grid = match (&self.values, self.start, self.stop, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => {
                if n == 0 {
                    return Err(Error::invalid(name, "points must be >= 1"));
                }
                if n > MAX_GRID_POINTS {
                    return Err(Error::invalid(name, format!("points must be <= {MAX_GRID_POINTS}")));
                }
                if n == 1 {
                    vec![a]
                } else {
                    let t = |k: usize| k as f64 / (n - 1) as f64;
                    match self.spacing {
                        Spacing::Linear => (0..n).map(|k| if k == n - 1 { b } else { a + (b - a) * t(k) }).collect(),
                        Spacing::Log => {
                            if !(a > 0.0 && b > 0.0) {
                                return Err(Error::invalid(name, "log spacing needs positive start and stop"));
                            }
                            let (la, lb) = (a.ln(), b.ln());
                            (0..n)
                                .map(|k| match k {
                                    0 => a,
                                    k if k == n - 1 => b,
                                    k => (la + (lb - la) * t(k)).exp(),
                                })
                                .collect()
                        }
                    }
                }
            }
            _ => return Err(Error::invalid(name, "give either `values` or all of `start`, `stop`, `points`")),
        };
        crate::hybrid::check_grid(name, &grid)?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineBlock {
    pub inductance_h: f64,
    pub capacitance_f: f64,
    pub z0_ohm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorBlock {
    pub frequency_hz: f64,
    pub capacitance_f: f64,
    pub resistance_ohm: f64,
    pub mutual_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitBlock {
    pub line: LineBlock,
    pub mode1: ResonatorBlock,
    pub mode2: ResonatorBlock,
    pub mutual12_h: f64,
}

impl CircuitBlock {
    pub fn build(&self) -> Result<TwoModeCircuit> {
        let line = TransmissionLine::new(self.line.inductance_h, self.line.capacitance_f, self.line.z0_ohm)?;
        let res = |b: &ResonatorBlock| {
            ResonatorRLC::from_resonance(Frequency::from_hz(b.frequency_hz)?, b.capacitance_f, b.resistance_ohm, b.mutual_h)
        };
        TwoModeCircuit::new(line, res(&self.mode1)?, res(&self.mode2)?, self.mutual12_h)
    }

    pub fn from_circuit(c: &TwoModeCircuit) -> Self {
        let res = |r: &ResonatorRLC| ResonatorBlock {
            frequency_hz: r.resonance().hz(),
            capacitance_f: r.capacitance(),
            resistance_ohm: r.resistance(),
            mutual_h: r.mutual(),
        };
        Self {
            line: LineBlock {
                inductance_h: c.line.inductance(),
                capacitance_f: c.line.capacitance(),
                z0_ohm: c.line.z0(),
            },
            mode1: res(&c.mode1),
            mode2: res(&c.mode2),
            mutual12_h: c.mutual12(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeBlock {
    pub frequency_hz: f64,
    pub beta_hz: f64,
    pub gamma_hz: f64,
}

impl ModeBlock {
    pub fn build(&self) -> Result<ModeParams> {
        Ok(ModeParams::new(
            Frequency::from_hz(self.frequency_hz)?,
            DampingRate::from_hz(self.beta_hz)?,
            DampingRate::from_hz(self.gamma_hz)?,
        ))
    }

    pub fn from_mode(m: &ModeParams) -> Self {
        Self {
            frequency_hz: m.frequency.hz(),
            beta_hz: m.beta.hz(),
            gamma_hz: m.gamma.hz(),
        }
    }
}

/// Magnon rates; its frequency follows the bias field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnonBlock {
    pub beta_hz: f64,
    pub gamma_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingBlock {
    pub g12_hz: f64,
    pub g23_hz: f64,
    pub g31_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KittelBlock {
    pub gyro_mhz_per_oe: f64,
    pub m_eff_gauss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridBlock {
    pub photon1: ModeBlock,
    pub photon2: ModeBlock,
    pub magnon: MagnonBlock,
    pub couplings: CouplingBlock,
    pub kittel: KittelBlock,
}

impl HybridBlock {
    pub fn build(&self) -> Result<HybridModeSet> {
        Ok(HybridModeSet {
            modes: ModeTriplet {
                photon1: self.photon1.build()?,
                photon2: self.photon2.build()?,
                magnon: ModeParams::new(
                    Frequency::ZERO,
                    DampingRate::from_hz(self.magnon.beta_hz)?,
                    DampingRate::from_hz(self.magnon.gamma_hz)?,
                ),
            },
            couplings: CouplingSet::from_hz(self.couplings.g12_hz, self.couplings.g23_hz, self.couplings.g31_hz)?,
            kittel: KittelParams::new(self.kittel.gyro_mhz_per_oe, self.kittel.m_eff_gauss)?,
        })
    }

    pub fn from_params(p: &HybridModeSet) -> Self {
        Self {
            photon1: ModeBlock::from_mode(&p.modes.photon1),
            photon2: ModeBlock::from_mode(&p.modes.photon2),
            magnon: MagnonBlock {
                beta_hz: p.modes.magnon.beta.hz(),
                gamma_hz: p.modes.magnon.gamma.hz(),
            },
            couplings: CouplingBlock {
                g12_hz: p.couplings.g12(),
                g23_hz: p.couplings.g23(),
                g31_hz: p.couplings.g31(),
            },
            kittel: KittelBlock {
                gyro_mhz_per_oe: p.kittel.gyro_mhz_per_oe(),
                m_eff_gauss: p.kittel.m_eff_gauss(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarizationBlock {
    pub gamma1_max_hz: f64,
    pub gamma2_max_hz: f64,
    /// Degrees; defaults to 0..180 in 1° steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_grid_deg: Option<GridSpec>,
    /// Defaults to 201 log-spaced ratios from 0.01 to 100.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_grid: Option<GridSpec>,
    /// Angles at which γ curves are tabulated; defaults to 0, 30, 60, 90.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_angles_deg: Option<Vec<f64>>,
}

impl PolarizationBlock {
    pub fn model(&self) -> Result<AngularCouplingModel> {
        Ok(AngularCouplingModel::new(
            DampingRate::from_hz(self.gamma1_max_hz)?,
            DampingRate::from_hz(self.gamma2_max_hz)?,
        ))
    }

    pub fn theta_grid(&self) -> Result<Vec<f64>> {
        self.theta_grid_deg
            .clone()
            .unwrap_or_else(|| GridSpec::range(0.0, 180.0, 181))
            .resolve("theta grid")
    }

    pub fn delta_grid(&self) -> Result<Vec<f64>> {
        self.delta_grid
            .clone()
            .unwrap_or(GridSpec {
                spacing: Spacing::Log,
                ..GridSpec::range(0.01, 100.0, 201)
            })
            .resolve("delta grid")
    }

    pub fn report_angles(&self) -> Vec<f64> {
        self.report_angles_deg.clone().unwrap_or_else(|| vec![0.0, 30.0, 60.0, 90.0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    TouchstoneS2p,
    CsvComplex,
    CsvMagnitude,
    /// Field-sweep grid file (coupling-stage input).
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFileDescriptor {
    pub path: PathBuf,
    /// Inferred from the extension when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DataFormat>,
    /// Declared reference impedance; must agree with the file when the file states one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0_ohm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<ColumnMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<f64>,
}

impl DataFileDescriptor {
    pub fn from_path(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            format: None,
            z0_ohm: None,
            columns: None,
            theta_deg: None,
        }
    }

    pub fn resolved_format(&self) -> Option<DataFormat> {
        self.format.or_else(|| {
            let ext = self.path.extension()?.to_str()?.to_ascii_lowercase();
            match ext.as_str() {
                "s2p" => Some(DataFormat::TouchstoneS2p),
                "grid" => Some(DataFormat::Grid),
                _ => None,
            }
        })
    }

    /// Load a spectrum relative to `base_dir`.
    pub fn load_spectrum(&self, base_dir: &Path) -> Result<Spectrum> {
        let path = base_dir.join(&self.path);
        let columns = self.columns.clone().unwrap_or_default();
        let mut spec = match self.resolved_format() {
            Some(DataFormat::TouchstoneS2p) => load_touchstone(&path)?,
            Some(DataFormat::CsvComplex) => load_csv_spectrum(&path, Some(CsvKind::CsvComplex), &columns)?,
            Some(DataFormat::CsvMagnitude) => load_csv_spectrum(&path, Some(CsvKind::CsvMagnitude), &columns)?,
            None => load_csv_spectrum(&path, None, &columns)?,
            Some(DataFormat::Grid) => {
                return Err(Error::invalid("data format", format!("{} is a grid file, not a spectrum", path.display())))
            }
        };
        if let Some(declared) = self.z0_ohm {
            match spec.provenance.z0 {
                Some(file) if file != declared => {
                    return Err(ParseError::new(
                        path.display().to_string(),
                        None,
                        format!("file reference impedance {file} Ω differs from the declared {declared} Ω"),
                    )
                    .into())
                }
                _ => spec.provenance.z0 = Some(declared),
            }
        }
        if self.theta_deg.is_some() {
            spec.provenance.theta_deg = self.theta_deg;
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitFitBlock {
    #[serde(default)]
    pub config: FitConfig<CircuitParam>,
    /// Free parameters that take one value across all data files.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shared: Vec<CircuitParam>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    /// Standard deviation on linear `|S21|`.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit: Option<CircuitBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid: Option<HybridBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarization: Option<PolarizationBlock>,
    /// Hz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_grid: Option<GridSpec>,
    /// Oe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_circuit: Option<CircuitFitBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_hybrid: Option<FitConfig<HybridParam>>,
    /// Synthetic noise added to simulated outputs; needs a seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseBlock>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub data: Vec<DataFileDescriptor>,
}

impl RunConfig {
    /// Parse and validate every block that is present.
    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ParseError::new(source, Some(e.line()), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != crate::SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!("{} (this build reads version {})", self.schema_version, crate::SCHEMA_VERSION),
            ));
        }
        if let Some(c) = &self.circuit {
            let circuit = c.build()?;
            if let Some(fit) = &self.fit_circuit {
                fit.config.validate(|p| circuit.get(p))?;
                if let Some(p) = fit.shared.iter().find(|p| !fit.config.free_params().contains(p)) {
                    return Err(Error::invalid("shared", format!("{p} is not a free parameter")));
                }
            }
        }
        if let Some(h) = &self.hybrid {
            let params = h.build()?;
            if let Some(fit) = &self.fit_hybrid {
                fit.validate(|p| params.get(p))?;
            }
        }
        if let Some(p) = &self.polarization {
            p.model()?;
            p.theta_grid()?;
            p.delta_grid()?;
        }
        if let Some(g) = &self.f_grid {
            let f = g.resolve("f_grid")?;
            if f[0] <= 0.0 {
                return Err(Error::invalid("f_grid", "frequencies must be > 0"));
            }
        }
        if let Some(g) = &self.h_grid {
            let h = g.resolve("h_grid")?;
            if h[0] < 0.0 {
                return Err(Error::invalid("h_grid", "fields must be >= 0"));
            }
        }
        if let Some(n) = &self.noise {
            if !(n.sigma.is_finite() && n.sigma >= 0.0) {
                return Err(Error::invalid("noise sigma", format!("{} must be finite and >= 0", n.sigma)));
            }
        }
        Ok(())
    }

    fn require<'a, T>(block: &'a Option<T>, name: &str) -> Result<&'a T> {
        block.as_ref().ok_or_else(|| Error::invalid(name, "block is required for this command"))
    }

    pub fn circuit(&self) -> Result<TwoModeCircuit> {
        Self::require(&self.circuit, "circuit")?.build()
    }

    pub fn hybrid(&self) -> Result<HybridModeSet> {
        Self::require(&self.hybrid, "hybrid")?.build()
    }

    pub fn polarization(&self) -> Result<&PolarizationBlock> {
        Self::require(&self.polarization, "polarization")
    }

    pub fn frequencies(&self) -> Result<Vec<f64>> {
        Self::require(&self.f_grid, "f_grid")?.resolve("f_grid")
    }

    pub fn fields(&self) -> Result<Vec<f64>> {
        Self::require(&self.h_grid, "h_grid")?.resolve("h_grid")
    }
}
