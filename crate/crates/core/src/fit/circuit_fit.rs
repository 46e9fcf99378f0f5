use rayon::prelude::*;

use super::{extract_resonances, solve_slots, FitConfig, FitResult, FrozenEntry, Loss, ParamSpec, Slot, Spectrum};
use crate::circuit::{s21_circuit_sweep, CircuitParam, TwoModeCircuit};
use crate::error::{Error, Result};

/// One spectrum and the circuit that supplies its frozen values and starting point.
#[derive(Debug, Clone)]
pub struct CircuitDataset {
    pub spectrum: Spectrum,
    pub base: TwoModeCircuit,
}

#[derive(Debug, Clone)]
pub struct CircuitFit {
    pub circuit: TwoModeCircuit,
    pub result: FitResult,
}

#[derive(Debug, Clone)]
pub struct JointCircuitFit {
    pub circuits: Vec<TwoModeCircuit>,
    pub result: FitResult,
}

/// Fit one spectrum. Parameters missing from `cfg.params` (or marked fixed) keep the
/// value in `base`.
pub fn fit_circuit(spec: &Spectrum, base: &TwoModeCircuit, cfg: &FitConfig<CircuitParam>) -> Result<CircuitFit> {
    let data = [CircuitDataset {
        spectrum: spec.clone(),
        base: *base,
    }];
    let mut out = fit_circuit_joint(&data, &[], cfg)?;
    Ok(CircuitFit {
        circuit: out.circuits.remove(0),
        result: out.result,
    })
}

/// Which datasets a free slot writes to.
#[derive(Clone, Copy)]
struct Target {
    param: CircuitParam,
    dataset: Option<usize>,
}

/// Fit several spectra at once. Free parameters listed in `shared` take one value
/// for all datasets; every other free parameter gets one value per dataset, reported
/// as `name[k]`.
pub fn fit_circuit_joint(data: &[CircuitDataset], shared: &[CircuitParam], cfg: &FitConfig<CircuitParam>) -> Result<JointCircuitFit> {
    if data.is_empty() {
        return Err(Error::invalid("datasets", "nothing to fit"));
    }
    for d in data {
        cfg.validate(|p| d.base.get(p))?;
        if cfg.loss == Loss::Complex && d.spectrum.is_magnitude_only() {
            return Err(Error::PhaseRequired);
        }
        if let Some(z0) = d.spectrum.provenance.z0 {
            if z0 != d.base.line.z0() {
                return Err(Error::invalid(
                    "reference impedance",
                    format!("data declares {z0} Ω, the circuit uses {} Ω", d.base.line.z0()),
                ));
            }
        }
    }
    let single = data.len() == 1;
    let free = cfg.free_params();

    let mut starts: Vec<TwoModeCircuit> = Vec::with_capacity(data.len());
    for d in data {
        let mut c = d.base;
        for &p in &free {
            c = c.with(p, cfg.initial(p, d.base.get(p)))?;
        }
        starts.push(c);
    }
    if cfg.seed_from_dips {
        for (k, d) in data.iter().enumerate() {
            let seedable: Vec<CircuitParam> = [CircuitParam::F1, CircuitParam::F2]
                .into_iter()
                .filter(|p| free.contains(p) && (single || !shared.contains(p)))
                .collect();
            starts[k] = seed_resonances(&d.spectrum, &starts[k], &seedable, cfg)?;
        }
    }

    let mut slots = Vec::new();
    let mut targets = Vec::new();
    for &p in &free {
        let spec = cfg.params[&p];
        if single || shared.contains(&p) {
            slots.push(Slot::new(p.name().to_string(), p, &spec, starts[0].get(p)));
            targets.push(Target { param: p, dataset: None });
        } else {
            for (k, start) in starts.iter().enumerate() {
                slots.push(Slot::new(format!("{}[{k}]", p.name()), p, &spec, start.get(p)));
                targets.push(Target { param: p, dataset: Some(k) });
            }
        }
    }
    let mut frozen = Vec::new();
    for p in CircuitParam::ALL.into_iter().filter(|p| !free.contains(p)) {
        for (k, start) in starts.iter().enumerate() {
            frozen.push(FrozenEntry {
                name: if single { p.name().to_string() } else { format!("{}[{k}]", p.name()) },
                unit: p.unit(),
                value: start.get(p),
            });
        }
    }

    let targets_ref = &targets;
    let starts_ref = &starts;
    let apply = move |x: &[f64]| -> Result<Vec<TwoModeCircuit>> {
        starts_ref
            .iter()
            .enumerate()
            .map(|(k, start)| {
                let mut c = *start;
                for (t, &v) in targets_ref.iter().zip(x) {
                    if t.dataset.map_or(true, |d| d == k) {
                        c = c.with(t.param, v)?;
                    }
                }
                Ok(c)
            })
            .collect()
    };
    let observed: Vec<Vec<f64>> = data.iter().map(|d| d.spectrum.magnitudes()).collect();
    let loss = cfg.loss;
    let residuals = |x: &[f64]| -> Option<Vec<f64>> {
        let circuits = apply(x).ok()?;
        let parts: Vec<Vec<f64>> = circuits
            .par_iter()
            .zip(data.par_iter().zip(observed.par_iter()))
            .map(|(c, (d, mags))| {
                let model = s21_circuit_sweep(c, d.spectrum.f_grid()).ok()?;
                Some(match loss {
                    Loss::Magnitude => model.iter().zip(mags).map(|(m, y)| m.magnitude() - y).collect(),
                    Loss::Complex => model
                        .iter()
                        .zip(d.spectrum.s21())
                        .flat_map(|(m, y)| {
                            let e = m.value() - y.value();
                            [e.re, e.im]
                        })
                        .collect(),
                })
            })
            .collect::<Option<Vec<_>>>()?;
        Some(parts.concat())
    };
    let per_point = |r: &[f64]| match loss {
        Loss::Magnitude => r.to_vec(),
        Loss::Complex => r.chunks(2).map(|p| p[0].hypot(p[1])).collect(),
    };
    let (x, result) = solve_slots(&slots, frozen, residuals, per_point, &cfg.tolerances, cfg.max_iterations)?;
    Ok(JointCircuitFit {
        circuits: apply(&x)?,
        result,
    })
}

/// Move free resonance frequencies onto the detected dips, keeping their order:
/// among all order-preserving matchings of modes to dips, the one with the smallest
/// total frequency shift wins. Seeds outside a parameter's bounds are skipped.
fn seed_resonances(
    spec: &Spectrum,
    start: &TwoModeCircuit,
    params: &[CircuitParam],
    cfg: &FitConfig<CircuitParam>,
) -> Result<TwoModeCircuit> {
    if params.is_empty() || spec.len() < super::MIN_POINTS {
        return Ok(*start);
    }
    let dips: Vec<f64> = extract_resonances(spec, cfg.prominence)?
        .iter()
        .map(|r| r.frequency.hz())
        .collect();
    let mut modes: Vec<(CircuitParam, f64)> = params.iter().map(|&p| (p, start.get(p))).collect();
    modes.sort_by(|a, b| a.1.total_cmp(&b.1));
    let targets: Vec<f64> = modes.iter().map(|m| m.1).collect();
    let mut out = *start;
    for (k, dip) in ordered_matching(&targets, &dips).into_iter().enumerate() {
        let Some(j) = dip else { continue };
        let (p, _) = modes[k];
        let spec = cfg.params.get(&p).copied().unwrap_or_else(ParamSpec::free);
        let seed = dips[j];
        if spec.lower_bound() <= seed && seed <= spec.upper_bound() {
            out = out.with(p, seed)?;
        }
    }
    Ok(out)
}

/// Order-preserving partial matching between sorted `targets` and sorted `points`
/// that pairs as many as possible with the smallest summed distance.
fn ordered_matching(targets: &[f64], points: &[f64]) -> Vec<Option<usize>> {
    let (n, m) = (targets.len(), points.len());
    let pairs = n.min(m);
    // cost[i][j][c]: best cost using targets[..i], points[..j] with c pairs
    let inf = f64::INFINITY;
    let mut cost = vec![vec![vec![inf; pairs + 1]; m + 1]; n + 1];
    for row in cost.iter_mut() {
        for cell in row.iter_mut() {
            cell[0] = 0.0;
        }
    }
    for i in 1..=n {
        for j in 1..=m {
            for c in 1..=pairs {
                let skip = cost[i - 1][j][c].min(cost[i][j - 1][c]);
                let take = cost[i - 1][j - 1][c - 1] + (targets[i - 1] - points[j - 1]).abs();
                cost[i][j][c] = skip.min(take);
            }
        }
    }
    let mut out = vec![None; n];
    let (mut i, mut j, mut c) = (n, m, pairs);
    while c > 0 && i > 0 && j > 0 {
        let take = cost[i - 1][j - 1][c - 1] + (targets[i - 1] - points[j - 1]).abs();
        if cost[i][j][c] == take {
            out[i - 1] = Some(j - 1);
            i -= 1;
            j -= 1;
            c -= 1;
        } else if cost[i][j][c] == cost[i - 1][j][c] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    out
}
