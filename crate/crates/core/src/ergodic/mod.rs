//! Empirical diagnostics for the long-time behaviour of the observation
//! process: time averages, occupation of balls, moment profiles,
//! stochastic stability, coupling probes of the e-property and
//! law-of-large-numbers variance decay.
//!
//! `liminf` quantities are approximated by the minimum of sliding-window
//! averages over the second half of a run.

mod observable;
pub mod stats;

pub use observable::{tanh_square_lipschitz, Observable};

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::field::{galerkin_drift, ou_exact_step, ou_noise, sample_stationary, z_galerkin_step, FourierField, OUState};
use crate::rng;
use crate::spectrum::SpectrumModel;
use crate::tracer::{run_lagrangian_observed, LagrangianParams, TrajectoryRecord};

/// Estimate with its Monte-Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Trapezoid average `(1/(t_n − t_0)) ∫ v dt`; the single value for a
/// one-point series.
pub fn trapezoid_average(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.is_empty() || times.len() != values.len() {
        return Err(Error::EmptyRecord);
    }
    if times.len() == 1 {
        return Ok(values[0]);
    }
    let mut acc = 0.0;
    for w in 1..times.len() {
        acc += 0.5 * (times[w] - times[w - 1]) * (values[w] + values[w - 1]);
    }
    Ok(acc / (times[times.len() - 1] - times[0]))
}

/// Trapezoid time average of `psi` along the recorded observation process.
pub fn time_average(record: &TrajectoryRecord, psi: &Observable) -> Result<f64> {
    if record.is_empty() {
        return Err(Error::EmptyRecord);
    }
    psi.validate(record.dimension())?;
    let values = (0..record.len())
        .map(|i| psi.evaluate_record(record, i))
        .collect::<Result<Vec<_>>>()?;
    trapezoid_average(&record.times, &values)
}

/// Fraction of record points inside a ball plus its liminf proxy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Occupation {
    pub fraction: f64,
    /// Minimum of sliding-window fractions over the second half of the
    /// record, windows a quarter of the record long.
    pub window_min: f64,
}

/// Occupation statistics of a sequence of distances to the ball centre.
pub fn occupation_from_distances(distances: &[f64], delta: f64) -> Result<Occupation> {
    if !(delta > 0.0) {
        return Err(invalid("delta", "must be positive"));
    }
    if distances.is_empty() {
        return Err(Error::EmptyRecord);
    }
    let inside: Vec<f64> = distances.iter().map(|&r| if r < delta { 1.0 } else { 0.0 }).collect();
    let n = inside.len();
    let fraction = inside.iter().sum::<f64>() / n as f64;
    let width = (n / 4).max(1);
    let start = n / 2;
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in inside.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let mut window_min = f64::INFINITY;
    let mut s = start;
    while s + width <= n {
        window_min = window_min.min((prefix[s + width] - prefix[s]) / width as f64);
        s += 1;
    }
    if !window_min.is_finite() {
        window_min = fraction;
    }
    Ok(Occupation { fraction, window_min })
}

/// Occupation of the ball `B(z, δ)` in `X^m` by the recorded `Z(t)`.
/// Records without stored fields are accepted when `z` is the zero field.
pub fn occupation_fraction(record: &TrajectoryRecord, z: &FourierField, delta: f64) -> Result<Occupation> {
    if record.is_empty() {
        return Err(Error::EmptyRecord);
    }
    let distances = match &record.fields {
        Some(fields) => fields.iter().map(|f| f.distance(z)).collect::<Result<Vec<_>>>()?,
        None if z.norm() == 0.0 => record.field_norm.clone(),
        None => return Err(invalid("record", "fields were not recorded")),
    };
    occupation_from_distances(&distances, delta)
}

/// Starting point of a moment scan.
#[derive(Clone, Debug, PartialEq)]
pub enum MomentStart {
    /// Deterministic start of norm `R` along a fixed random direction.
    Radius(f64),
    /// Independent draws from the invariant law.
    Stationary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentScanParams {
    pub start: MomentStart,
    pub order: u32,
    pub horizon: f64,
    pub ensemble: usize,
    /// Number of grid intervals on `[0, T]`.
    pub grid: usize,
}

/// Ensemble profile of `E‖Z(t)‖^{2n}_{X^m}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentScan {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub time_max: f64,
    /// Average of the profile over `t ≥ T/2`.
    pub settled: Estimate,
    /// Closed-form stationary moment.
    pub stationary: f64,
}

/// Unit-norm direction drawn from the invariant law of `model`.
fn unit_direction(model: &Arc<SpectrumModel>, seed: u64) -> FourierField {
    let mut stream = rng::stream(seed);
    let f = sample_stationary(model, &mut stream);
    let n = f.norm();
    if n > 0.0 {
        f.scaled(1.0 / n)
    } else {
        f
    }
}

/// `‖Z(t)‖` has the law of the OU norm from the same start, so the scan
/// runs the exact OU transition on the grid.
pub fn moment_scan(model: &Arc<SpectrumModel>, params: &MomentScanParams, seed: u64) -> Result<MomentScan> {
    if params.order < 1 {
        return Err(invalid("n", "must be at least 1"));
    }
    if params.ensemble < 2 {
        return Err(invalid("ensemble", "must be at least 2"));
    }
    if !(params.horizon > 0.0) || params.grid == 0 {
        return Err(invalid("T", "must be positive with a nonempty grid"));
    }
    let start = match params.start {
        MomentStart::Radius(r) if r >= 0.0 && r.is_finite() => Some(unit_direction(model, seed).scaled(r)),
        MomentStart::Radius(_) => return Err(invalid("R", "must be nonnegative")),
        MomentStart::Stationary => None,
    };
    let dt = params.horizon / params.grid as f64;
    let power = params.order as i32;
    let paths: Vec<Vec<f64>> = (0..params.ensemble)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut stream = rng::run_stream(seed, i as u64);
            let field = match &start {
                Some(f) => f.clone(),
                None => sample_stationary(model, &mut stream),
            };
            let mut state = OUState::new(field);
            let mut out = Vec::with_capacity(params.grid + 1);
            out.push(state.field.norm().powi(2).powi(power));
            for _ in 0..params.grid {
                state = ou_exact_step(&state, dt, &mut stream)?;
                out.push(state.field.norm().powi(2).powi(power));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let times: Vec<f64> = (0..=params.grid).map(|j| j as f64 * dt).collect();
    let mut mean = Vec::with_capacity(times.len());
    let mut stderr = Vec::with_capacity(times.len());
    let mut column = vec![0.0; paths.len()];
    for j in 0..times.len() {
        for (c, p) in column.iter_mut().zip(&paths) {
            *c = p[j];
        }
        mean.push(stats::mean(&column));
        stderr.push(stats::stderr(&column));
    }
    let late = params.grid / 2;
    let late_means: Vec<f64> = paths.iter().map(|p| stats::mean(&p[late..])).collect();
    Ok(MomentScan {
        time_max: mean.iter().copied().fold(0.0, f64::max),
        settled: Estimate {
            value: stats::mean(&late_means),
            stderr: stats::stderr(&late_means),
        },
        stationary: model.stationary_norm_moment(params.order),
        times,
        mean,
        stderr,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityParams {
    pub eps: f64,
    pub horizon: f64,
    pub dt: f64,
    pub ensemble: usize,
}

/// Fraction of Galerkin runs `Z^x` ending within `eps` of the noiseless
/// trajectory `Y^x` at time `T`. `Y^x` is advanced with the same drift
/// step as `Z^x`, so the two coincide when the noise vanishes.
pub fn stability_probe(
    model: &Arc<SpectrumModel>,
    x: &FourierField,
    params: &StabilityParams,
    seed: u64,
) -> Result<Estimate> {
    if !(params.eps > 0.0) {
        return Err(invalid("eps", "must be positive"));
    }
    if !(params.dt > 0.0 && params.horizon >= params.dt) {
        return Err(invalid("dt", "must lie in (0, T]"));
    }
    if params.ensemble == 0 {
        return Err(invalid("ensemble", "must be at least 1"));
    }
    if !Arc::ptr_eq(x.model(), model) {
        return Err(Error::ModelMismatch);
    }
    let steps = ((params.horizon / params.dt).round() as usize).max(1);
    let dt = params.horizon / steps as f64;
    let mut y = x.clone();
    for _ in 0..steps {
        y = galerkin_drift(&y, dt)?;
    }
    let hits: Vec<f64> = (0..params.ensemble)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut stream = rng::run_stream(seed, i as u64);
            let mut z = x.clone();
            for _ in 0..steps {
                z = z_galerkin_step(&z, dt, &mut stream)?;
            }
            Ok(if z.distance(&y)? < params.eps { 1.0 } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    let p = stats::mean(&hits);
    Ok(Estimate {
        value: p,
        stderr: (p * (1.0 - p) / hits.len() as f64).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EPropertyParams {
    /// Offsets `h ≥ 0`, sorted decreasing.
    pub offsets: Vec<f64>,
    pub psi: Observable,
    pub horizon: f64,
    pub dt: f64,
    pub record_every: usize,
    pub ensemble: usize,
}

/// `D(h) = max_t |E ψ(Z^x(t)) − E ψ(Z^{x+hv}(t))|` under shared noise.
#[derive(Clone, Debug, PartialEq)]
pub struct EPropertyReport {
    pub offsets: Vec<f64>,
    pub d: Vec<f64>,
    /// Standard error of the paired difference at the maximizing time.
    pub sigma: Vec<f64>,
}

impl EPropertyReport {
    /// Checks `D(h_{j+1}) ≤ D(h_j) + k·σ` for consecutive offsets, with the
    /// two standard errors combined.
    pub fn decreasing_within(&self, k: f64) -> bool {
        self.d.windows(2).zip(self.sigma.windows(2)).all(|(d, s)| {
            let sigma = (s[0] * s[0] + s[1] * s[1]).sqrt();
            d[1] <= d[0] + k * sigma
        })
    }
}

/// Coupling probe of the e-property. Every ensemble member owns one
/// stream; at each step a single noise increment drives the base run and
/// all perturbed runs `x + h·v`, `v` a fixed unit direction.
pub fn e_property_probe(
    model: &Arc<SpectrumModel>,
    x: &FourierField,
    params: &EPropertyParams,
    seed: u64,
) -> Result<EPropertyReport> {
    if params.offsets.iter().any(|h| !(*h >= 0.0 && h.is_finite())) {
        return Err(invalid("offsets", "must be nonnegative"));
    }
    if params.offsets.windows(2).any(|w| w[1] > w[0]) {
        return Err(invalid("offsets", "must be sorted decreasing"));
    }
    if !(params.dt > 0.0 && params.horizon >= params.dt) || params.record_every == 0 {
        return Err(invalid("dt", "must lie in (0, T] with record_every ≥ 1"));
    }
    if params.ensemble < 2 {
        return Err(invalid("ensemble", "must be at least 2"));
    }
    if !Arc::ptr_eq(x.model(), model) {
        return Err(Error::ModelMismatch);
    }
    params.psi.validate(model.dimension())?;
    let direction = unit_direction(model, seed);
    let starts = params
        .offsets
        .iter()
        .map(|&h| x.axpy(h, &direction))
        .collect::<Result<Vec<_>>>()?;
    let steps = ((params.horizon / params.dt).round() as usize).max(1);
    let dt = params.horizon / steps as f64;

    // diffs[i][j][r]: ψ(Z^x) − ψ(Z^{x+h_j v}) at record r for member i
    let diffs: Vec<Vec<Vec<f64>>> = (0..params.ensemble)
        .into_par_iter()
        .map(|i| -> Result<Vec<Vec<f64>>> {
            let mut stream = rng::run_stream(seed, i as u64);
            let mut base = x.clone();
            let mut pert = starts.clone();
            let mut out = vec![Vec::new(); pert.len()];
            let mut record = |base: &FourierField, pert: &[FourierField]| -> Result<()> {
                let b = params.psi.evaluate(base)?;
                for (slot, p) in out.iter_mut().zip(pert) {
                    slot.push(b - params.psi.evaluate(p)?);
                }
                Ok(())
            };
            record(&base, &pert)?;
            for step in 1..=steps {
                let noise = ou_noise(model, dt, &mut stream)?;
                base = galerkin_drift(&base, dt)?.add(&noise)?;
                for p in pert.iter_mut() {
                    *p = galerkin_drift(p, dt)?.add(&noise)?;
                }
                if step % params.record_every == 0 || step == steps {
                    record(&base, &pert)?;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut d = Vec::with_capacity(params.offsets.len());
    let mut sigma = Vec::with_capacity(params.offsets.len());
    let records = diffs[0][0].len();
    let mut column = vec![0.0; diffs.len()];
    for j in 0..params.offsets.len() {
        let mut best = (0.0, 0.0);
        for r in 0..records {
            for (c, member) in column.iter_mut().zip(&diffs) {
                *c = member[j][r];
            }
            let m = stats::mean(&column).abs();
            if m > best.0 || r == 0 {
                best = (m, stats::stderr(&column));
            }
        }
        d.push(best.0);
        sigma.push(best.1);
    }
    Ok(EPropertyReport {
        offsets: params.offsets.clone(),
        d,
        sigma,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlnParams {
    /// Increasing horizons; all runs use the longest and read the shorter
    /// ones off the same path.
    pub horizons: Vec<f64>,
    pub dt: f64,
    pub record_every: usize,
    pub ensemble: usize,
}

/// Ensemble mean and variance of `(1/T) ∫₀ᵀ ψ(Z(s)) ds` per horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct LlnReport {
    pub horizons: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Standard error of each variance, `var·sqrt(2/(M−1))`.
    pub variance_stderr: Vec<f64>,
    /// `variances[j+1] / variances[j]`; NaN where the denominator is zero.
    pub ratios: Vec<f64>,
}

pub fn lln_test(model: &Arc<SpectrumModel>, psi: &Observable, params: &LlnParams, seed: u64) -> Result<LlnReport> {
    if params.horizons.len() < 2 {
        return Err(invalid("horizons", "need at least two"));
    }
    if params.horizons.windows(2).any(|w| !(w[1] > w[0])) || !(params.horizons[0] > 0.0) {
        return Err(invalid("horizons", "must be positive and increasing"));
    }
    if params.ensemble < 2 {
        return Err(invalid("ensemble", "must be at least 2"));
    }
    psi.validate(model.dimension())?;
    let horizon = *params.horizons.last().unwrap_or(&0.0);
    let mut lag = LagrangianParams::new(horizon, params.dt);
    lag.record_every = params.record_every;

    let averages: Vec<Vec<f64>> = (0..params.ensemble)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut values = Vec::new();
            let mut times = Vec::new();
            let mut failure = None;
            run_lagrangian_observed(model, &lag, rng::derive_seed(seed, i as u64), |tracer, ou| {
                match psi.evaluate_lagrangian(tracer, ou) {
                    Ok(v) => {
                        values.push(v);
                        times.push(tracer.time);
                    }
                    Err(e) => failure = Some(e),
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            params
                .horizons
                .iter()
                .map(|&t| {
                    let end = times.partition_point(|&s| s <= t * (1.0 + 1e-12));
                    trapezoid_average(&times[..end], &values[..end])
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut means = Vec::new();
    let mut variances = Vec::new();
    let mut variance_stderr = Vec::new();
    for j in 0..params.horizons.len() {
        let col: Vec<f64> = averages.iter().map(|a| a[j]).collect();
        let v = stats::variance(&col);
        means.push(stats::mean(&col));
        variances.push(v);
        variance_stderr.push(v * (2.0 / (col.len() - 1) as f64).sqrt());
    }
    let ratios = variances
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { f64::NAN })
        .collect();
    Ok(LlnReport {
        horizons: params.horizons.clone(),
        means,
        variances,
        variance_stderr,
        ratios,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportParams {
    pub horizon: f64,
    pub dt: f64,
    pub record_every: usize,
    pub ensemble: usize,
    pub psi: Observable,
    /// Ball centre, the zero field when `None`.
    pub center: Option<FourierField>,
    pub delta: f64,
}

/// Ensemble summary of `Q^T` quantities along Lagrangian runs.
#[derive(Clone, Debug, PartialEq)]
pub struct ErgodicReport {
    pub horizon: f64,
    /// Ensemble mean of the time average of ψ.
    pub q_t_average: Estimate,
    pub occupation_fraction: Estimate,
    /// Smallest liminf proxy across runs.
    pub window_min: f64,
    /// Per-run time averages of ψ.
    pub run_averages: Vec<f64>,
    pub runs: usize,
}

pub fn ergodic_report(model: &Arc<SpectrumModel>, params: &ReportParams, seed: u64) -> Result<ErgodicReport> {
    if params.ensemble == 0 {
        return Err(invalid("ensemble", "must be at least 1"));
    }
    if !(params.delta > 0.0) {
        return Err(invalid("delta", "must be positive"));
    }
    params.psi.validate(model.dimension())?;
    let center = params.center.clone().unwrap_or_else(|| FourierField::zeros(model));
    if !Arc::ptr_eq(center.model(), model) {
        return Err(Error::ModelMismatch);
    }
    let centered = center.norm() > 0.0;
    let mut lag = LagrangianParams::new(params.horizon, params.dt);
    lag.record_every = params.record_every;

    let runs: Vec<(f64, Occupation)> = (0..params.ensemble)
        .into_par_iter()
        .map(|i| -> Result<(f64, Occupation)> {
            let mut values = Vec::new();
            let mut times = Vec::new();
            let mut distances = Vec::new();
            let mut failure = None;
            run_lagrangian_observed(model, &lag, rng::derive_seed(seed, i as u64), |tracer, ou| {
                let dist = if centered {
                    ou.field.shift(&tracer.displacement).and_then(|z| z.distance(&center))
                } else {
                    Ok(ou.field.norm())
                };
                match (params.psi.evaluate_lagrangian(tracer, ou), dist) {
                    (Ok(v), Ok(r)) => {
                        values.push(v);
                        times.push(tracer.time);
                        distances.push(r);
                    }
                    (Err(e), _) | (_, Err(e)) => failure = Some(e),
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            Ok((
                trapezoid_average(&times, &values)?,
                occupation_from_distances(&distances, params.delta)?,
            ))
        })
        .collect::<Result<_>>()?;

    let averages: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let fractions: Vec<f64> = runs.iter().map(|r| r.1.fraction).collect();
    Ok(ErgodicReport {
        horizon: params.horizon,
        q_t_average: Estimate {
            value: stats::mean(&averages),
            stderr: stats::stderr(&averages),
        },
        occupation_fraction: Estimate {
            value: stats::mean(&fractions),
            stderr: stats::stderr(&fractions),
        },
        window_min: runs.iter().map(|r| r.1.window_min).fold(f64::INFINITY, f64::min),
        run_averages: averages,
        runs: runs.len(),
    })
}
