//! Checks of the simulated dynamics against their closed forms: stationary
//! covariance and lag correlations of the OU field, and per-mode decay of
//! the deterministic flow.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::flow::y_flow_step;
use super::ou::{noise_scale, sample_stationary};
use super::FourierField;
use crate::error::{invalid, Result};
use crate::rng;
use crate::spectrum::{SpectrumModel, Wavevector};

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceParams {
    /// Independent stationary-start paths.
    pub samples: usize,
    /// Modes checked, by decreasing `Tr E(k)`.
    pub top_modes: usize,
    pub lags: Vec<f64>,
    /// Grid spacing of each path; every lag must be a multiple of it.
    pub grid: f64,
    /// Grid points per path beyond the start.
    pub path_steps: usize,
}

impl Default for CovarianceParams {
    fn default() -> Self {
        Self {
            samples: 20_000,
            top_modes: 10,
            lags: vec![0.1, 0.5, 1.0],
            grid: 0.1,
            path_steps: 600,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LagDiagnostic {
    pub lag: f64,
    /// `Σ Re⟨v(t+h), v(t)⟩ / Σ |v(t)|²` over paths and times.
    pub estimate: f64,
    /// Batch standard error over paths.
    pub stderr: f64,
    pub expected: f64,
}

impl LagDiagnostic {
    pub fn relative_error(&self) -> f64 {
        (self.estimate - self.expected).abs() / self.expected
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeDiagnostic {
    pub k: Wavevector,
    pub gamma: f64,
    pub energy_trace: f64,
    /// `‖Ĉ − E(k)‖_F / ‖E(k)‖_F` for the equal-time covariance of the
    /// starting samples.
    pub covariance_error: f64,
    pub lags: Vec<LagDiagnostic>,
}

/// Equal-time covariance of the stationary sampler and lag correlations of
/// the exact OU transition for the most energetic modes.
///
/// Each path starts from an independent stationary draw of the whole field
/// and then advances the checked modes alone; the modes evolve
/// independently, so this is the marginal of the full dynamics. Lag
/// correlations pool all pairs `(t, t+h)` along every path.
pub fn covariance_diagnostics(
    model: &Arc<SpectrumModel>,
    params: &CovarianceParams,
    seed: u64,
) -> Result<Vec<ModeDiagnostic>> {
    if params.samples < 2 {
        return Err(invalid("ensemble", "need at least two samples"));
    }
    if !(params.grid > 0.0) {
        return Err(invalid("grid", "must be positive"));
    }
    let lag_steps = params
        .lags
        .iter()
        .map(|&h| {
            let s = (h / params.grid).round();
            if s < 1.0 || (s * params.grid - h).abs() > 1e-9 * h.max(1.0) {
                Err(invalid("lags", "must be positive multiples of the grid"))
            } else {
                Ok(s as usize)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if lag_steps.iter().any(|&s| s > params.path_steps) {
        return Err(invalid("lags", "longer than the path"));
    }
    let d = model.dimension();
    let mut order: Vec<usize> = (0..model.len()).collect();
    let trace = |i: usize| model.mode(i).energy.trace().re;
    order.sort_by(|&a, &b| trace(b).total_cmp(&trace(a)).then(a.cmp(&b)));
    order.retain(|&i| trace(i) > 0.0);
    order.truncate(params.top_modes);

    struct PathStats {
        outer: Vec<DMatrix<Complex64>>,
        // per mode, per lag: (Σ Re⟨v(t+h),v(t)⟩, Σ|v(t)|²)
        lag_sums: Vec<Vec<(f64, f64)>>,
    }

    let per_path: Vec<PathStats> = (0..params.samples)
        .into_par_iter()
        .map(|p| {
            let mut stream = rng::run_stream(seed, p as u64);
            let start = sample_stationary(model, &mut stream);
            let mut outer = Vec::with_capacity(order.len());
            let mut lag_sums = Vec::with_capacity(order.len());
            let mut w = vec![Complex64::new(0.0, 0.0); d];
            for &i in &order {
                let v0 = start.coeff(i);
                outer.push(DMatrix::from_fn(d, d, |r, c| v0[r] * v0[c].conj()));
                let mode = model.mode(i);
                let decay = (-mode.gamma * params.grid).exp();
                let scale = noise_scale(mode.gamma, params.grid);
                let root = model.energy_sqrt(i);
                let mut path = Vec::with_capacity((params.path_steps + 1) * d);
                path.extend_from_slice(v0);
                for s in 0..params.path_steps {
                    for wj in w.iter_mut() {
                        let a: f64 = stream.sample(StandardNormal);
                        let b: f64 = stream.sample(StandardNormal);
                        *wj = Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2;
                    }
                    for r in 0..d {
                        let mut acc = path[s * d + r] * decay;
                        for c in 0..d {
                            acc += root[r * d + c] * w[c] * scale;
                        }
                        path.push(acc);
                    }
                }
                let sums = lag_steps
                    .iter()
                    .map(|&l| {
                        let (mut num, mut den) = (0.0, 0.0);
                        for t in 0..=(params.path_steps - l) {
                            for r in 0..d {
                                let a = path[t * d + r];
                                num += (path[(t + l) * d + r] * a.conj()).re;
                                den += a.norm_sqr();
                            }
                        }
                        (num, den)
                    })
                    .collect();
                lag_sums.push(sums);
            }
            PathStats { outer, lag_sums }
        })
        .collect();

    let n = per_path.len() as f64;
    let mut out = Vec::with_capacity(order.len());
    for (slot, &i) in order.iter().enumerate() {
        let mode = model.mode(i);
        let mut cov = DMatrix::zeros(d, d);
        for p in &per_path {
            cov += &p.outer[slot];
        }
        cov.unscale_mut(n);
        let covariance_error = (&cov - &mode.energy).norm() / mode.energy.norm();
        let lags = params
            .lags
            .iter()
            .enumerate()
            .map(|(j, &h)| {
                let num: f64 = per_path.iter().map(|p| p.lag_sums[slot][j].0).sum();
                let den: f64 = per_path.iter().map(|p| p.lag_sums[slot][j].1).sum();
                let estimate = num / den;
                // ratio-estimator standard error from per-path residuals
                let mean_den = den / n;
                let resid: f64 = per_path
                    .iter()
                    .map(|p| {
                        let (a, b) = p.lag_sums[slot][j];
                        ((a - estimate * b) / mean_den).powi(2)
                    })
                    .sum();
                LagDiagnostic {
                    lag: h,
                    estimate,
                    stderr: (resid / (n * (n - 1.0))).sqrt(),
                    expected: (-mode.gamma * h).exp(),
                }
            })
            .collect();
        out.push(ModeDiagnostic {
            k: mode.k.clone(),
            gamma: mode.gamma,
            energy_trace: mode.energy.trace().re,
            covariance_error,
            lags,
        });
    }
    Ok(out)
}

/// Worst deviations of the deterministic flow from pure exponential decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayReport {
    pub starts: usize,
    pub steps: usize,
    /// `max |(|ŷ(k,t)| − e^{−γ(k)t}|ŷ(k,0)|) / (e^{−γ(k)t}|ŷ(k,0)|)|` over
    /// modes, components and steps where the reference is a normal float.
    pub max_relative_error: f64,
    /// `max (‖Y(t)‖ − e^{−γ* t}‖Y(0)‖)` over steps; nonpositive when the
    /// norm bound holds exactly.
    pub max_norm_excess: f64,
}

/// Runs `Y` from `starts` random initial fields of norm `radius`
/// (stationary directions) for `horizon` at step `dt`.
pub fn attractor_decay(
    model: &Arc<SpectrumModel>,
    starts: usize,
    radius: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<DecayReport> {
    if starts == 0 {
        return Err(invalid("ensemble", "must be at least 1"));
    }
    if !(dt > 0.0 && horizon >= dt) {
        return Err(invalid("dt", "must lie in (0, T]"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid("R", "must be positive"));
    }
    let steps = (horizon / dt).round() as usize;
    let gamma_star = model.gamma_star();
    let runs: Vec<(f64, f64)> = (0..starts)
        .into_par_iter()
        .map(|s| -> Result<(f64, f64)> {
            let mut stream = rng::run_stream(seed, s as u64);
            let f = sample_stationary(model, &mut stream);
            let y0: FourierField = f.scaled(radius / f.norm());
            let norm0 = y0.norm();
            let mut y = y0.clone();
            let (mut rel, mut excess) = (0.0_f64, f64::NEG_INFINITY);
            for step in 1..=steps {
                y = y_flow_step(&y, dt)?;
                let t = step as f64 * dt;
                for &i in model.representatives() {
                    let decay = (-model.mode(i).gamma * t).exp();
                    for (a, b) in y.coeff(i).iter().zip(y0.coeff(i)) {
                        let want = decay * b.norm();
                        if want >= f64::MIN_POSITIVE {
                            rel = rel.max(((a.norm() - want) / want).abs());
                        }
                    }
                }
                excess = excess.max(y.norm() - (-gamma_star * t).exp() * norm0);
            }
            Ok((rel, excess))
        })
        .collect::<Result<_>>()?;
    Ok(DecayReport {
        starts,
        steps,
        max_relative_error: runs.iter().map(|r| r.0).fold(0.0, f64::max),
        max_norm_excess: runs.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max),
    })
}
