//! Nonlinear mode dynamics: the deterministic flow
//! `dY/dt = AY + B(Y, Y)`, the Galerkin scheme for the observation SPDE
//! `dZ = [AZ + B(Z, Z)] dt + Q^{1/2} dW`, and the tangent flow
//! `dU/dt = AU + B(Z, U) + B(U, Z)`.
//!
//! In Fourier space `B(Y, Y)` only rotates the phase of each mode:
//! `ŷ'(k) = (−γ(k) + i u·k) ŷ(k)` with `u = Y(0)`. The Runge–Kutta steps below
//! factor out the linear decay `e^{-γ(k)t}` exactly and apply the classical
//! four-stage scheme to the remaining rotation, so per-mode moduli decay at
//! exactly `γ(k)` up to the rotation's truncation error.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use super::ou::{check_dt, ou_noise};
use super::FourierField;
use crate::error::{Error, Result};
use crate::spectrum::SpectrumModel;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn origin_value(model: &SpectrumModel, coeffs: &[Complex64], weights: &[f64]) -> Vec<f64> {
    // coeffs/weights are indexed by representative slot
    let d = model.dimension();
    let mut u = vec![0.0; d];
    for (slot, w) in weights.iter().enumerate() {
        for (c, uc) in u.iter_mut().enumerate() {
            *uc += 2.0 * w * coeffs[slot * d + c].re;
        }
    }
    u
}

fn gather_reps(f: &FourierField) -> Vec<Complex64> {
    let reps = f.model().representatives();
    let mut out = Vec::with_capacity(reps.len() * f.dimension());
    for &i in reps {
        out.extend_from_slice(f.coeff(i));
    }
    out
}

fn scatter_reps(model: &Arc<SpectrumModel>, values: &[Complex64]) -> FourierField {
    let d = model.dimension();
    let mut out = FourierField::zeros(model);
    for (slot, &i) in model.representatives().iter().enumerate() {
        out.rep_mut(i).copy_from_slice(&values[slot * d..(slot + 1) * d]);
    }
    out.mirror();
    out
}

fn finite_or_fail(out: FourierField, what: &str) -> Result<FourierField> {
    out.ensure_finite(what)?;
    Ok(out)
}

/// One integrating-factor RK4 step of `ŷ' = (−γ + i Y(0)·k) ŷ`.
pub fn y_flow_step(f: &FourierField, dt: f64) -> Result<FourierField> {
    check_dt(dt)?;
    if !f.is_finite() {
        return Err(Error::NumericalFailure("non-finite input to y_flow_step".into()));
    }
    let model = Arc::clone(f.model());
    let d = model.dimension();
    let reps = model.representatives();
    let gammas: Vec<f64> = reps.iter().map(|&i| model.mode(i).gamma).collect();
    let kvecs: Vec<&crate::spectrum::Wavevector> = reps.iter().map(|&i| &model.mode(i).k).collect();

    // w = e^{γs} ŷ obeys w' = i (u(s)·k) w with u(s) = Σ e^{-γs} w evaluated at ξ = 0
    let w0 = gather_reps(f);
    let decay_at = |s: f64| -> Vec<f64> { gammas.iter().map(|g| (-g * s).exp()).collect() };
    let half = decay_at(0.5 * dt);
    let full = decay_at(dt);
    let ones = vec![1.0; gammas.len()];

    let rhs = |w: &[Complex64], weights: &[f64]| -> Vec<Complex64> {
        let u = origin_value(&model, w, weights);
        let mut out = vec![Complex64::new(0.0, 0.0); w.len()];
        for (slot, k) in kvecs.iter().enumerate() {
            let rot = I * k.dot(&u);
            for c in 0..d {
                out[slot * d + c] = rot * w[slot * d + c];
            }
        }
        out
    };
    let shifted = |base: &[Complex64], incr: &[Complex64], h: f64| -> Vec<Complex64> {
        base.iter().zip(incr).map(|(b, k)| b + k * h).collect()
    };

    let k1 = rhs(&w0, &ones);
    let k2 = rhs(&shifted(&w0, &k1, 0.5 * dt), &half);
    let k3 = rhs(&shifted(&w0, &k2, 0.5 * dt), &half);
    let k4 = rhs(&shifted(&w0, &k3, dt), &full);

    let mut next = Vec::with_capacity(w0.len());
    for (slot, &decay) in full.iter().enumerate() {
        for c in 0..d {
            let j = slot * d + c;
            let w = w0[j] + (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (dt / 6.0);
            next.push(w * decay);
        }
    }
    finite_or_fail(scatter_reps(&model, &next), "y_flow_step")
}

/// Deterministic substep of the Galerkin scheme: each mode multiplied by
/// `exp((−γ(k) + i u·k) dt)` with `u = f(0)` frozen at the start of the step.
pub fn galerkin_drift(f: &FourierField, dt: f64) -> Result<FourierField> {
    check_dt(dt)?;
    let model = Arc::clone(f.model());
    let u = f.value_at_origin();
    let mut out = f.clone();
    for &i in model.representatives() {
        let mode = model.mode(i);
        let factor = Complex64::from_polar((-mode.gamma * dt).exp(), mode.k.dot(&u) * dt);
        for z in out.rep_mut(i) {
            *z *= factor;
        }
    }
    out.mirror();
    finite_or_fail(out, "galerkin_drift")
}

/// One splitting step of the observation SPDE: exact phase-decay substep
/// followed by the exact OU noise increment.
pub fn z_galerkin_step<R: Rng + ?Sized>(f: &FourierField, dt: f64, rng: &mut R) -> Result<FourierField> {
    let drift = galerkin_drift(f, dt)?;
    let noise = ou_noise(f.model(), dt, rng)?;
    finite_or_fail(drift.add(&noise)?, "z_galerkin_step")
}

/// One integrating-factor RK4 step of the tangent equation
/// `Û' = (−γ + i z₀·k) Û + i (U(0)·k) Ẑ` with `Z` frozen over the step.
pub fn tangent_step(f: &FourierField, u_tan: &FourierField, dt: f64) -> Result<FourierField> {
    check_dt(dt)?;
    f.ensure_same_model(u_tan)?;
    if !f.is_finite() || !u_tan.is_finite() {
        return Err(Error::NumericalFailure("non-finite input to tangent_step".into()));
    }
    let model = Arc::clone(f.model());
    let d = model.dimension();
    let reps = model.representatives();
    let z0 = f.value_at_origin();
    let zhat = gather_reps(f);
    // λ(k) = −γ + i z₀·k; w = e^{-λs} Û
    let lambdas: Vec<Complex64> = reps
        .iter()
        .map(|&i| {
            let mode = model.mode(i);
            Complex64::new(-mode.gamma, mode.k.dot(&z0))
        })
        .collect();
    let kvecs: Vec<&crate::spectrum::Wavevector> = reps.iter().map(|&i| &model.mode(i).k).collect();
    let prop = |s: f64| -> Vec<Complex64> { lambdas.iter().map(|l| (l * s).exp()).collect() };
    let p_half = prop(0.5 * dt);
    let p_full = prop(dt);
    let ones = vec![Complex64::new(1.0, 0.0); lambdas.len()];

    let rhs = |w: &[Complex64], p: &[Complex64]| -> Vec<Complex64> {
        // U(s) = e^{λs} w, u = U(s)(0)
        let mut u = vec![0.0; d];
        for (slot, ps) in p.iter().enumerate() {
            for (c, uc) in u.iter_mut().enumerate() {
                *uc += 2.0 * (ps * w[slot * d + c]).re;
            }
        }
        let mut out = vec![Complex64::new(0.0, 0.0); w.len()];
        for (slot, k) in kvecs.iter().enumerate() {
            let forcing = I * k.dot(&u) / p[slot];
            for c in 0..d {
                out[slot * d + c] = forcing * zhat[slot * d + c];
            }
        }
        out
    };
    let shifted = |base: &[Complex64], incr: &[Complex64], h: f64| -> Vec<Complex64> {
        base.iter().zip(incr).map(|(b, k)| b + k * h).collect()
    };

    let w0 = gather_reps(u_tan);
    let k1 = rhs(&w0, &ones);
    let k2 = rhs(&shifted(&w0, &k1, 0.5 * dt), &p_half);
    let k3 = rhs(&shifted(&w0, &k2, 0.5 * dt), &p_half);
    let k4 = rhs(&shifted(&w0, &k3, dt), &p_full);

    let mut next = Vec::with_capacity(w0.len());
    for (slot, p) in p_full.iter().enumerate() {
        for c in 0..d {
            let j = slot * d + c;
            let w = w0[j] + (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (dt / 6.0);
            next.push(w * p);
        }
    }
    finite_or_fail(scatter_reps(&model, &next), "tangent_step")
}
