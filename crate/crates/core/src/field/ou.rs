//! Exact Ornstein–Uhlenbeck dynamics of the Eulerian field,
//! `dV = AV dt + Q^{1/2} dW` with `Q̂(k) = γ(k) E(k)`.
//!
//! Each conjugate pair evolves independently:
//! `v̂ ← e^{-γ dt} v̂ + η`, `η` circular complex Gaussian with second-moment
//! matrix `(1 − e^{-2γ dt}) E(k)`. The transition is the continuous-time
//! kernel, so lag-h covariances are `e^{-γ h} E(k)` for any step partition.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::FourierField;
use crate::error::{invalid, Result};
use crate::spectrum::SpectrumModel;

/// Eulerian field together with its clock (seconds).
#[derive(Clone, Debug, PartialEq)]
pub struct OUState {
    pub field: FourierField,
    pub time: f64,
}

impl OUState {
    pub fn new(field: FourierField) -> Self {
        Self { field, time: 0.0 }
    }
}

/// Writes `scale_i · E(k_i)^{1/2} w` into each representative, with `w` a
/// vector of standard circular complex normals (`E|w_j|² = 1`,
/// `E[w_j²] = 0`).
fn fill_circular<R, S>(field: &mut FourierField, rng: &mut R, mut scale: S, accumulate: bool)
where
    R: Rng + ?Sized,
    S: FnMut(usize) -> f64,
{
    let model = Arc::clone(field.model());
    let d = model.dimension();
    let mut w = vec![Complex64::new(0.0, 0.0); d];
    for &i in model.representatives() {
        for wj in w.iter_mut() {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            *wj = Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2;
        }
        let s = scale(i);
        let root = model.energy_sqrt(i);
        let slot = field.rep_mut(i);
        for r in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..d {
                acc += root[r * d + c] * w[c];
            }
            if accumulate {
                slot[r] += acc * s;
            } else {
                slot[r] = acc * s;
            }
        }
    }
    field.mirror();
}

/// Draw from the invariant law: one circular Gaussian vector with second
/// moment `E(k)` per conjugate pair, mirrored into `-k`.
pub fn sample_stationary<R: Rng + ?Sized>(model: &Arc<SpectrumModel>, rng: &mut R) -> FourierField {
    let mut field = FourierField::zeros(model);
    fill_circular(&mut field, rng, |_| 1.0, false);
    field
}

/// The noise increment of an exact step of length `dt`.
pub fn ou_noise<R: Rng + ?Sized>(model: &Arc<SpectrumModel>, dt: f64, rng: &mut R) -> Result<FourierField> {
    check_dt(dt)?;
    let mut field = FourierField::zeros(model);
    fill_circular(
        &mut field,
        rng,
        |i| noise_scale(model.mode(i).gamma, dt),
        false,
    );
    Ok(field)
}

pub(crate) fn noise_scale(gamma: f64, dt: f64) -> f64 {
    // 1 − e^{-2γdt}
    (-(-2.0 * gamma * dt).exp_m1()).sqrt()
}

pub(crate) fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(invalid("dt", "must be positive and finite"))
    }
}

/// One exact OU transition of length `dt`.
pub fn ou_exact_step<R: Rng + ?Sized>(state: &OUState, dt: f64, rng: &mut R) -> Result<OUState> {
    check_dt(dt)?;
    let model = Arc::clone(state.field.model());
    let mut field = state.field.clone();
    for &i in model.representatives() {
        let decay = (-model.mode(i).gamma * dt).exp();
        for z in field.rep_mut(i) {
            *z *= decay;
        }
    }
    fill_circular(
        &mut field,
        rng,
        |i| noise_scale(model.mode(i).gamma, dt),
        true,
    );
    field.ensure_finite("OU step")?;
    Ok(OUState {
        field,
        time: state.time + dt,
    })
}
