//! Fourier-space representation of real vector fields on the torus `[0, 2π)^d`.
//!
//! A [`FourierField`] stores one complex d-vector per mode of its
//! [`SpectrumModel`]. Every constructor and operation writes the
//! positive-half representative of each conjugate pair and mirrors the
//! conjugate into `-k`, so point evaluations are real.

mod diagnostics;
mod flow;
mod ou;

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::spectrum::{SpectrumModel, Wavevector};

pub use diagnostics::{
    attractor_decay, covariance_diagnostics, CovarianceParams, DecayReport, LagDiagnostic, ModeDiagnostic,
};
pub use flow::{galerkin_drift, tangent_step, y_flow_step, z_galerkin_step};
pub use ou::{ou_exact_step, ou_noise, sample_stationary, OUState};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Complex Fourier coefficients of a real d-vector field.
#[derive(Clone, Debug)]
pub struct FourierField {
    model: Arc<SpectrumModel>,
    coeffs: Vec<Complex64>,
}

impl PartialEq for FourierField {
    fn eq(&self, other: &Self) -> bool {
        self.same_model(other) && self.coeffs == other.coeffs
    }
}

impl FourierField {
    pub fn zeros(model: &Arc<SpectrumModel>) -> Self {
        Self {
            model: Arc::clone(model),
            coeffs: vec![ZERO; model.len() * model.dimension()],
        }
    }

    /// Builds a field from the positive-half representatives; `value` is
    /// called once per conjugate pair and must return a d-vector.
    pub fn from_representatives<F>(model: &Arc<SpectrumModel>, mut value: F) -> Result<Self>
    where
        F: FnMut(usize, &Wavevector) -> Vec<Complex64>,
    {
        let mut field = Self::zeros(model);
        for &i in model.representatives() {
            let v = value(i, &model.mode(i).k);
            if v.len() != model.dimension() {
                return Err(invalid("value", "coefficient length differs from the dimension"));
            }
            field.set_rep(i, &v);
        }
        Ok(field)
    }

    /// Sets the coefficient at `k` and its conjugate at `-k`.
    pub fn set_pair(&mut self, k: &Wavevector, value: &[Complex64]) -> Result<()> {
        let i = self
            .model
            .index_of(k)
            .ok_or_else(|| Error::UnknownWavevector(k.components().to_vec()))?;
        if value.len() != self.dimension() {
            return Err(invalid("value", "coefficient length differs from the dimension"));
        }
        if k.is_positive_half() {
            self.set_rep(i, value);
        } else {
            let conj: Vec<Complex64> = value.iter().map(|z| z.conj()).collect();
            self.set_rep(self.model.conjugate_of(i), &conj);
        }
        Ok(())
    }

    pub(crate) fn set_rep(&mut self, i: usize, value: &[Complex64]) {
        let d = self.dimension();
        let j = self.model.conjugate_of(i);
        for (c, v) in value.iter().enumerate().take(d) {
            self.coeffs[i * d + c] = *v;
            self.coeffs[j * d + c] = v.conj();
        }
    }

    pub(crate) fn rep_mut(&mut self, i: usize) -> &mut [Complex64] {
        let d = self.dimension();
        &mut self.coeffs[i * d..(i + 1) * d]
    }

    /// Rewrites every `-k` slot from its representative.
    pub(crate) fn mirror(&mut self) {
        let d = self.dimension();
        for &i in self.model.representatives() {
            let j = self.model.conjugate_of(i);
            for c in 0..d {
                self.coeffs[j * d + c] = self.coeffs[i * d + c].conj();
            }
        }
    }

    pub fn model(&self) -> &Arc<SpectrumModel> {
        &self.model
    }

    pub fn dimension(&self) -> usize {
        self.model.dimension()
    }

    pub fn same_model(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.model, &other.model)
    }

    pub(crate) fn ensure_same_model(&self, other: &Self) -> Result<()> {
        if self.same_model(other) {
            Ok(())
        } else {
            Err(Error::ModelMismatch)
        }
    }

    /// Coefficient vector of mode `i` (model enumeration order).
    pub fn coeff(&self, i: usize) -> &[Complex64] {
        let d = self.dimension();
        &self.coeffs[i * d..(i + 1) * d]
    }

    pub fn coeff_at(&self, k: &Wavevector) -> Result<&[Complex64]> {
        let i = self
            .model
            .index_of(k)
            .ok_or_else(|| Error::UnknownWavevector(k.components().to_vec()))?;
        Ok(self.coeff(i))
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// `max |x̂(-k) - conj(x̂(k))|`.
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.dimension();
        (0..self.model.len())
            .flat_map(|i| {
                let j = self.model.conjugate_of(i);
                (0..d).map(move |c| (i, j, c))
            })
            .map(|(i, j, c)| (self.coeffs[j * d + c] - self.coeffs[i * d + c].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NumericalFailure(format!("non-finite coefficients after {what}")))
        }
    }

    /// `‖f‖_{X^r} = (Σ_k |k|^{2r} |f̂(k)|²)^{1/2}`.
    pub fn sobolev_norm(&self, r: f64) -> f64 {
        let d = self.dimension();
        self.model
            .modes()
            .iter()
            .enumerate()
            .map(|(i, mode)| {
                let amp: f64 = self.coeffs[i * d..(i + 1) * d].iter().map(|z| z.norm_sqr()).sum();
                mode.k.norm_sq().powf(r) * amp
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Norm of the state space `X = X^m`.
    pub fn norm(&self) -> f64 {
        let d = self.dimension();
        self.model
            .norm_weights()
            .iter()
            .enumerate()
            .map(|(i, w)| w * self.coeffs[i * d..(i + 1) * d].iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// `‖f − g‖_{X^m}` without allocating the difference.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.ensure_same_model(other)?;
        let d = self.dimension();
        Ok(self
            .model
            .norm_weights()
            .iter()
            .enumerate()
            .map(|(i, w)| {
                w * (i * d..(i + 1) * d)
                    .map(|j| (self.coeffs[j] - other.coeffs[j]).norm_sqr())
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt())
    }

    /// `Re ⟨f, g⟩_{X^r}`.
    pub fn inner(&self, other: &Self, r: f64) -> Result<f64> {
        self.ensure_same_model(other)?;
        let d = self.dimension();
        Ok(self
            .model
            .modes()
            .iter()
            .enumerate()
            .map(|(i, mode)| {
                let s: f64 = (0..d)
                    .map(|c| (self.coeffs[i * d + c] * other.coeffs[i * d + c].conj()).re)
                    .sum();
                mode.k.norm_sq().powf(r) * s
            })
            .sum())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Result<Self> {
        self.ensure_same_model(other)?;
        let mut out = self.clone();
        for (x, y) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *x += y * a;
        }
        Ok(out)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|z| *z *= a);
        out
    }

    /// Semigroup `S(t)`: mode `k` is multiplied by `exp(-γ(k) t)`.
    pub fn apply_semigroup(&self, t: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid("t", "must be finite and nonnegative"));
        }
        let d = self.dimension();
        let mut out = self.clone();
        for (i, mode) in self.model.modes().iter().enumerate() {
            let decay = (-mode.gamma * t).exp();
            out.coeffs[i * d..(i + 1) * d].iter_mut().for_each(|z| *z *= decay);
        }
        Ok(out)
    }

    /// Multiplies each coefficient by `exp(i k·a)`, i.e. `ξ ↦ f(ξ + a)`.
    pub fn shift(&self, a: &[f64]) -> Result<Self> {
        if a.len() != self.dimension() {
            return Err(invalid("a", "shift length differs from the dimension"));
        }
        let mut out = self.clone();
        for &i in self.model.representatives() {
            let phase = Complex64::cis(self.model.mode(i).k.dot(a));
            for c in out.rep_mut(i) {
                *c *= phase;
            }
        }
        out.mirror();
        Ok(out)
    }

    /// `f(0) = Σ_k f̂(k)`, summed pairwise so the result is exactly real.
    pub fn value_at_origin(&self) -> Vec<f64> {
        let d = self.dimension();
        let mut u = vec![0.0; d];
        for &i in self.model.representatives() {
            for (c, uc) in u.iter_mut().enumerate() {
                *uc += 2.0 * self.coeffs[i * d + c].re;
            }
        }
        u
    }

    fn phase_table(&self, xi: &[f64]) -> Vec<Vec<Complex64>> {
        let k = self.model.truncation() as i32;
        xi.iter()
            .map(|&x| (-k..=k).map(|n| Complex64::cis(f64::from(n) * x)).collect())
            .collect()
    }

    fn synthesize(&self, xi: &[f64], with_jacobian: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.dimension();
        if xi.len() != d {
            return Err(invalid("xi", "point length differs from the dimension"));
        }
        if xi.iter().any(|x| !x.is_finite()) {
            return Err(invalid("xi", "non-finite coordinate"));
        }
        let k_max = self.model.truncation() as i32;
        let table = self.phase_table(xi);
        let mut value = vec![ZERO; d];
        let mut jac = vec![ZERO; if with_jacobian { d * d } else { 0 }];
        for (i, mode) in self.model.modes().iter().enumerate() {
            let comps = mode.k.components();
            let mut e = Complex64::new(1.0, 0.0);
            for (j, &kj) in comps.iter().enumerate() {
                e *= table[j][(kj + k_max) as usize];
            }
            for c in 0..d {
                let term = self.coeffs[i * d + c] * e;
                value[c] += term;
                if with_jacobian {
                    for (j, &kj) in comps.iter().enumerate() {
                        jac[c * d + j] += Complex64::new(0.0, f64::from(kj)) * term;
                    }
                }
            }
        }
        let residue = value
            .iter()
            .chain(jac.iter())
            .map(|z| z.im.abs())
            .fold(0.0, f64::max);
        let bound = 1e-10 * self.sobolev_norm(0.0) * (1.0 + f64::from(self.model.truncation()));
        if residue > bound {
            return Err(Error::SymmetryViolation { residue, bound });
        }
        Ok((
            value.iter().map(|z| z.re).collect(),
            jac.iter().map(|z| z.re).collect(),
        ))
    }

    /// Point value `Σ_k f̂(k) e^{ik·ξ}`.
    pub fn evaluate(&self, xi: &[f64]) -> Result<Vec<f64>> {
        Ok(self.synthesize(xi, false)?.0)
    }

    /// Point value and row-major Jacobian `J[i*d + j] = ∂f_i/∂ξ_j`.
    pub fn evaluate_with_jacobian(&self, xi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.synthesize(xi, true)
    }
}

/// `B(ψ, φ)(ξ) = Σ_j ψ_j(0) ∂φ/∂ξ_j (ξ)`; in Fourier space
/// `B̂(k) = i (ψ(0)·k) φ̂(k)`.
pub fn bilinear_b(psi: &FourierField, phi: &FourierField) -> Result<FourierField> {
    psi.ensure_same_model(phi)?;
    let u = psi.value_at_origin();
    let mut out = phi.clone();
    for &i in phi.model.representatives() {
        let factor = Complex64::new(0.0, phi.model.mode(i).k.dot(&u));
        for c in out.rep_mut(i) {
            *c *= factor;
        }
    }
    out.mirror();
    Ok(out)
}

/// `R̂(h, k) = exp(-γ(k)|h|) E(k)`.
pub fn covariance_oracle(model: &SpectrumModel, h: f64, k: &Wavevector) -> Result<DMatrix<Complex64>> {
    if !h.is_finite() {
        return Err(invalid("h", "must be finite"));
    }
    let i = model
        .index_of(k)
        .ok_or_else(|| Error::UnknownWavevector(k.components().to_vec()))?;
    let mode = model.mode(i);
    Ok(mode.energy.scale((-mode.gamma * h.abs()).exp()))
}

/// Sobolev-embedding constant `C_K = Σ_k (1 + |k|) |k|^{-m}` of the
/// truncation: `sup|f| + sup|∇f| ≤ C_K ‖f‖_{X^m}` for every field of the model.
pub fn embedding_constant(model: &SpectrumModel) -> f64 {
    let m = f64::from(model.m());
    model
        .modes()
        .iter()
        .map(|mode| {
            let n = mode.k.norm();
            (1.0 + n) * n.powf(-m)
        })
        .sum()
}
