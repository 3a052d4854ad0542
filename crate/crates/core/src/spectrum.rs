//! Statistical model of the velocity field: a truncated wavevector lattice,
//! the per-mode energy spectrum and the per-mode mixing rates.
//!
//! The field covariance is fixed by its Fourier coefficients
//! `R̂(h, k) = exp(-γ(k)|h|) E(k)`, where `E(k)` is a Hermitian positive
//! semidefinite d×d matrix and `γ(k) > 0`. Only the finite ball
//! `{k : 0 < |k|_∞ ≤ K}` is represented; convergence of the summability
//! conditions in `K` is measured (see [`SpectrumModel::check_h1`] and
//! [`SpectrumModel::check_h2`]) rather than assumed.

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::linalg;

/// A nonzero integer lattice vector.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Wavevector(Vec<i32>);

impl Wavevector {
    pub fn new(components: Vec<i32>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("wavevector", "empty component list"));
        }
        if components.iter().all(|&c| c == 0) {
            return Err(invalid("wavevector", "the zero vector carries no mode"));
        }
        Ok(Self(components))
    }

    pub fn components(&self) -> &[i32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|&c| f64::from(c) * f64::from(c)).sum()
    }

    /// Euclidean norm `|k|`.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn linf(&self) -> u32 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|c| -c).collect())
    }

    /// `k · v` for a real vector `v`.
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(&c, &x)| f64::from(c) * x).sum()
    }

    /// True when the first nonzero component is positive; exactly one of
    /// `k`, `-k` satisfies this.
    pub fn is_positive_half(&self) -> bool {
        self.0.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
    }
}

impl fmt::Debug for Wavevector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Statistics of one Fourier mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSpec {
    pub k: Wavevector,
    /// Mixing rate, 1/s.
    pub gamma: f64,
    /// Energy matrix `E(k)`, velocity² units.
    pub energy: DMatrix<Complex64>,
}

/// Family of the spectral projector `P(k)` applied to the energy matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    /// `P = I`.
    Full,
    /// `P = I − kkᵀ/|k|²`, divergence-free fields.
    Incompressible,
    /// `P = kkᵀ/|k|²`, gradient fields.
    Potential,
}

impl Projection {
    pub fn name(self) -> &'static str {
        match self {
            Projection::Full => "full",
            Projection::Incompressible => "incompressible",
            Projection::Potential => "potential",
        }
    }

    fn matrix(self, k: &Wavevector) -> DMatrix<Complex64> {
        let d = k.dimension();
        let k2 = k.norm_sq();
        DMatrix::from_fn(d, d, |i, j| {
            let kk = f64::from(k.0[i]) * f64::from(k.0[j]) / k2;
            let id = if i == j { 1.0 } else { 0.0 };
            let v = match self {
                Projection::Full => id,
                Projection::Incompressible => id - kk,
                Projection::Potential => kk,
            };
            Complex64::new(v, 0.0)
        })
    }
}

/// Parameters of the power-law instantiation
/// `E(k) = σ₀ |k|^{-p} P(k)`, `γ(k) = K₀ |k|^{q}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerLawParams {
    pub dimension: usize,
    pub truncation: u32,
    pub sigma0: f64,
    pub decay_p: f64,
    pub projection: Projection,
    pub gamma_k0: f64,
    pub gamma_exp: f64,
    /// Sobolev regularity index used for the field norm.
    pub m: u32,
    pub alpha: f64,
}

impl Default for PowerLawParams {
    fn default() -> Self {
        Self {
            dimension: 2,
            truncation: 8,
            sigma0: 1.0,
            decay_p: 14.0,
            projection: Projection::Incompressible,
            gamma_k0: 1.0,
            gamma_exp: 2.0,
            m: 3,
            alpha: 0.5,
        }
    }
}

/// Truncated spectral model. Immutable once built.
#[derive(Clone, Debug)]
pub struct SpectrumModel {
    dimension: usize,
    truncation: u32,
    m: u32,
    alpha: f64,
    modes: Vec<ModeSpec>,
    index: HashMap<Wavevector, usize>,
    conjugate: Vec<usize>,
    representatives: Vec<usize>,
    // row-major d×d Hermitian square roots of E(k), one block per mode
    energy_sqrt: Vec<Complex64>,
    // |k|^{2m} per mode
    norm_weights: Vec<f64>,
}

/// Lattice points of `{k : 0 < |k|_∞ ≤ K}` in lexicographic order.
pub fn lattice_ball(dimension: usize, truncation: u32) -> Vec<Wavevector> {
    let k = truncation as i32;
    let side = (2 * k + 1) as usize;
    let total = side.pow(dimension as u32);
    let mut out = Vec::with_capacity(total.saturating_sub(1));
    for mut idx in 0..total {
        let mut comps = vec![0i32; dimension];
        for c in comps.iter_mut().rev() {
            *c = (idx % side) as i32 - k;
            idx /= side;
        }
        if comps.iter().any(|&c| c != 0) {
            out.push(Wavevector(comps));
        }
    }
    out
}

/// Builds the power-law spectrum on the ℓ∞ ball of radius `K`.
pub fn build_power_law_spectrum(params: &PowerLawParams) -> Result<SpectrumModel> {
    if params.dimension < 1 {
        return Err(invalid("dimension", "must be at least 1"));
    }
    if params.truncation < 1 {
        return Err(invalid("K", "must be at least 1"));
    }
    if !(params.sigma0 > 0.0 && params.sigma0.is_finite()) {
        return Err(invalid("sigma0", "must be positive"));
    }
    if !(params.gamma_k0 > 0.0 && params.gamma_k0.is_finite()) {
        return Err(invalid("gamma_K0", "must be positive"));
    }
    if !(params.gamma_exp >= 1.0 && params.gamma_exp.is_finite()) {
        return Err(invalid("gamma_exp", "must be at least 1"));
    }
    if !(params.decay_p > 0.0 && params.decay_p.is_finite()) {
        return Err(invalid("decay_p", "must be positive"));
    }
    let modes = lattice_ball(params.dimension, params.truncation)
        .into_iter()
        .map(|k| {
            let norm = k.norm();
            let energy = params
                .projection
                .matrix(&k)
                .scale(params.sigma0 * norm.powf(-params.decay_p));
            ModeSpec {
                gamma: params.gamma_k0 * norm.powf(params.gamma_exp),
                energy,
                k,
            }
        })
        .collect();
    SpectrumModel::from_modes(params.dimension, params.m, params.alpha, modes)
}

impl SpectrumModel {
    /// Validates and indexes an explicit mode list.
    pub fn from_modes(dimension: usize, m: u32, alpha: f64, modes: Vec<ModeSpec>) -> Result<Self> {
        if dimension < 1 {
            return Err(invalid("dimension", "must be at least 1"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("alpha", "must lie in (0, 1)"));
        }
        if modes.is_empty() {
            return Err(Error::InvalidModel("no modes".into()));
        }
        let mut index = HashMap::with_capacity(modes.len());
        for (i, mode) in modes.iter().enumerate() {
            if mode.k.dimension() != dimension {
                return Err(Error::InvalidModel(format!(
                    "wavevector {:?} has dimension {}, expected {dimension}",
                    mode.k,
                    mode.k.dimension()
                )));
            }
            if !(mode.gamma > 0.0 && mode.gamma.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "mixing rate at {:?} must be positive, got {}",
                    mode.k, mode.gamma
                )));
            }
            if mode.energy.nrows() != dimension || mode.energy.ncols() != dimension {
                return Err(Error::InvalidModel(format!(
                    "energy at {:?} is not {dimension}x{dimension}",
                    mode.k
                )));
            }
            linalg::check_hermitian_psd(&mode.energy)
                .map_err(|e| Error::InvalidModel(format!("{e} at {:?}", mode.k)))?;
            if index.insert(mode.k.clone(), i).is_some() {
                return Err(Error::InvalidModel(format!("duplicate wavevector {:?}", mode.k)));
            }
        }

        let mut conjugate = Vec::with_capacity(modes.len());
        for mode in &modes {
            let neg = mode.k.negated();
            let j = *index.get(&neg).ok_or_else(|| {
                Error::InvalidModel(format!("{:?} present without its negative", mode.k))
            })?;
            let partner = &modes[j];
            if partner.gamma != mode.gamma {
                return Err(Error::InvalidModel(format!(
                    "mixing rates differ between {:?} and its negative",
                    mode.k
                )));
            }
            if partner.energy != mode.energy.map(|z| z.conj()) {
                return Err(Error::InvalidModel(format!(
                    "energy at {:?} is not the conjugate of its negative",
                    mode.k
                )));
            }
            conjugate.push(j);
        }

        let representatives = (0..modes.len())
            .filter(|&i| modes[i].k.is_positive_half())
            .collect();

        let mut energy_sqrt = Vec::with_capacity(modes.len() * dimension * dimension);
        for mode in &modes {
            let s = linalg::hermitian_sqrt(&mode.energy)
                .map_err(|e| Error::InvalidModel(format!("{e} at {:?}", mode.k)))?;
            for r in 0..dimension {
                for c in 0..dimension {
                    energy_sqrt.push(s[(r, c)]);
                }
            }
        }

        let truncation = modes.iter().map(|m| m.k.linf()).max().unwrap_or(0);
        let norm_weights = modes.iter().map(|mode| mode.k.norm_sq().powi(m as i32)).collect();
        Ok(Self {
            dimension,
            truncation,
            m,
            alpha,
            modes,
            index,
            conjugate,
            representatives,
            energy_sqrt,
            norm_weights,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Largest ℓ∞ norm among the modes.
    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn modes(&self) -> &[ModeSpec] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn mode(&self, i: usize) -> &ModeSpec {
        &self.modes[i]
    }

    pub fn index_of(&self, k: &Wavevector) -> Option<usize> {
        self.index.get(k).copied()
    }

    /// Index of the mode carrying `-k`.
    pub fn conjugate_of(&self, i: usize) -> usize {
        self.conjugate[i]
    }

    /// One index per conjugate pair `{k, -k}` (the member in the positive half).
    pub fn representatives(&self) -> &[usize] {
        &self.representatives
    }

    pub(crate) fn norm_weights(&self) -> &[f64] {
        &self.norm_weights
    }

    pub(crate) fn energy_sqrt(&self, i: usize) -> &[Complex64] {
        let dd = self.dimension * self.dimension;
        &self.energy_sqrt[i * dd..(i + 1) * dd]
    }

    /// `m > d/2 + 1`, needed for the C¹ embedding of the field norm.
    pub fn regularity_ok(&self) -> bool {
        f64::from(self.m) > self.dimension as f64 / 2.0 + 1.0
    }

    /// Spectral gap `γ* = min_k γ(k)`.
    pub fn gamma_star(&self) -> f64 {
        self.modes.iter().map(|m| m.gamma).fold(f64::INFINITY, f64::min)
    }

    /// Truncated sum `Σ_k γ(k)^α |k|^{2(m+1)} Tr E(k)`.
    pub fn check_h1(&self) -> f64 {
        let two_m1 = 2.0 * (f64::from(self.m) + 1.0);
        self.modes
            .iter()
            .map(|mode| {
                mode.gamma.powf(self.alpha)
                    * mode.k.norm().powf(two_m1)
                    * linalg::real_trace(&mode.energy)
            })
            .sum()
    }

    /// Quadrature of `g(t) = max_k exp(-γ(k)t)|k|` on `[0, t_max]`, plus an
    /// upper bound on the neglected tail. The trapezoid rule is applied in
    /// `u = √t` with `quad_steps` intervals, since `g` is steep near 0.
    pub fn check_h2(&self, t_max: f64, quad_steps: usize) -> Result<H2Report> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(invalid("t_max", "must be positive"));
        }
        if quad_steps < 2 {
            return Err(invalid("quad_steps", "must be at least 2"));
        }
        let reps: Vec<(f64, f64)> = self
            .representatives
            .iter()
            .map(|&i| (self.modes[i].gamma, self.modes[i].k.norm()))
            .collect();
        let g = |t: f64| {
            reps.iter()
                .map(|&(gamma, norm)| (-gamma * t).exp() * norm)
                .fold(0.0, f64::max)
        };
        let u_max = t_max.sqrt();
        let h = u_max / quad_steps as f64;
        let f = |u: f64| 2.0 * u * g(u * u);
        let mut integral = 0.5 * (f(0.0) + f(u_max));
        for i in 1..quad_steps {
            integral += f(i as f64 * h);
        }
        integral *= h;
        // max_k ≤ Σ_k, integrated termwise from t_max to ∞
        let tail_bound = reps
            .iter()
            .map(|&(gamma, norm)| norm * (-gamma * t_max).exp() / gamma)
            .sum();
        Ok(H2Report {
            integral,
            tail_bound,
        })
    }

    /// Restriction to the modes with `|k|_∞ ≤ truncation`.
    pub fn truncated(&self, truncation: u32) -> Result<Self> {
        let modes: Vec<ModeSpec> = self
            .modes
            .iter()
            .filter(|m| m.k.linf() <= truncation)
            .cloned()
            .collect();
        Self::from_modes(self.dimension, self.m, self.alpha, modes)
    }

    /// Same lattice and mixing rates with every energy matrix multiplied by
    /// `factor ≥ 0`. A zero factor gives the noiseless model.
    pub fn with_energy_scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return Err(invalid("factor", "must be finite and nonnegative"));
        }
        let modes = self
            .modes
            .iter()
            .map(|m| ModeSpec {
                k: m.k.clone(),
                gamma: m.gamma,
                energy: m.energy.scale(factor),
            })
            .collect();
        Self::from_modes(self.dimension, self.m, self.alpha, modes)
    }

    /// Closed-form stationary mean `E‖V‖²_{X^m} = Σ_k |k|^{2m} Tr E(k)`.
    pub fn stationary_mean_square_norm(&self) -> f64 {
        let two_m = 2.0 * f64::from(self.m);
        self.modes
            .iter()
            .map(|mode| mode.k.norm().powf(two_m) * linalg::real_trace(&mode.energy))
            .sum()
    }

    /// Weights `c_j` such that under the stationary law
    /// `‖V‖²_{X^m} = Σ_j c_j E_j` with `E_j` i.i.d. standard exponentials.
    pub fn stationary_norm_weights(&self) -> Vec<f64> {
        let two_m = 2.0 * f64::from(self.m);
        let mut weights = Vec::new();
        for &i in &self.representatives {
            let mode = &self.modes[i];
            let scale = 2.0 * mode.k.norm().powf(two_m);
            for ev in linalg::hermitian_eigenvalues(&mode.energy) {
                if ev > 0.0 {
                    weights.push(scale * ev);
                }
            }
        }
        weights
    }

    /// Closed-form stationary moment `E‖V‖^{2n}_{X^m}`.
    pub fn stationary_norm_moment(&self, n: u32) -> f64 {
        weighted_exponential_moment(&self.stationary_norm_weights(), n)
    }
}

/// `E[(Σ c_j E_j)^n]` for independent standard exponentials, from the
/// cumulants `κ_r = (r-1)! Σ c_j^r` by the moment–cumulant recursion.
pub fn weighted_exponential_moment(weights: &[f64], n: u32) -> f64 {
    let n = n as usize;
    let mut kappa = vec![0.0; n + 1];
    let mut fact = 1.0;
    for (r, kap) in kappa.iter_mut().enumerate().skip(1) {
        if r > 1 {
            fact *= (r - 1) as f64;
        }
        *kap = fact * weights.iter().map(|c| c.powi(r as i32)).sum::<f64>();
    }
    let mut mu = vec![0.0; n + 1];
    mu[0] = 1.0;
    for j in 1..=n {
        let mut acc = 0.0;
        let mut binom = 1.0; // C(j-1, r-1)
        for r in 1..=j {
            if r > 1 {
                binom *= (j - r + 1) as f64 / (r - 1) as f64;
            }
            acc += binom * kappa[r] * mu[j - r];
        }
        mu[j] = acc;
    }
    mu[n]
}

/// Result of the (H2) quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct H2Report {
    pub integral: f64,
    /// Upper bound on `∫_{t_max}^∞ g(t) dt`.
    pub tail_bound: f64,
}

/// Partial-sum stabilisation of a truncated series under doubling of `K`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Convergence {
    pub half: f64,
    pub full: f64,
    pub relative_change: f64,
}

impl Convergence {
    /// Threshold on the relative change between the `K/2` and `K` partial sums.
    pub const THRESHOLD: f64 = 0.10;

    pub fn converged(&self) -> bool {
        self.relative_change <= Self::THRESHOLD
    }
}

/// Compares a truncated quantity at `K/2` and at `K`. Returns `None` when
/// `K < 2`.
pub fn stabilization<F>(model: &SpectrumModel, quantity: F) -> Result<Option<Convergence>>
where
    F: Fn(&SpectrumModel) -> Result<f64>,
{
    let k = model.truncation();
    if k < 2 {
        return Ok(None);
    }
    let half = quantity(&model.truncated(k / 2)?)?;
    let full = quantity(model)?;
    let relative_change = if full == 0.0 {
        0.0
    } else {
        ((full - half) / full).abs()
    };
    Ok(Some(Convergence {
        half,
        full,
        relative_change,
    }))
}
