//! A Markov chain on `(−∞, −1] ∪ [1, ∞)` that satisfies the e-property
//! yet is not tight from `x ≥ 1`, with its Poissonized semigroup.
//!
//! For `x ≥ 1` the chain climbs to `x + 1` with probability `e^{−1/x²}`
//! and otherwise jumps to `−x`; for `x ≤ −1` it moves deterministically
//! to `T(x) = −(x+1)/2 − 1`. `T` sends parts of `(−5, −1)` into the gap
//! `(−1, 1)` (and `−3` to `0`), so the deterministic branch is applied to
//! every `x < 1`; gap visits are tracked and reported. Only the starting
//! point is required to be nonzero.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Largest `n` accepted by [`pn_exact`].
pub const MAX_EXACT_DEPTH: usize = 60;
/// Largest horizon accepted by [`chain_probes`].
pub const MAX_PROBE_HORIZON: usize = 40;

pub fn t_map(x: f64) -> f64 {
    -(x + 1.0) / 2.0 - 1.0
}

/// Probability of the climbing branch at `x ≥ 1`.
fn climb_probability(x: f64) -> f64 {
    (-1.0 / (x * x)).exp()
}

pub fn in_gap(x: f64) -> bool {
    x > -1.0 && x < 1.0
}

fn check_start(x: f64) -> Result<()> {
    if x == 0.0 {
        Err(Error::ChainAtZero)
    } else if !x.is_finite() {
        Err(invalid("x", "must be finite"))
    } else {
        Ok(())
    }
}

fn step_from<R: Rng + ?Sized>(x: f64, rng: &mut R) -> f64 {
    if x >= 1.0 {
        if rng.random::<f64>() < climb_probability(x) {
            x + 1.0
        } else {
            -x
        }
    } else {
        t_map(x)
    }
}

/// One draw from `P(x, ·)`.
pub fn kernel_step<R: Rng + ?Sized>(x: f64, rng: &mut R) -> Result<f64> {
    check_start(x)?;
    Ok(step_from(x, rng))
}

/// Bounded test function with a known sup norm.
#[derive(Clone)]
pub struct BoundedFn {
    label: String,
    sup: f64,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl BoundedFn {
    /// `sup` must bound `|f|` everywhere.
    pub fn new(label: impl Into<String>, sup: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            sup,
            f: Arc::new(f),
        }
    }

    pub fn tanh() -> Self {
        Self::new("tanh", 1.0, f64::tanh)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant({c})"), c.abs(), move |_| c)
    }

    /// `1{|x| > r}`.
    pub fn outside(r: f64) -> Self {
        Self::new(format!("outside({r})"), 1.0, move |x: f64| if x.abs() > r { 1.0 } else { 0.0 })
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn sup(&self) -> f64 {
        self.sup
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for BoundedFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoundedFn({})", self.label)
    }
}

/// `H_0..=H_n` and `G_0..G_{n−1}`.
pub fn h_g_values(x: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(x >= 1.0) {
        return Err(invalid("x", "must be at least 1"));
    }
    let mut h = Vec::with_capacity(n + 1);
    let mut g = Vec::with_capacity(n);
    let mut exponent = 0.0;
    h.push(1.0);
    for k in 0..n {
        let q = (x + k as f64).powi(-2);
        g.push(-(-q).exp_m1() * h[k]);
        exponent += q;
        h.push((-exponent).exp());
    }
    Ok((h, g))
}

/// `ψ₁(z) = Σ_{j≥0} (z+j)^{−2}` for `z ≥ 20` by its asymptotic series.
fn trigamma_tail(z: f64) -> f64 {
    let r = 1.0 / z;
    let r2 = r * r;
    r + 0.5 * r2 + r * r2 * (1.0 / 6.0 - r2 * (1.0 / 30.0 - r2 * (1.0 / 42.0 - r2 / 30.0)))
}

/// `lim H_n(x) = exp(−Σ_{j≥0} (x+j)^{−2})`.
pub fn h_infinity(x: f64) -> Result<f64> {
    if !(x >= 1.0 && x.is_finite()) {
        return Err(invalid("x", "must be at least 1"));
    }
    const DIRECT: usize = 32;
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for j in 0..DIRECT {
        let y = (x + j as f64).powi(-2) - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    Ok((-(sum + trigamma_tail(x + DIRECT as f64))).exp())
}

/// Atom of a finitely supported law. `on_ladder` marks mass that has only
/// climbed so far; `visited_gap` mass that has been inside `(−1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
    pub on_ladder: bool,
    pub visited_gap: bool,
}

/// `P^n δ_x`, exactly, as a list of atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainDistribution {
    atoms: Vec<Atom>,
}

impl ChainDistribution {
    pub fn point(x: f64) -> Result<Self> {
        check_start(x)?;
        Ok(Self {
            atoms: vec![Atom {
                value: x,
                prob: 1.0,
                on_ladder: x >= 1.0,
                visited_gap: in_gap(x),
            }],
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).sum()
    }

    pub fn expectation(&self, f: &BoundedFn) -> f64 {
        self.atoms.iter().map(|a| a.prob * f.eval(a.value)).sum()
    }

    pub fn mass_where(&self, pred: impl Fn(&Atom) -> bool) -> f64 {
        self.atoms.iter().filter(|a| pred(a)).map(|a| a.prob).sum()
    }

    /// Mass that never left the ladder `x, x+1, …`.
    pub fn ladder_mass(&self) -> f64 {
        self.mass_where(|a| a.on_ladder)
    }

    /// Mass whose path has entered the gap `(−1, 1)`.
    pub fn gap_mass(&self) -> f64 {
        self.mass_where(|a| a.visited_gap)
    }

    /// `P^{n+1} δ_x` from `P^n δ_x`; atoms with equal value and flags merge.
    pub fn step(&self) -> Self {
        let mut next = Vec::with_capacity(2 * self.atoms.len());
        for a in &self.atoms {
            if a.value >= 1.0 {
                let p = climb_probability(a.value);
                next.push(Atom {
                    value: a.value + 1.0,
                    prob: a.prob * p,
                    ..*a
                });
                next.push(Atom {
                    value: -a.value,
                    prob: a.prob * -(-1.0 / (a.value * a.value)).exp_m1(),
                    on_ladder: false,
                    visited_gap: a.visited_gap,
                });
            } else {
                let y = t_map(a.value);
                next.push(Atom {
                    value: y,
                    prob: a.prob,
                    on_ladder: false,
                    visited_gap: a.visited_gap || in_gap(y),
                });
            }
        }
        next.sort_by(|a, b| {
            a.value
                .total_cmp(&b.value)
                .then(a.on_ladder.cmp(&b.on_ladder))
                .then(a.visited_gap.cmp(&b.visited_gap))
        });
        let mut atoms: Vec<Atom> = Vec::with_capacity(next.len());
        for a in next {
            match atoms.last_mut() {
                Some(last)
                    if last.value.to_bits() == a.value.to_bits()
                        && last.on_ladder == a.on_ladder
                        && last.visited_gap == a.visited_gap =>
                {
                    last.prob += a.prob;
                }
                _ => atoms.push(a),
            }
        }
        Self { atoms }
    }
}

/// `P^0 δ_x, …, P^n δ_x`, without a depth limit.
fn evolve(x: f64, n: usize) -> Result<Vec<ChainDistribution>> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(ChainDistribution::point(x)?);
    for k in 0..n {
        let next = out[k].step();
        out.push(next);
    }
    Ok(out)
}

/// `P^n δ_x` for `n ≤` [`MAX_EXACT_DEPTH`].
pub fn distribution(x: f64, n: usize) -> Result<ChainDistribution> {
    if n > MAX_EXACT_DEPTH {
        return Err(Error::DepthOverflow {
            requested: n,
            limit: MAX_EXACT_DEPTH,
        });
    }
    Ok(evolve(x, n)?.pop().expect("nonempty"))
}

/// Exact `P^n f(x)` by enumerating the reachable atoms.
pub fn pn_exact(x: f64, n: usize, f: &BoundedFn) -> Result<f64> {
    Ok(distribution(x, n)?.expectation(f))
}

/// `Σ_{k<n} f(T^{n−1−k}(−x−k)) G_k(x) + H_n(x) f(x+n)`, term by term.
/// This agrees with [`pn_exact`] until some `T`-orbit re-enters `[1, ∞)`,
/// which first happens for `x + n − 1 ≥ 5`.
pub fn pn_closed(x: f64, n: usize, f: &BoundedFn) -> Result<f64> {
    if n < 1 {
        return Err(invalid("n", "must be at least 1"));
    }
    let (h, g) = h_g_values(x, n)?;
    let mut acc = 0.0;
    for (k, gk) in g.iter().enumerate() {
        let mut y = -x - k as f64;
        for _ in 0..(n - 1 - k) {
            y = t_map(y);
        }
        acc += f.eval(y) * gk;
    }
    Ok(acc + h[n] * f.eval(x + n as f64))
}

/// Poisson weights `e^{−t} tⁿ/n!` for `n ≤ N` and a bound on the rest.
fn poisson_weights(t: f64, min_terms: usize, tail_target: f64) -> (Vec<f64>, f64) {
    let mut weights = Vec::with_capacity(min_terms + 1);
    let mut log_w = -t;
    let ln_t = t.ln();
    let mut n = 0usize;
    loop {
        weights.push(log_w.exp());
        let next_log = log_w + ln_t - ((n + 1) as f64).ln();
        if n >= min_terms && (n + 1) as f64 > t {
            // w_{m+1}/w_m ≤ t/(n+2) for every m > n
            let ratio = t / (n + 2) as f64;
            let tail = next_log.exp() / (1.0 - ratio);
            if tail < tail_target {
                return (weights, tail);
            }
        }
        log_w = next_log;
        n += 1;
    }
}

/// Truncated `P_t f(x) = Σ e^{−t} tⁿ/n! Pⁿ f(x)`, discarded Poisson mass
/// below `tol / (2‖f‖_∞)`.
pub fn pt_poisson(x: f64, t: f64, f: &BoundedFn, tol: f64) -> Result<f64> {
    Ok(pt_poisson_detailed(x, t, f, tol)?.value)
}

/// [`pt_poisson`] with its truncation data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonValue {
    pub value: f64,
    /// Largest `n` used.
    pub terms: usize,
    /// Bound on the discarded Poisson mass.
    pub tail_mass: f64,
}

pub fn pt_poisson_detailed(x: f64, t: f64, f: &BoundedFn, tol: f64) -> Result<PoissonValue> {
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("t", "must be nonnegative"));
    }
    check_start(x)?;
    if t == 0.0 {
        return Ok(PoissonValue {
            value: f.eval(x),
            terms: 0,
            tail_mass: 0.0,
        });
    }
    let base = (t + 10.0 * t.sqrt() + 20.0).ceil() as usize;
    let target = if f.sup() > 0.0 { tol / (2.0 * f.sup()) } else { f64::INFINITY };
    let (weights, tail_mass) = poisson_weights(t, base, target);
    let mut dist = ChainDistribution::point(x)?;
    let mut value = 0.0;
    for (n, w) in weights.iter().enumerate() {
        if n > 0 {
            dist = dist.step();
        }
        value += w * dist.expectation(f);
    }
    Ok(PoissonValue {
        value,
        terms: weights.len() - 1,
        tail_mass,
    })
}

/// Monte-Carlo state after `n` kernel steps, per path.
pub fn simulate(x: f64, n: usize, paths: usize, seed: u64) -> Result<Vec<(f64, bool)>> {
    check_start(x)?;
    Ok((0..paths)
        .into_par_iter()
        .map(|i| {
            let mut stream = rng::run_stream(seed, i as u64);
            let mut y = x;
            let mut climbed_only = x >= 1.0;
            for _ in 0..n {
                let next = step_from(y, &mut stream);
                climbed_only &= next == y + 1.0 && y >= 1.0;
                y = next;
            }
            (y, climbed_only)
        })
        .collect())
}

/// Monte-Carlo `P^n f(x)` with its standard error.
pub fn pn_monte_carlo(x: f64, n: usize, f: &BoundedFn, paths: usize, seed: u64) -> Result<(f64, f64)> {
    if paths < 2 {
        return Err(invalid("paths", "need at least two"));
    }
    let values: Vec<f64> = simulate(x, n, paths, seed)?.iter().map(|(y, _)| f.eval(*y)).collect();
    Ok((crate::ergodic::stats::mean(&values), crate::ergodic::stats::stderr(&values)))
}

/// Monte-Carlo `P^n f(x)` with standard errors for every `n ≤ n_max`,
/// from one set of paths.
pub fn pn_monte_carlo_profile(x: f64, n_max: usize, f: &BoundedFn, paths: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    check_start(x)?;
    if paths < 2 {
        return Err(invalid("paths", "need at least two"));
    }
    let values: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut stream = rng::run_stream(seed, i as u64);
            let mut y = x;
            let mut out = Vec::with_capacity(n_max + 1);
            out.push(f.eval(y));
            for _ in 0..n_max {
                y = step_from(y, &mut stream);
                out.push(f.eval(y));
            }
            out
        })
        .collect();
    let mut column = vec![0.0; paths];
    Ok((0..=n_max)
        .map(|n| {
            for (c, v) in column.iter_mut().zip(&values) {
                *c = v[n];
            }
            (crate::ergodic::stats::mean(&column), crate::ergodic::stats::stderr(&column))
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct ChainProbeParams {
    pub x: f64,
    pub n_max: usize,
    pub radius: f64,
    pub ys: Vec<f64>,
    pub f: BoundedFn,
    pub escape_steps: usize,
    pub mc_paths: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuityRow {
    pub y: f64,
    /// `max_{n ≤ n_max} |Pⁿf(x) − Pⁿf(y)|`.
    pub sup_diff: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LadderRow {
    pub n: usize,
    /// Exact mass that never left the ladder.
    pub exact: f64,
    pub h_n: f64,
}

/// Mass outside `[−R, R]` after many steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EscapeReport {
    pub steps: usize,
    pub radius: f64,
    pub mc_fraction: f64,
    pub mc_stderr: f64,
    /// Fraction of MC paths that only climbed.
    pub mc_ladder_fraction: f64,
    /// Exact mass outside the ball.
    pub exact: f64,
    /// Exact never-jumped part, `H_n(x)` when `x + n > R`.
    pub exact_ladder: f64,
    /// Exact mass outside the ball that jumped and climbed back.
    pub re_escape: f64,
    pub h_infinity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainProbeReport {
    pub continuity: Vec<ContinuityRow>,
    pub ladder: Vec<LadderRow>,
    pub escape: EscapeReport,
    /// Mass that visited `(−1, 1)` within `n_max` steps.
    pub gap_mass: f64,
}

pub fn chain_probes(params: &ChainProbeParams) -> Result<ChainProbeReport> {
    let x = params.x;
    if params.n_max > MAX_PROBE_HORIZON {
        return Err(Error::DepthOverflow {
            requested: params.n_max,
            limit: MAX_PROBE_HORIZON,
        });
    }
    if !(x >= 1.0) {
        return Err(invalid("x", "must be at least 1"));
    }
    if params.mc_paths < 2 {
        return Err(invalid("paths", "need at least two"));
    }
    let base = evolve(x, params.n_max)?;
    let base_values: Vec<f64> = base.iter().map(|d| d.expectation(&params.f)).collect();
    let continuity = params
        .ys
        .iter()
        .map(|&y| {
            let other = evolve(y, params.n_max)?;
            let sup_diff = base_values
                .iter()
                .zip(&other)
                .map(|(a, d)| (a - d.expectation(&params.f)).abs())
                .fold(0.0, f64::max);
            Ok(ContinuityRow { y, sup_diff })
        })
        .collect::<Result<Vec<_>>>()?;
    let (h, _) = h_g_values(x, params.n_max)?;
    let ladder = base
        .iter()
        .enumerate()
        .map(|(n, d)| LadderRow {
            n,
            exact: d.ladder_mass(),
            h_n: h[n],
        })
        .collect();

    let r = params.radius;
    let far = evolve(x, params.escape_steps)?.pop().expect("nonempty");
    let exact = far.mass_where(|a| a.value.abs() > r);
    let exact_ladder = far.mass_where(|a| a.on_ladder && a.value.abs() > r);
    let mc = simulate(x, params.escape_steps, params.mc_paths, params.seed)?;
    let outside: Vec<f64> = mc.iter().map(|(y, _)| if y.abs() > r { 1.0 } else { 0.0 }).collect();
    let mc_ladder = mc.iter().filter(|(_, l)| *l).count() as f64 / mc.len() as f64;
    Ok(ChainProbeReport {
        continuity,
        ladder,
        escape: EscapeReport {
            steps: params.escape_steps,
            radius: r,
            mc_fraction: crate::ergodic::stats::mean(&outside),
            mc_stderr: crate::ergodic::stats::stderr(&outside),
            mc_ladder_fraction: mc_ladder,
            exact,
            exact_ladder,
            re_escape: exact - exact_ladder,
            h_infinity: h_infinity(x)?,
        },
        gap_mass: base.last().map_or(0.0, ChainDistribution::gap_mass),
    })
}
