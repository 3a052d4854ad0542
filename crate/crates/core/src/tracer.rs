//! Passive tracer `dx/dt = V(t, x(t))` in the simulated Eulerian field and
//! the Lagrangian observation process `Z(t, ·) = V(t, x(t) + ·)`.
//!
//! The observation process is produced by an exact Fourier shift of the OU
//! field, never by a separate discretization, so `‖Z(t)‖_X = ‖V(t)‖_X`
//! holds pathwise.

use std::f64::consts::TAU;
use std::io::{self, Write};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::field::{ou_exact_step, sample_stationary, FourierField, OUState};
use crate::rng;
use crate::spectrum::SpectrumModel;

/// Tracer position on the torus plus its unwrapped displacement.
#[derive(Clone, Debug, PartialEq)]
pub struct TracerState {
    /// Componentwise in `[0, 2π)`.
    pub position: Vec<f64>,
    /// Unwrapped position; equals `position` modulo 2π.
    pub displacement: Vec<f64>,
    pub time: f64,
}

impl TracerState {
    pub fn at(x0: &[f64]) -> Self {
        Self {
            position: x0.iter().map(|&x| wrap(x)).collect(),
            displacement: x0.to_vec(),
            time: 0.0,
        }
    }

    pub fn origin(dimension: usize) -> Self {
        Self::at(&vec![0.0; dimension])
    }

    /// Largest deviation between `position` and `displacement` mod 2π.
    pub fn wrap_defect(&self) -> f64 {
        self.position
            .iter()
            .zip(&self.displacement)
            .map(|(&p, &u)| {
                let diff = (p - u).rem_euclid(TAU);
                diff.min(TAU - diff)
            })
            .fold(0.0, f64::max)
    }
}

fn wrap(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// `Z = V(· + a)`: every coefficient multiplied by `exp(i k·a)`.
pub fn shift_field(f: &FourierField, a: &[f64]) -> Result<FourierField> {
    f.shift(a)
}

/// Advances the field by two exact half-steps and the tracer by one RK4
/// step that uses the snapshots at `t`, `t + dt/2` and `t + dt`.
pub fn advect_step<R: Rng + ?Sized>(
    tracer: &TracerState,
    ou: &OUState,
    dt: f64,
    rng: &mut R,
) -> Result<(TracerState, OUState)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive and finite"));
    }
    if tracer.time != ou.time {
        return Err(invalid(
            "time",
            format!("tracer clock {} differs from field clock {}", tracer.time, ou.time),
        ));
    }
    let mid = ou_exact_step(ou, 0.5 * dt, rng)?;
    let end = ou_exact_step(&mid, 0.5 * dt, rng)?;

    let d = tracer.position.len();
    let offset = |base: &[f64], k: &[f64], h: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(b, v)| b + h * v).collect()
    };
    let x = &tracer.displacement;
    let k1 = ou.field.evaluate(x)?;
    let k2 = mid.field.evaluate(&offset(x, &k1, 0.5 * dt))?;
    let k3 = mid.field.evaluate(&offset(x, &k2, 0.5 * dt))?;
    let k4 = end.field.evaluate(&offset(x, &k3, dt))?;

    let mut displacement = Vec::with_capacity(d);
    for j in 0..d {
        displacement.push(x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]));
    }
    if displacement.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite tracer position".into()));
    }
    let time = tracer.time + dt;
    Ok((
        TracerState {
            position: displacement.iter().map(|&u| wrap(u)).collect(),
            displacement,
            time,
        },
        OUState {
            field: end.field,
            time,
        },
    ))
}

/// Parameters of one Lagrangian run.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianParams {
    pub horizon: f64,
    pub dt: f64,
    /// Record every n-th step; the final step is always recorded.
    pub record_every: usize,
    /// Starting point, the origin when `None`.
    pub x0: Option<Vec<f64>>,
    /// Keep the shifted fields `Z(t)` at each record point.
    pub record_fields: bool,
}

impl LagrangianParams {
    pub fn new(horizon: f64, dt: f64) -> Self {
        Self {
            horizon,
            dt,
            record_every: 1,
            x0: None,
            record_fields: false,
        }
    }

    fn validate(&self, dimension: usize) -> Result<usize> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("T", "must be positive"));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(invalid("dt", "must lie in (0, T]"));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be at least 1"));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != dimension || x0.iter().any(|x| !x.is_finite()) {
                return Err(invalid("x0", "must be a finite point of the torus"));
            }
        }
        Ok(((self.horizon / self.dt).round() as usize).max(1))
    }
}

/// Time series of one Lagrangian run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub displacements: Vec<Vec<f64>>,
    /// `Z(t, 0) = V(t, x(t))`.
    pub lagrangian_velocity: Vec<Vec<f64>>,
    /// `‖Z(t)‖_{X^m}`.
    pub field_norm: Vec<f64>,
    /// `Z(t)` itself, when requested.
    pub fields: Option<Vec<FourierField>>,
}

impl TrajectoryRecord {
    fn empty(seed: u64, keep_fields: bool) -> Self {
        Self {
            seed,
            times: Vec::new(),
            positions: Vec::new(),
            displacements: Vec::new(),
            lagrangian_velocity: Vec::new(),
            field_norm: Vec::new(),
            fields: keep_fields.then(Vec::new),
        }
    }

    fn push(&mut self, tracer: &TracerState, ou: &OUState) -> Result<()> {
        let z = shift_field(&ou.field, &tracer.displacement)?;
        self.times.push(tracer.time);
        self.positions.push(tracer.position.clone());
        self.displacements.push(tracer.displacement.clone());
        self.lagrangian_velocity.push(ou.field.evaluate(&tracer.displacement)?);
        self.field_norm.push(z.norm());
        if let Some(fields) = self.fields.as_mut() {
            fields.push(z);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// `x(T) − x(0)`.
    pub fn net_displacement(&self) -> Vec<f64> {
        match (self.displacements.first(), self.displacements.last()) {
            (Some(a), Some(b)) => b.iter().zip(a).map(|(b, a)| b - a).collect(),
            _ => Vec::new(),
        }
    }

    /// Trapezoid integral of the recorded Lagrangian velocity.
    pub fn integrated_velocity(&self) -> Vec<f64> {
        let d = self.dimension();
        let mut acc = vec![0.0; d];
        for w in 1..self.len() {
            let h = self.times[w] - self.times[w - 1];
            for (j, a) in acc.iter_mut().enumerate() {
                *a += 0.5 * h * (self.lagrangian_velocity[w][j] + self.lagrangian_velocity[w - 1][j]);
            }
        }
        acc
    }

    /// Largest recorded Lagrangian speed.
    pub fn max_speed(&self) -> f64 {
        self.lagrangian_velocity
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Compares `∫₀ᵀ Z(s, 0) ds` with `x(T) − x(0)`.
    pub fn displacement_identity(&self, dt: f64) -> DisplacementCheck {
        let integral = self.integrated_velocity();
        let error = integral
            .iter()
            .zip(self.net_displacement())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        DisplacementCheck {
            error,
            bound: 5.0 * dt * dt * self.final_time() * self.max_speed(),
        }
    }
}

/// Outcome of [`TrajectoryRecord::displacement_identity`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DisplacementCheck {
    pub error: f64,
    /// `5·dt²·T·max|Z(t,0)|`.
    pub bound: f64,
}

impl DisplacementCheck {
    pub fn holds(&self) -> bool {
        self.error <= self.bound
    }
}

/// Runs one tracer from the stationary field, calling `observe` at every
/// record point.
pub fn run_lagrangian_observed<F>(
    model: &Arc<SpectrumModel>,
    params: &LagrangianParams,
    seed: u64,
    mut observe: F,
) -> Result<TrajectoryRecord>
where
    F: FnMut(&TracerState, &OUState),
{
    let d = model.dimension();
    let steps = params.validate(d)?;
    let dt = params.horizon / steps as f64;
    let mut stream = rng::stream(seed);
    let mut ou = OUState::new(sample_stationary(model, &mut stream));
    let mut tracer = match &params.x0 {
        Some(x0) => TracerState::at(x0),
        None => TracerState::origin(d),
    };
    let mut record = TrajectoryRecord::empty(seed, params.record_fields);
    record.push(&tracer, &ou)?;
    observe(&tracer, &ou);
    for step in 1..=steps {
        let (t, o) = advect_step(&tracer, &ou, dt, &mut stream)?;
        tracer = t;
        ou = o;
        if step % params.record_every == 0 || step == steps {
            record.push(&tracer, &ou)?;
            observe(&tracer, &ou);
        }
    }
    Ok(record)
}

/// One run of the tracer in the stationary Eulerian field.
pub fn run_lagrangian(model: &Arc<SpectrumModel>, params: &LagrangianParams, seed: u64) -> Result<TrajectoryRecord> {
    run_lagrangian_observed(model, params, seed, |_, _| {})
}

/// Independent runs `0..runs`, run `i` seeded with `derive_seed(master, i)`.
/// Output order is the run index regardless of scheduling.
pub fn run_ensemble(
    model: &Arc<SpectrumModel>,
    params: &LagrangianParams,
    master_seed: u64,
    runs: usize,
) -> Result<Vec<TrajectoryRecord>> {
    (0..runs)
        .into_par_iter()
        .map(|i| run_lagrangian(model, params, rng::derive_seed(master_seed, i as u64)))
        .collect()
}

/// Ensemble estimate of the Stokes drift `lim x(t)/t`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub horizon: f64,
    pub runs: usize,
}

/// Mean and standard error of `(x(T) − x(0))/T` over the records.
pub fn stokes_drift_estimate(records: &[TrajectoryRecord]) -> Result<DriftEstimate> {
    if records.len() < 2 {
        return Err(invalid("records", "need at least two runs"));
    }
    if records.iter().any(TrajectoryRecord::is_empty) {
        return Err(Error::EmptyRecord);
    }
    let horizon = records[0].final_time();
    for r in records {
        let t = r.final_time();
        if (t - horizon).abs() > 1e-9 * horizon.abs().max(1.0) {
            return Err(Error::HorizonMismatch(horizon, t));
        }
    }
    let d = records[0].dimension();
    let n = records.len() as f64;
    let per_run: Vec<Vec<f64>> = records
        .iter()
        .map(|r| r.net_displacement().iter().map(|x| x / horizon).collect())
        .collect();
    let mut mean = vec![0.0; d];
    let mut stderr = vec![0.0; d];
    for j in 0..d {
        let m = per_run.iter().map(|v| v[j]).sum::<f64>() / n;
        let var = per_run.iter().map(|v| (v[j] - m).powi(2)).sum::<f64>() / (n - 1.0);
        mean[j] = m;
        stderr[j] = (var / n).sqrt();
    }
    Ok(DriftEstimate {
        mean,
        stderr,
        horizon,
        runs: records.len(),
    })
}

/// Writes `run_id,t,x1..xd,disp1..dispd,v1..vd,norm`; run ids are the
/// slice indices.
pub fn write_trajectory_csv<W: Write>(records: &[TrajectoryRecord], out: &mut W) -> io::Result<()> {
    let d = records.first().map_or(0, TrajectoryRecord::dimension);
    let mut header = vec!["run_id".to_string(), "t".to_string()];
    header.extend((1..=d).map(|j| format!("x{j}")));
    header.extend((1..=d).map(|j| format!("disp{j}")));
    header.extend((1..=d).map(|j| format!("v{j}")));
    header.push("norm".into());
    writeln!(out, "{}", header.join(","))?;
    for (run, r) in records.iter().enumerate() {
        for i in 0..r.len() {
            write!(out, "{run},{}", r.times[i])?;
            for v in r.positions[i].iter().chain(&r.displacements[i]).chain(&r.lagrangian_velocity[i]) {
                write!(out, ",{v}")?;
            }
            writeln!(out, ",{}", r.field_norm[i])?;
        }
    }
    Ok(())
}
