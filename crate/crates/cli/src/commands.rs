use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};
use thiserror::Error;

use tracerflow_core::chain::{self, BoundedFn, ChainProbeParams};
use tracerflow_core::ergodic::{
    e_property_probe, ergodic_report, lln_test, moment_scan, stability_probe, EPropertyParams, LlnParams,
    MomentScanParams, MomentStart, Observable, ReportParams, StabilityParams,
};
use tracerflow_core::field::{attractor_decay, covariance_diagnostics, CovarianceParams};
use tracerflow_core::spectrum::{stabilization, Convergence};
use tracerflow_core::tracer::{run_ensemble, stokes_drift_estimate, write_trajectory_csv, LagrangianParams};
use tracerflow_core::{build_power_law_spectrum, Error as CoreError, FourierField, SpectrumModel};

use crate::config::{ExperimentConfig, ObservableName, OutputFormat, ProbeKind};
use crate::output::{record, sibling, unix_now, write_csv, write_jsonl, RunManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Validate,
    Field,
    Decay,
    Tracer,
    Ergodic,
    Chain,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Field => "field",
            Command::Decay => "decay",
            Command::Tracer => "tracer",
            Command::Ergodic => "ergodic",
            Command::Chain => "chain",
        }
    }
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const NUMERICAL: i32 = 2;
    pub const CHECK_FAILED: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Numerical(_) => exit::NUMERICAL,
            CommandError::Config(_) | CommandError::Io(_) => exit::CONFIG,
        }
    }
}

impl From<CoreError> for CommandError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NumericalFailure(_) => CommandError::Numerical(e.to_string()),
            other => CommandError::Config(other.to_string()),
        }
    }
}

type Outcome = Result<i32, CommandError>;

const SPECTRUM_NOTE: &str = "spectrum: power-law energy and mixing-rate instantiation chosen by configuration";

fn build_model(cfg: &ExperimentConfig) -> Result<Arc<SpectrumModel>, CommandError> {
    Ok(Arc::new(build_power_law_spectrum(&cfg.spectrum.params())?))
}

fn code(ok: bool) -> i32 {
    if ok {
        exit::OK
    } else {
        exit::CHECK_FAILED
    }
}

/// Runs one subcommand and writes its outputs to `out` (or the configured
/// path, or standard output).
pub fn run_command(cmd: Command, cfg: &ExperimentConfig, out: Option<&Path>) -> Outcome {
    let out: Option<PathBuf> = out.map(Path::to_path_buf).or_else(|| cfg.output.path.as_ref().map(PathBuf::from));
    let out = out.as_deref();
    let started = unix_now();
    match cmd {
        Command::Validate => validate(cfg, out, started),
        Command::Field => field(cfg, out, started),
        Command::Decay => decay(cfg, out, started),
        Command::Tracer => tracer(cfg, out, started),
        Command::Ergodic => ergodic(cfg, out, started),
        Command::Chain => chain_cmd(cfg, out, started),
    }
}

fn convergence_json(c: Option<Convergence>) -> Value {
    match c {
        Some(c) => json!({
            "half_K": c.half,
            "relative_change": c.relative_change,
            "threshold": Convergence::THRESHOLD,
            "converged": c.converged(),
        }),
        None => Value::Null,
    }
}

fn validate(cfg: &ExperimentConfig, out: Option<&Path>, started: u64) -> Outcome {
    let model = build_model(cfg)?;
    let manifest = RunManifest::new("validate", cfg, 0, started).with_note(SPECTRUM_NOTE);
    let (t_max, quad_steps) = (20.0, 4000);
    let h1 = model.check_h1();
    let h1_conv = stabilization(&model, |m| Ok(m.check_h1()))?;
    let h2 = model.check_h2(t_max, quad_steps)?;
    let h2_conv = stabilization(&model, |m| Ok(m.check_h2(t_max, quad_steps)?.integral))?;
    let regular = model.regularity_ok();
    let records = vec![
        record(
            "spectrum",
            json!({
                "family": "power_law",
                "dimension": model.dimension(),
                "K": model.truncation(),
                "projection": cfg.spectrum.projection,
                "sigma0": cfg.spectrum.sigma0,
                "decay_p": cfg.spectrum.decay_p,
                "gamma_K0": cfg.spectrum.gamma_k0,
                "gamma_exp": cfg.spectrum.gamma_exp,
                "stationary_mean_square_norm": model.stationary_mean_square_norm(),
            }),
            json!(model.len()),
            Value::Null,
            &manifest,
        ),
        record("gamma_star", json!({}), json!(model.gamma_star()), Value::Null, &manifest),
        record(
            "regularity",
            json!({"m": model.m(), "dimension": model.dimension(), "condition": "m > d/2 + 1", "holds": regular}),
            json!(model.m()),
            Value::Null,
            &manifest,
        ),
        record(
            "h1",
            json!({"alpha": model.alpha(), "m": model.m(), "stabilization": convergence_json(h1_conv)}),
            json!(h1),
            Value::Null,
            &manifest,
        ),
        record(
            "h2",
            json!({
                "t_max": t_max,
                "quad_steps": quad_steps,
                "tail_bound": h2.tail_bound,
                "stabilization": convergence_json(h2_conv),
            }),
            json!(h2.integral),
            Value::Null,
            &manifest,
        ),
    ];
    write_jsonl(out, &manifest, &records)?;
    let converged = |c: Option<Convergence>| c.is_none_or(|c| c.converged());
    Ok(code(regular && converged(h1_conv) && converged(h2_conv)))
}

fn field(cfg: &ExperimentConfig, out: Option<&Path>, started: u64) -> Outcome {
    let model = build_model(cfg)?;
    let p = &cfg.probe;
    let params = CovarianceParams {
        samples: cfg.simulation.ensemble,
        top_modes: p.top_modes,
        lags: p.lags.clone(),
        grid: p.lag_grid,
        path_steps: p.lag_steps,
    };
    let diag = covariance_diagnostics(&model, &params, cfg.seed())?;
    let manifest = RunManifest::new("field", cfg, params.samples, started).with_note(SPECTRUM_NOTE);
    let mut records = Vec::new();
    let mut ok = true;
    for mode in &diag {
        let pass = mode.covariance_error < p.tolerance;
        ok &= pass;
        records.push(record(
            "covariance",
            json!({
                "k": mode.k.components(),
                "gamma": mode.gamma,
                "energy_trace": mode.energy_trace,
                "tolerance": p.tolerance,
                "pass": pass,
            }),
            json!(mode.covariance_error),
            Value::Null,
            &manifest,
        ));
        for lag in &mode.lags {
            let rel = lag.relative_error();
            let pass = rel < p.tolerance;
            ok &= pass;
            records.push(record(
                "lag_correlation",
                json!({
                    "k": mode.k.components(),
                    "lag": lag.lag,
                    "expected": lag.expected,
                    "relative_error": rel,
                    "tolerance": p.tolerance,
                    "pass": pass,
                }),
                json!(lag.estimate),
                json!(lag.stderr),
                &manifest,
            ));
        }
    }
    write_jsonl(out, &manifest, &records)?;
    Ok(code(ok))
}

/// Relative modulus error accepted by `decay`.
const DECAY_TOLERANCE: f64 = 1e-6;
/// Additive slack on the norm bound accepted by `decay`.
const NORM_SLACK: f64 = 1e-9;

fn decay(cfg: &ExperimentConfig, out: Option<&Path>, started: u64) -> Outcome {
    let model = build_model(cfg)?;
    let sim = &cfg.simulation;
    let rep = attractor_decay(&model, sim.ensemble, cfg.probe.decay_radius, sim.horizon, sim.dt, cfg.seed())?;
    let manifest = RunManifest::new("decay", cfg, sim.ensemble, started).with_note(SPECTRUM_NOTE);
    let pass = rep.max_relative_error < DECAY_TOLERANCE && rep.max_norm_excess <= NORM_SLACK;
    let records = vec![record(
        "decay",
        json!({
            "starts": rep.starts,
            "steps": rep.steps,
            "dt": sim.dt,
            "T": sim.horizon,
            "R": cfg.probe.decay_radius,
            "gamma_star": model.gamma_star(),
            "max_norm_excess": rep.max_norm_excess,
            "tolerance": DECAY_TOLERANCE,
            "pass": pass,
        }),
        json!(rep.max_relative_error),
        Value::Null,
        &manifest,
    )];
    write_jsonl(out, &manifest, &records)?;
    Ok(code(pass))
}

fn tracer(cfg: &ExperimentConfig, out: Option<&Path>, started: u64) -> Outcome {
    let model = build_model(cfg)?;
    let sim = &cfg.simulation;
    let params = LagrangianParams {
        horizon: sim.horizon,
        dt: sim.dt,
        record_every: sim.record_every,
        x0: sim.x0.clone(),
        record_fields: false,
    };
    let runs = run_ensemble(&model, &params, cfg.seed(), sim.ensemble)?;
    let manifest = RunManifest::new("tracer", cfg, sim.ensemble, started).with_note(SPECTRUM_NOTE);

    let mut records = Vec::new();
    if runs.len() >= 2 {
        let drift = stokes_drift_estimate(&runs)?;
        records.push(record(
            "stokes_drift",
            json!({"T": drift.horizon, "runs": drift.runs}),
            json!(drift.mean),
            json!(drift.stderr),
            &manifest,
        ));
    }
    for (run_id, r) in runs.iter().enumerate() {
        let check = r.displacement_identity(sim.dt);
        records.push(record(
            "displacement_identity",
            json!({
                "run_id": run_id,
                "bound": check.bound,
                "holds": check.holds(),
                "max_speed": r.max_speed(),
            }),
            json!(check.error),
            Value::Null,
            &manifest,
        ));
    }

    match cfg.output.format {
        OutputFormat::Csv => {
            let mut body = Vec::new();
            write_trajectory_csv(&runs, &mut body)?;
            write_csv(out, &manifest, &body)?;
            let drift_path = out.map(|p| sibling(p, ".drift.jsonl"));
            if let Some(path) = drift_path {
                write_jsonl(Some(&path), &manifest, &records)?;
            }
        }
        OutputFormat::Jsonl => write_jsonl(out, &manifest, &records)?,
    }
    Ok(exit::OK)
}

fn observable(cfg: &ExperimentConfig, model: &Arc<SpectrumModel>, delta: f64) -> Result<Observable, CommandError> {
    Ok(match cfg.probe.observable {
        ObservableName::TanhNormSq => Observable::TanhNormSq,
        ObservableName::VelocityAtOrigin => Observable::VelocityAtOrigin {
            component: cfg.probe.component,
        },
        ObservableName::Constant => Observable::Constant(cfg.probe.value),
        ObservableName::IndicatorBall => Observable::indicator(FourierField::zeros(model), delta)?,
    })
}

fn ergodic(cfg: &ExperimentConfig, out: Option<&Path>, started: u64) -> Outcome {
    let model = build_model(cfg)?;
    let sim = &cfg.simulation;
    let p = &cfg.probe;
    let seed = cfg.seed();
    let rms = model.stationary_mean_square_norm().sqrt();
    let delta = p.delta.unwrap_or(2.0 * rms);
    let eps = p.eps.unwrap_or(3.0 * rms);
    let psi = observable(cfg, &model, delta)?;
    let ensemble = sim.ensemble.max(2);
    let zero = FourierField::zeros(&model);
    let manifest = RunManifest::new("ergodic", cfg, ensemble, started)
        .with_note(SPECTRUM_NOTE)
        .with_note("liminf proxy: minimum of sliding-window averages over the second half of each run")
        .with_note("e-property: shared-noise coupling, an upper-bound diagnostic");
    let mut records = Vec::new();

    for kind in &p.probes {
        match kind {
            ProbeKind::Report => {
                let rep = ergodic_report(
                    &model,
                    &ReportParams {
                        horizon: sim.horizon,
                        dt: sim.dt,
                        record_every: sim.record_every,
                        ensemble: sim.ensemble,
                        psi: psi.clone(),
                        center: None,
                        delta,
                    },
                    seed,
                )?;
                records.push(record(
                    "ergodic_report",
                    json!({
                        "T": rep.horizon,
                        "observable": psi.name(),
                        "runs": rep.runs,
                        "delta": delta,
                        "occupation_fraction": rep.occupation_fraction.value,
                        "occupation_stderr": rep.occupation_fraction.stderr,
                        "window_min": rep.window_min,
                        "liminf_proxy": true,
                    }),
                    json!(rep.q_t_average.value),
                    json!(rep.q_t_average.stderr),
                    &manifest,
                ));
            }
            ProbeKind::Moment => {
                let grid = ((sim.horizon / sim.dt).round() as usize).max(1);
                for &r in &p.radii {
                    for &n in &p.n {
                        let scan = moment_scan(
                            &model,
                            &MomentScanParams {
                                start: MomentStart::Radius(r),
                                order: n,
                                horizon: sim.horizon,
                                ensemble,
                                grid,
                            },
                            seed,
                        )?;
                        records.push(record(
                            "moment_scan",
                            json!({
                                "R": r,
                                "n": n,
                                "T": sim.horizon,
                                "settled": scan.settled.value,
                                "settled_stderr": scan.settled.stderr,
                                "stationary": scan.stationary,
                                "settled_relative_gap": (scan.settled.value - scan.stationary).abs() / scan.stationary,
                            }),
                            json!(scan.time_max),
                            Value::Null,
                            &manifest,
                        ));
                    }
                }
            }
            ProbeKind::Stability => {
                let est = stability_probe(
                    &model,
                    &zero,
                    &StabilityParams {
                        eps,
                        horizon: sim.horizon,
                        dt: sim.dt,
                        ensemble: sim.ensemble,
                    },
                    seed,
                )?;
                records.push(record(
                    "stability",
                    json!({"eps": eps, "T": sim.horizon, "start": "zero"}),
                    json!(est.value),
                    json!(est.stderr),
                    &manifest,
                ));
            }
            ProbeKind::EProperty => {
                let rep = e_property_probe(
                    &model,
                    &zero,
                    &EPropertyParams {
                        offsets: p.offsets.clone(),
                        psi: psi.clone(),
                        horizon: sim.horizon,
                        dt: sim.dt,
                        record_every: sim.record_every,
                        ensemble,
                    },
                    seed,
                )?;
                for ((h, d), s) in rep.offsets.iter().zip(&rep.d).zip(&rep.sigma) {
                    records.push(record(
                        "e_property",
                        json!({"h": h, "observable": psi.name(), "lipschitz": psi.lipschitz()}),
                        json!(d),
                        json!(s),
                        &manifest,
                    ));
                }
                records.push(record(
                    "e_property_monotone",
                    json!({"sigmas": 3.0}),
                    json!(rep.decreasing_within(3.0)),
                    Value::Null,
                    &manifest,
                ));
            }
            ProbeKind::Lln => {
                let rep = lln_test(
                    &model,
                    &psi,
                    &LlnParams {
                        horizons: p.horizons.clone(),
                        dt: sim.dt,
                        record_every: sim.record_every,
                        ensemble,
                    },
                    seed,
                )?;
                for j in 0..rep.horizons.len() {
                    records.push(record(
                        "lln",
                        json!({
                            "T": rep.horizons[j],
                            "observable": psi.name(),
                            "mean": rep.means[j],
                            "ratio_to_previous": if j > 0 { json!(rep.ratios[j - 1]) } else { Value::Null },
                        }),
                        json!(rep.variances[j]),
                        json!(rep.variance_stderr[j]),
                        &manifest,
                    ));
                }
            }
        }
    }
    write_jsonl(out, &manifest, &records)?;
    Ok(exit::OK)
}

fn csv_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn chain_cmd(cfg: &ExperimentConfig, out: Option<&Path>, started: u64) -> Outcome {
    let p = &cfg.probe;
    let seed = cfg.seed();
    let f = BoundedFn::tanh();
    let mut manifest = RunManifest::new("chain", cfg, p.chain_x.len(), started)
        .with_note("kernel: deterministic branch x -> T(x) applied to every x < 1, gap (-1, 1) visits flagged")
        .with_note(format!("f: {}", f.label()));

    let mut rows = String::from("x,n,closed,exact,mc,mc_stderr,H_n\n");
    let mut records = Vec::new();
    for (i, &x) in p.chain_x.iter().enumerate() {
        let mc = chain::pn_monte_carlo_profile(x, p.chain_n, &f, p.chain_paths, tracerflow_core::rng::derive_seed(seed, i as u64))?;
        let h = if x >= 1.0 { Some(chain::h_g_values(x, p.chain_n)?.0) } else { None };
        let dist = chain::distribution(x, p.chain_n)?;
        for n in 1..=p.chain_n {
            let exact = chain::pn_exact(x, n, &f)?;
            let closed = if x >= 1.0 { Some(chain::pn_closed(x, n, &f)?) } else { None };
            let h_n = h.as_ref().map(|h| h[n]);
            rows.push_str(&format!(
                "{x},{n},{},{exact},{},{},{}\n",
                csv_cell(closed),
                mc[n].0,
                mc[n].1,
                csv_cell(h_n)
            ));
            records.push(record(
                "chain_table",
                json!({"x": x, "n": n, "closed": closed, "mc": mc[n].0, "mc_stderr": mc[n].1, "H_n": h_n}),
                json!(exact),
                Value::Null,
                &manifest,
            ));
        }
        manifest = manifest.with_note(format!("gap_mass x={x} n={} {}", p.chain_n, dist.gap_mass()));

        for &t in &p.poisson_t {
            let v = chain::pt_poisson_detailed(x, t, &f, p.poisson_tol)?;
            records.push(record(
                "pt_poisson",
                json!({"x": x, "t": t, "tol": p.poisson_tol, "terms": v.terms, "tail_mass": v.tail_mass}),
                json!(v.value),
                Value::Null,
                &manifest,
            ));
        }
        if x >= 1.0 {
            let probe = chain::chain_probes(&ChainProbeParams {
                x,
                n_max: p.chain_n.min(chain::MAX_PROBE_HORIZON),
                radius: p.chain_radius,
                ys: p.chain_offsets.iter().map(|d| x + d).collect(),
                f: f.clone(),
                escape_steps: p.chain_escape_steps,
                mc_paths: p.chain_paths,
                seed: tracerflow_core::rng::derive_seed(seed, i as u64),
            })?;
            for row in &probe.continuity {
                records.push(record(
                    "chain_continuity",
                    json!({"x": x, "y": row.y}),
                    json!(row.sup_diff),
                    Value::Null,
                    &manifest,
                ));
            }
            let ladder_error = probe.ladder.iter().map(|r| (r.exact - r.h_n).abs()).fold(0.0, f64::max);
            records.push(record(
                "chain_ladder",
                json!({"x": x, "n_max": probe.ladder.len() - 1, "max_abs_difference_to_H_n": ladder_error}),
                json!(probe.ladder.last().map(|r| r.exact)),
                Value::Null,
                &manifest,
            ));
            let e = probe.escape;
            records.push(record(
                "chain_escape",
                json!({
                    "x": x,
                    "R": e.radius,
                    "steps": e.steps,
                    "exact": e.exact,
                    "exact_ladder": e.exact_ladder,
                    "re_escape": e.re_escape,
                    "mc_ladder_fraction": e.mc_ladder_fraction,
                    "h_infinity": e.h_infinity,
                    "gap_mass": probe.gap_mass,
                }),
                json!(e.mc_fraction),
                json!(e.mc_stderr),
                &manifest,
            ));
        }
    }
    match cfg.output.format {
        OutputFormat::Csv => {
            write_csv(out, &manifest, rows.as_bytes())?;
            if let Some(path) = out {
                write_jsonl(Some(&sibling(path, ".probes.jsonl")), &manifest, &records)?;
            }
        }
        OutputFormat::Jsonl => write_jsonl(out, &manifest, &records)?,
    }
    Ok(exit::OK)
}
