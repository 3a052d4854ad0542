//! Acceptance run on the default model: one PASS/FAIL line per criterion.
//! Built with `harness = false`, so the lines print under plain `cargo test`.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;

use tracerflow::output::body_of;
use tracerflow_core::chain::{self, BoundedFn, ChainProbeParams};
use tracerflow_core::ergodic::stats::ks_two_sample;
use tracerflow_core::ergodic::{self, EPropertyParams, MomentScanParams, MomentStart, Observable};
use tracerflow_core::field::{
    covariance_diagnostics, ou_exact_step, sample_stationary, y_flow_step, z_galerkin_step, CovarianceParams,
};
use tracerflow_core::rng;
use tracerflow_core::tracer::{self, shift_field, LagrangianParams};
use tracerflow_core::{build_power_law_spectrum, FourierField, OUState, PowerLawParams, SpectrumModel, Wavevector};

const SEED: u64 = 20240601;

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn model(truncation: u32) -> Arc<SpectrumModel> {
    Arc::new(
        build_power_law_spectrum(&PowerLawParams {
            truncation,
            ..Default::default()
        })
        .expect("default model"),
    )
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

/// `|k|^{-14}(I − k kᵀ/|k|²)`, the default incompressible spectrum.
fn energy_oracle(k: &Wavevector) -> [[f64; 2]; 2] {
    let c = k.components();
    let (a, b) = (f64::from(c[0]), f64::from(c[1]));
    let n2 = a * a + b * b;
    let s = n2.powf(-7.0);
    [[s * (1.0 - a * a / n2), -s * a * b / n2], [-s * a * b / n2, s * (1.0 - b * b / n2)]]
}

fn lattice_sum(power: f64) -> f64 {
    let mut s = 0.0;
    for a in -8i32..=8 {
        for b in -8i32..=8 {
            if a != 0 || b != 0 {
                s += f64::from(a * a + b * b).powf(power);
            }
        }
    }
    s
}

fn attractor_decay() -> Outcome {
    let m = model(8);
    let (dt, steps, radius) = (1e-3, 5000usize, 5.0);
    let worst: Vec<(f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|s| {
            let mut stream = rng::run_stream(SEED, s);
            let f = sample_stationary(&m, &mut stream);
            let y0 = f.scaled(radius / f.norm());
            let mut y = y0.clone();
            let (mut rel, mut excess) = (0.0_f64, f64::NEG_INFINITY);
            for step in 1..=steps {
                y = y_flow_step(&y, dt).expect("finite flow");
                let t = step as f64 * dt;
                for (i, mode) in m.modes().iter().enumerate() {
                    let decay = (-mode.k.norm_sq() * t).exp();
                    for (a, b) in y.coeff(i).iter().zip(y0.coeff(i)) {
                        let want = decay * b.norm();
                        if want >= f64::MIN_POSITIVE {
                            rel = rel.max(((a.norm() - want) / want).abs());
                        }
                    }
                }
                excess = excess.max(y.norm() - (-t).exp() * y0.norm());
            }
            (rel, excess)
        })
        .collect();
    let rel = worst.iter().map(|w| w.0).fold(0.0, f64::max);
    let excess = worst.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max);
    Outcome {
        pass: rel < 1e-6 && excess <= 1e-9,
        detail: format!("max relative error {rel:.2e}, max norm excess {excess:.2e}"),
    }
}

fn ou_covariance() -> Outcome {
    let m = model(8);
    let params = CovarianceParams::default();
    let diag = covariance_diagnostics(&m, &params, SEED).expect("diagnostics");
    let samples: Vec<FourierField> = (0..params.samples as u64)
        .into_par_iter()
        .map(|i| sample_stationary(&m, &mut rng::run_stream(SEED ^ 0x5eed, i)))
        .collect();
    let n = samples.len() as f64;
    let mut pass = diag.len() == 10;
    let (mut worst_cov, mut worst_lag) = (0.0_f64, 0.0_f64);
    for mode in &diag {
        let i = m.index_of(&mode.k).expect("mode in model");
        let e = energy_oracle(&mode.k);
        let mut c = [[Complex64::new(0.0, 0.0); 2]; 2];
        for f in &samples {
            let v = f.coeff(i);
            for (r, row) in c.iter_mut().enumerate() {
                for (col, x) in row.iter_mut().enumerate() {
                    *x += v[r] * v[col].conj();
                }
            }
        }
        let (mut diff, mut norm) = (0.0, 0.0);
        for r in 0..2 {
            for col in 0..2 {
                diff += (c[r][col] / n - e[r][col]).norm_sqr();
                norm += e[r][col] * e[r][col];
            }
        }
        let cov_err = (diff / norm).sqrt();
        worst_cov = worst_cov.max(cov_err);
        pass &= cov_err < 0.05;
        for lag in &mode.lags {
            let expected = (-mode.k.norm_sq() * lag.lag).exp();
            let rel = (lag.estimate - expected).abs() / expected;
            worst_lag = worst_lag.max(rel);
            pass &= rel < 0.05;
        }
    }
    let top: Vec<f64> = diag.iter().map(|d| d.k.norm_sq()).collect();
    pass &= top == [1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 4.0, 4.0];
    Outcome {
        pass,
        detail: format!("worst covariance error {worst_cov:.4}, worst lag error {worst_lag:.4}"),
    }
}

fn equality_in_law() -> Outcome {
    let m = model(8);
    let params = LagrangianParams {
        record_every: 10,
        ..LagrangianParams::new(5.0, 0.01)
    };
    let mut pathwise = 0.0_f64;
    for run in 0..4 {
        tracer::run_lagrangian_observed(&m, &params, rng::derive_seed(SEED, run), |tr, ou| {
            let z = shift_field(&ou.field, &tr.displacement).expect("shift");
            pathwise = pathwise.max((z.norm() - ou.field.norm()).abs());
        })
        .expect("run");
    }

    let small = model(4);
    let start = {
        let f = sample_stationary(&small, &mut rng::stream(SEED));
        f.scaled(1.0 / f.norm())
    };
    let (dt, steps, samples) = (1e-3, 1000usize, 2000u64);
    let pairs: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut stream = rng::run_stream(SEED, i);
            let mut z = start.clone();
            for _ in 0..steps {
                z = z_galerkin_step(&z, dt, &mut stream).expect("galerkin step");
            }
            let v = ou_exact_step(&OUState::new(start.clone()), dt * steps as f64, &mut stream).expect("ou step");
            (z.norm(), v.field.norm())
        })
        .collect();
    let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (d, p) = ks_two_sample(&a, &b);
    Outcome {
        pass: pathwise <= 1e-12 && p > 0.01,
        detail: format!("pathwise max |‖Z‖−‖V‖| {pathwise:.2e}; KS D={d:.4} p={p:.3}"),
    }
}

fn displacement_identity() -> Outcome {
    let m = model(8);
    let dt = 0.05;
    let records = tracer::run_ensemble(&m, &LagrangianParams::new(10.0, dt), SEED, 100).expect("ensemble");
    let checks: Vec<_> = records.iter().map(|r| r.displacement_identity(dt)).collect();
    let failures = checks.iter().filter(|c| !c.holds()).count();
    let worst = checks.iter().map(|c| c.error / c.bound).fold(0.0, f64::max);
    Outcome {
        pass: records.len() == 100 && failures == 0,
        detail: format!("dt={dt}, T=10: {failures} of 100 runs over the bound, worst error/bound {worst:.3}"),
    }
}

fn stokes_drift() -> Outcome {
    let m = model(8);
    let params = LagrangianParams {
        record_every: 50,
        ..LagrangianParams::new(200.0, 0.02)
    };
    let records = tracer::run_ensemble(&m, &params, SEED, 100).expect("ensemble");
    let drift = tracer::stokes_drift_estimate(&records).expect("drift");
    let centred = drift.mean.iter().zip(&drift.stderr).all(|(mu, se)| mu.abs() < 3.0 * se);
    let variance_at = |t: f64| -> f64 {
        let per_run: Vec<Vec<f64>> = records
            .iter()
            .map(|r| {
                let i = r.times.iter().position(|s| (s - t).abs() < 1e-9).expect("recorded time");
                r.displacements[i].iter().zip(&r.displacements[0]).map(|(b, a)| (b - a) / t).collect()
            })
            .collect();
        let n = per_run.len() as f64;
        (0..2)
            .map(|j| {
                let mean = per_run.iter().map(|v| v[j]).sum::<f64>() / n;
                per_run.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            })
            .sum()
    };
    let (v50, v200) = (variance_at(50.0), variance_at(200.0));
    Outcome {
        pass: centred && v200 <= 0.6 * v50,
        detail: format!(
            "mean {:?} stderr {:?}; var(T=200)/var(T=50) = {:.3}",
            drift.mean.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
            drift.stderr.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
            v200 / v50
        ),
    }
}

fn e_property() -> Outcome {
    let m = model(8);
    let params = EPropertyParams {
        offsets: vec![1.0, 0.5, 0.25, 0.125, 0.0],
        psi: Observable::TanhNormSq,
        horizon: 2.0,
        dt: 0.01,
        record_every: 10,
        ensemble: 200,
    };
    let rep = ergodic::e_property_probe(&m, &FourierField::zeros(&m), &params, SEED).expect("probe");
    let zero_exact = rep.d[4] == 0.0;
    let mut monotone = true;
    for j in 0..3 {
        let sigma = rep.sigma[j].hypot(rep.sigma[j + 1]);
        monotone &= rep.d[j + 1] <= rep.d[j] + 3.0 * sigma;
    }
    Outcome {
        pass: zero_exact && monotone,
        detail: format!(
            "D = {:?}",
            rep.d.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>()
        ),
    }
}

fn moment_bound() -> Outcome {
    let m = model(8);
    let s1 = lattice_sum(-4.0);
    let oracle = [s1, s1 * s1 + 2.0 * lattice_sum(-8.0)];
    let mut pass = true;
    let mut rows = Vec::new();
    for &r in &[1.0, 10.0] {
        for n in 1..=2u32 {
            let params = MomentScanParams {
                start: MomentStart::Radius(r),
                order: n,
                horizon: 20.0,
                ensemble: 500,
                grid: 100,
            };
            let scan = ergodic::moment_scan(&m, &params, SEED).expect("scan");
            let want = oracle[n as usize - 1];
            let rel = (scan.settled.value - want).abs() / want;
            pass &= scan.time_max.is_finite() && rel < 0.2;
            rows.push(format!("R={r} n={n}: max {:.3e} settled {:.4} vs {want:.4}", scan.time_max, scan.settled.value));
        }
    }
    Outcome {
        pass,
        detail: rows.join("; "),
    }
}

fn counterexample_chain() -> Outcome {
    let f = BoundedFn::tanh();
    let xs = [1.0, 1.5, 2.0];
    let mut notes = Vec::new();

    let mut telescope = 0.0_f64;
    for &x in &xs {
        for n in 0..=40 {
            let (h, g) = chain::h_g_values(x, n).expect("H, G");
            telescope = telescope.max((g.iter().sum::<f64>() + h[n] - 1.0).abs());
        }
    }
    let a = telescope <= 1e-12;
    notes.push(format!("(a) {telescope:.1e}"));

    let mut closed = 0.0_f64;
    for &x in &xs {
        for n in (1..).take_while(|&n| x + n as f64 - 1.0 < 5.0) {
            let c = chain::pn_closed(x, n, &f).expect("closed");
            let e = chain::pn_exact(x, n, &f).expect("exact");
            closed = closed.max((c - e).abs());
        }
    }
    let b = closed <= 1e-14;
    notes.push(format!("(b) {closed:.1e}"));

    let mut worst_z = 0.0_f64;
    for (j, &x) in xs.iter().enumerate() {
        let profile = chain::pn_monte_carlo_profile(x, 40, &f, 100_000, rng::derive_seed(SEED, j as u64)).expect("mc");
        for &n in &[1usize, 2, 5, 10, 20, 40] {
            let exact = chain::pn_exact(x, n, &f).expect("exact");
            let (mean, se) = profile[n];
            worst_z = worst_z.max((mean - exact).abs() / se);
        }
    }
    let c = worst_z < 3.0;
    notes.push(format!("(c) worst |z| {worst_z:.2}"));

    let mut ladder = 0.0_f64;
    for &x in &xs {
        let mut oracle = 1.0;
        for n in 0..=40usize {
            if n > 0 {
                let y = x + (n - 1) as f64;
                oracle *= (-1.0 / (y * y)).exp();
            }
            let exact = chain::distribution(x, n).expect("distribution").ladder_mass();
            ladder = ladder.max((exact - oracle).abs());
        }
    }
    // Σ_{j≥0} (2+j)^{-2} = π²/6 − 1, checked against a long partial sum
    let partial: f64 = (0..2_000_000u64).rev().map(|j| (2.0 + j as f64).powi(-2)).sum::<f64>() + 1.0 / 2_000_001.5;
    let closed_sum = std::f64::consts::PI.powi(2) / 6.0 - 1.0;
    let h_inf = chain::h_infinity(2.0).expect("H_inf");
    let d = ladder <= 1e-14
        && (partial - closed_sum).abs() < 1e-12
        && (h_inf - (-partial).exp()).abs() < 1e-12
        && (h_inf - 0.52470).abs() <= 1e-4;
    notes.push(format!("(d) ladder {ladder:.1e}, H_inf(2) {h_inf:.6}"));

    let probes = chain::chain_probes(&ChainProbeParams {
        x: 1.5,
        n_max: 40,
        radius: 10.0,
        ys: vec![1.6, 1.51, 1.501],
        f: f.clone(),
        escape_steps: 40,
        mc_paths: 1000,
        seed: SEED,
    })
    .expect("probes");
    let sups: Vec<f64> = probes.continuity.iter().map(|r| r.sup_diff).collect();
    let e = sups.windows(2).all(|w| w[1] <= w[0] + 1e-12) && sups[2] < sups[0];
    notes.push(format!("(e) sup diff {:?}", sups.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>()));

    Outcome {
        pass: a && b && c && d && e,
        detail: notes.join("; "),
    }
}

fn run_cli(dir: &Path, sub: &str, threads: usize, tag: &str) -> Vec<String> {
    let out = dir.join(format!("{sub}-{tag}.out"));
    let status = Command::new(env!("CARGO_BIN_EXE_tracerflow"))
        .args([sub, "--config"])
        .arg(dir.join("config.json"))
        .arg("--out")
        .arg(&out)
        .args(["--threads", &threads.to_string()])
        .status()
        .expect("spawn tracerflow");
    assert!(status.success(), "{sub} exited with {status}");
    let mut files = vec![out.clone()];
    for suffix in [".drift.jsonl", ".probes.jsonl"] {
        let mut s = out.as_os_str().to_owned();
        s.push(suffix);
        if Path::new(&s).exists() {
            files.push(s.into());
        }
    }
    files
        .iter()
        .map(|p| body_of(&std::fs::read_to_string(p).expect("output file")))
        .collect()
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = r#"{
        "seed": 424242,
        "simulation": { "T": 2.0, "dt": 0.01, "ensemble": 4, "record_every": 5 },
        "probe": {
            "horizons": [1.0, 2.0], "R": [1.0], "n": [1],
            "chain_n": 12, "chain_paths": 20000, "chain_escape_steps": 30
        }
    }"#;
    std::fs::write(dir.path().join("config.json"), config).expect("write config");
    let mut pass = true;
    let mut compared = 0;
    for sub in ["tracer", "ergodic", "chain"] {
        let reference = run_cli(dir.path(), sub, 1, "a");
        for (threads, tag) in [(1, "b"), (8, "c"), (8, "d")] {
            let other = run_cli(dir.path(), sub, threads, tag);
            pass &= other == reference && reference.iter().all(|b| !b.is_empty());
            compared += reference.len();
        }
    }
    Outcome {
        pass,
        detail: format!("{compared} body comparisons over tracer, ergodic and chain"),
    }
}

fn main() {
    let criteria: [(&str, u64, Check); 9] = [
        ("deterministic attractor decay", 10, attractor_decay),
        ("OU covariance oracle", 60, ou_covariance),
        ("equality in law", 600, equality_in_law),
        ("displacement identity", 600, displacement_identity),
        ("LLN / Stokes drift", 600, stokes_drift),
        ("e-property probe", 600, e_property),
        ("moment bound", 600, moment_bound),
        ("counterexample chain", 60, counterexample_chain),
        ("reproducibility", 600, reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let pass = outcome.pass && within(elapsed, *limit);
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {} {:<30} {} ({:.1}s) {}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
