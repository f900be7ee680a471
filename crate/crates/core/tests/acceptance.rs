//! Acceptance run: every criterion at its stated tolerance, one PASS/FAIL
//! line each. Lines go straight to stdout so they show without --nocapture.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use vvrf::bounds::{bernstein_from_bounded, bernstein_tail};
use vvrf::burgers::{solve_burgers, REFERENCE_VELOCITY, solve_burgers_snapshots, BurgersConfig};
use vvrf::dataset::Dataset;
use vvrf::features::{apply_feature, FeatureConfig, RfModel};
use vvrf::grf::{sample_grf, MaternSpec};
use vvrf::grid::{l2_norm_sq, quadrature_weight, GridFunction};
use vvrf::harness::oracle::{oracle_setting, oracle_source};
use vvrf::harness::verify::{
    APPROXIMATOR, COEFFICIENT_NORM, EMPIRICAL_RISK, GENERALIZATION_GAP, POPULATION_RISK,
};
use vvrf::harness::{
    fit_with_rule, prepare_pool, run_oracle, run_sweep_on, verify_theory, OracleConfig, Pool, SweepConfig,
    VerifyConfig, VerifyScope,
};
use vvrf::rfrr::{empirical_risk, train_with, TrainOptions};
use vvrf::rkhs::{regularized_rkhs_error, source_condition_instance, KernelSpectrum};
use vvrf::seed;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, started: Instant, outcome: &Outcome) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "criterion {id} {name:<28} {}  {}  ({:.1} s)",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail,
        started.elapsed().as_secs_f64()
    );
}

fn rate_sweep_slope(cfg: &SweepConfig, pool: &Pool, lo: f64, hi: f64) -> Outcome {
    let result = run_sweep_on(cfg, pool).unwrap();
    let failed = result.failures().count();
    let p = cfg.grids()[0];
    match fit_with_rule(&result.medians(p), cfg.window) {
        Ok(fit) => Outcome {
            pass: failed == 0 && (lo..=hi).contains(&fit.slope),
            detail: format!(
                "slope {:.3} in [{lo}, {hi}] over points {:?}, r² {:.3}, {failed} failed cells",
                fit.slope, fit.window, fit.r_squared
            ),
        },
        Err(e) => Outcome {
            pass: false,
            detail: format!("no slope: {e}"),
        },
    }
}

fn m_rate(pool: &Pool) -> Outcome {
    rate_sweep_slope(&SweepConfig::m_sweep_default(), pool, -1.3, -0.7)
}

fn n_rate(pool: &Pool) -> Outcome {
    rate_sweep_slope(&SweepConfig::n_sweep_default(), pool, -0.75, -0.3)
}

fn resolution(pool: &Pool) -> Outcome {
    let cfg = SweepConfig::resolution_sweep_default();
    let result = run_sweep_on(&cfg, pool).unwrap();
    let medians: Vec<f64> = result.curve().iter().map(|c| c.median).collect();
    let hi = medians.iter().copied().fold(f64::MIN, f64::max);
    let lo = medians.iter().copied().fold(f64::MAX, f64::min);
    let ratio = hi / lo;
    Outcome {
        pass: medians.len() == cfg.grids().len() && ratio <= 1.5 && result.failures().count() == 0,
        detail: format!("max/min median ratio {ratio:.4} <= 1.5 over [{}]", medians.iter().map(|m| format!("{m:.3e}")).collect::<Vec<_>>().join(", ")),
    }
}

/// Dense objective minimized by least squares on the stacked system
/// `[X; sqrt(λ/M) I] α = [t; 0]`, with `X` built feature by feature.
fn dense_solve(data: &Dataset, thetas: &[GridFunction], cfg: &FeatureConfig, lambda: f64) -> Vec<f64> {
    let (n, m, p) = (data.len(), thetas.len(), data.p());
    let rows = n * p;
    let w = (quadrature_weight(p) / n as f64).sqrt();
    let mut a = DMatrix::zeros(rows + m, m);
    let mut b = DVector::zeros(rows + m);
    for (i, (u, y)) in data.pairs().enumerate() {
        for (j, theta) in thetas.iter().enumerate() {
            let phi = apply_feature(u, theta, cfg).unwrap();
            for (k, v) in phi.values().iter().enumerate() {
                a[(i * p + k, j)] = w * v / m as f64;
            }
        }
        for (k, v) in y.values().iter().enumerate() {
            b[i * p + k] = w * v;
        }
    }
    let reg = (lambda / m as f64).sqrt();
    for j in 0..m {
        a[(rows + j, j)] = reg;
    }
    let qr = a.qr();
    let rhs = qr.q().transpose() * b;
    let coef = qr.r().solve_upper_triangular(&rhs).expect("full column rank");
    coef.iter().copied().collect()
}

fn solver_oracle() -> Outcome {
    let cfg = FeatureConfig::default();
    let mut worst_alpha = 0.0f64;
    let mut worst_grad = 0.0f64;
    for inst in 0..20u64 {
        let mut rng = seed::stream(seed::domain(11, "instances"), inst);
        let m = rng.random_range(1..=16usize);
        let n = rng.random_range(1..=16usize);
        let p = [8usize, 16, 32][rng.random_range(0..3)];
        let lambda = 10f64.powf(rng.random_range(-4.0..-1.0));
        let inputs: Vec<GridFunction> = (0..n)
            .map(|_| sample_grf(&MaternSpec::benchmark_input(), p, &mut rng).unwrap())
            .collect();
        let outputs: Vec<GridFunction> = (0..n)
            .map(|_| sample_grf(&MaternSpec::benchmark_input(), p, &mut rng).unwrap())
            .collect();
        let thetas: Vec<GridFunction> = (0..m)
            .map(|_| sample_grf(&MaternSpec::feature_default(), p, &mut rng).unwrap())
            .collect();
        let data = Dataset::new(p, inputs, outputs, Default::default()).unwrap();
        let (model, _) = train_with(&data, &thetas, &cfg, lambda, TrainOptions::default()).unwrap();
        let dense = dense_solve(&data, &thetas, &cfg, lambda);
        let alpha = model.alpha();
        let diff: f64 = alpha.iter().zip(&dense).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let size: f64 = dense.iter().map(|b| b * b).sum::<f64>().sqrt();
        worst_alpha = worst_alpha.max(diff / size.max(f64::MIN_POSITIVE));

        // central differences of the objective evaluated through predictions
        let objective = |a: &[f64]| {
            let probe = RfModel::new(cfg, thetas.clone(), a.to_vec(), lambda).unwrap();
            empirical_risk(&probe, &data, lambda).unwrap()
        };
        let scale = data.outputs().iter().map(l2_norm_sq).sum::<f64>() / n as f64;
        let h = 1e-4 * (1.0 + alpha.iter().map(|a| a.abs()).fold(0.0, f64::max));
        for j in 0..m {
            let mut plus = alpha.to_vec();
            let mut minus = alpha.to_vec();
            plus[j] += h;
            minus[j] -= h;
            let g = (objective(&plus) - objective(&minus)) / (2.0 * h);
            worst_grad = worst_grad.max(g.abs() / scale);
        }
    }
    Outcome {
        pass: worst_alpha <= 1e-9 && worst_grad <= 1e-6,
        detail: format!(
            "max relative alpha gap {worst_alpha:.2e} <= 1e-9, max |gradient|/scale {worst_grad:.2e} <= 1e-6"
        ),
    }
}

fn approximator_coverage() -> Outcome {
    let mut cfg = VerifyConfig::at_gates(0.05, 0.1, 200, VerifyScope::Approximator);
    cfg.n = 256;
    let report = verify_theory(&cfg).unwrap();
    let c = report.check(APPROXIMATOR).unwrap();
    Outcome {
        pass: c.lhs.len() == 200 && c.coverage() >= 0.9,
        detail: format!(
            "coverage {:.3} >= 0.9 at M = {}, worst {:.3e} vs {:.3e}",
            c.coverage(),
            cfg.m,
            c.max_lhs(),
            c.rhs
        ),
    }
}

fn bound_coverage() -> Outcome {
    let cfg = VerifyConfig::at_gates(0.05, 0.1, 100, VerifyScope::Full);
    let report = verify_theory(&cfg).unwrap();
    let need = 1.0 - cfg.delta;
    let mut pass = true;
    let mut parts = Vec::new();
    for name in [POPULATION_RISK, EMPIRICAL_RISK, COEFFICIENT_NORM, GENERALIZATION_GAP] {
        let c = report.check(name).unwrap();
        pass &= c.lhs.len() == 100 && c.coverage() >= need;
        parts.push(format!("{name} {:.2}", c.coverage()));
    }
    Outcome {
        pass,
        detail: format!("coverage >= {need} at (M, N) = ({}, {}): {}", cfg.m, cfg.n, parts.join(", ")),
    }
}

fn rkhs_determinism() -> Outcome {
    let cfg = OracleConfig::default();
    let points = run_oracle(&cfg).unwrap();
    let worst_excess = points.iter().map(|p| p.error - p.bound).fold(f64::MIN, f64::max);
    let setting = oracle_setting(&cfg).unwrap();
    let spec = KernelSpectrum::new(&setting).unwrap();
    let f = oracle_source(&cfg, &spec).unwrap();
    let mut worst_gap = 0.0f64;
    for &r in &cfg.rs {
        let g = source_condition_instance(&spec, &f, r).unwrap().g;
        for &t in &cfg.varthetas {
            let closed = regularized_rkhs_error(&spec, &g, t).unwrap();
            let direct = setting.direct_ridge_error(&g, t).unwrap();
            worst_gap = worst_gap.max((closed - direct).abs() / direct.abs().max(f64::MIN_POSITIVE));
        }
    }
    Outcome {
        pass: points.len() == 24 && worst_excess <= 1e-10 && worst_gap <= 1e-9,
        detail: format!(
            "{} (r, vartheta) pairs, max error - bound {worst_excess:.2e} <= 1e-10, closed form vs ridge {worst_gap:.2e} <= 1e-9",
            points.len()
        ),
    }
}

fn bernstein_coverage() -> Outcome {
    let (n, delta, trials) = (100u64, 0.1, 10_000usize);
    let (sigma_sq, b) = bernstein_from_bounded(1.0, (1.0f64 / 12.0).sqrt(), false);
    let tail = bernstein_tail(b, sigma_sq, n, delta);
    let family = seed::domain(5, "bernstein");
    let violations = (0..trials)
        .filter(|&t| {
            let mut rng = seed::stream(family, t as u64);
            let mean = (0..n).map(|_| rng.random::<f64>()).sum::<f64>() / n as f64;
            (mean - 0.5).abs() > tail
        })
        .count();
    let rate = violations as f64 / trials as f64;
    let limit = delta + 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt();
    Outcome {
        pass: rate <= limit,
        detail: format!("violation rate {rate:.4} <= {limit:.4} (tail {tail:.4})"),
    }
}

fn burgers_validation() -> Outcome {
    let cfg = BurgersConfig::default();

    let mut u0 = sample_grf(&MaternSpec::input_default(), 64, &mut seed::stream(3, 0)).unwrap();
    u0 = u0.add(&GridFunction::constant(0.25, 64)).unwrap();
    let times: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
    let drift = solve_burgers_snapshots(&u0, &cfg, &times)
        .unwrap()
        .iter()
        .map(|s| (s.mean() - u0.mean()).abs())
        .fold(0.0, f64::max);

    let mut decay = 0.0f64;
    for k in 1..=3 {
        let u = GridFunction::from_fn(64, |x| 1e-6 * (k as f64 * x).sin()).unwrap();
        let out = solve_burgers(&u, &cfg).unwrap();
        let expected = (-cfg.viscosity * (k * k) as f64 * cfg.t_final).exp();
        let exact = u.scale(expected);
        decay = decay.max((l2_norm_sq(&out.sub(&exact).unwrap()) / l2_norm_sq(&exact)).sqrt());
    }

    // step counts double exactly; the coarsest sits at the stability limit
    let u = sample_grf(&MaternSpec::input_default(), 64, &mut seed::stream(3, 1)).unwrap();
    let limit = cfg.max_stable_dt(u.max_abs().max(REFERENCE_VELOCITY));
    let steps = (cfg.t_final / limit).ceil();
    let run = |s: f64| solve_burgers(&u, &BurgersConfig { dt: cfg.t_final / s, ..cfg }).unwrap();
    let (a, b, c) = (run(steps), run(2.0 * steps), run(4.0 * steps));
    let e1 = l2_norm_sq(&a.sub(&b).unwrap()).sqrt();
    let e2 = l2_norm_sq(&b.sub(&c).unwrap()).sqrt();
    let order = (e1 / e2).log2();

    Outcome {
        pass: drift <= 1e-10 && decay <= 0.01 && order >= 2.0,
        detail: format!(
            "mean drift {drift:.1e} <= 1e-10, sine decay error {decay:.1e} <= 1e-2, dt-halving order {order:.2} >= 2"
        ),
    }
}

#[test]
fn acceptance_criteria() {
    let mut failed = Vec::new();
    let mut check = |id: usize, name: &str, run: &mut dyn FnMut() -> Outcome| {
        let started = Instant::now();
        let outcome = run();
        report(id, name, started, &outcome);
        if !outcome.pass {
            failed.push(id);
        }
    };

    let started = Instant::now();
    let m_cfg = SweepConfig::m_sweep_default();
    let pool = prepare_pool(&m_cfg).unwrap();
    let _ = writeln!(
        std::io::stdout().lock(),
        "shared Burgers pool: {} training and {} test pairs on p = {} ({:.1} s)",
        pool.train.len(),
        pool.test.len(),
        pool.p(),
        started.elapsed().as_secs_f64()
    );
    for other in [SweepConfig::n_sweep_default(), SweepConfig::resolution_sweep_default()] {
        assert_eq!(
            (other.seed, other.pool_size, other.test_size, other.data_grid(), &other.data),
            (m_cfg.seed, m_cfg.pool_size, m_cfg.test_size, m_cfg.data_grid(), &m_cfg.data),
            "sweeps are expected to share one data pool"
        );
    }

    check(1, "M-rate", &mut || m_rate(&pool));
    check(2, "N-rate", &mut || n_rate(&pool));
    check(3, "resolution independence", &mut || resolution(&pool));
    check(4, "solver oracle", &mut solver_oracle);
    check(5, "approximator coverage", &mut approximator_coverage);
    check(6, "bound coverage", &mut bound_coverage);
    check(7, "RKHS determinism", &mut rkhs_determinism);
    check(8, "Bernstein coverage", &mut bernstein_coverage);
    check(9, "Burgers solver", &mut burgers_validation);

    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
