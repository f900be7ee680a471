//! Monte Carlo coverage of the error bounds in a synthetic well-specified
//! setting where every constant in the bounds is known.
//!
//! The feature measure is uniform over `K` fixed parameter fields
//! ("atoms") and the feature map is normalized, `φ̃ = φ / max(1, ‖φ‖)`, so
//! `‖φ̃‖ ≤ 1`. The truth is `G(u) = Σ_k w_k a_k φ̃(u; θ_k)` with `w_k = 1/K`,
//! whose RKHS norm is `Σ_k w_k a_k²` whenever the atom features are linearly
//! independent, which holds for generic atoms. Noise is multiplicative,
//! `η = ζ G(u)` with `ζ` centered Laplace of scale `s`, so
//! `‖η‖_ψ₁ ≤ s·sup_u ‖G(u)‖`.
//!
//! All risks are quadratic forms in the coefficients, so each trial reduces
//! to `K × K` Gram matrices of the atom features.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    approximator_gate, approximator_rhs, beta_factor, empirical_gates, empirical_risk_rhs,
    generalization_gap_rhs, sample_gates, theorem31_rhs, truncate_coefficients, BoundInputs,
};
use crate::error::{Error, Result};
use crate::features::{FeatureBank, FeatureConfig};
use crate::grf::{sample_grf, MaternSpec};
use crate::grid::{check_power_of_two, quadrature_weight, GridFunction};
use crate::noise::sample_laplace;
use crate::rfrr::NormalSystem;
use crate::seed;

/// Which inequalities a run checks, and therefore which gates it needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyScope {
    /// Only the truncated approximator bound; needs `M ≥ λ⁻¹log(4/δ)`.
    Approximator,
    /// Every bound; needs the population-bound gates.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub lambda: f64,
    pub delta: f64,
    pub trials: usize,
    /// Features per trial.
    pub m: usize,
    /// Training pairs per trial.
    pub n: usize,
    /// Inputs in the fixed sample standing in for the input law.
    pub n_population: usize,
    pub p: usize,
    pub atoms: usize,
    /// `‖G‖_H` of the truth.
    pub rkhs_norm: f64,
    /// Laplace scale of the multiplicative noise; zero for clean data.
    pub noise_scale: f64,
    pub scope: VerifyScope,
    pub seed: u64,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default = "MaternSpec::input_default")]
    pub input: MaternSpec,
    #[serde(default = "MaternSpec::feature_default")]
    pub feature_measure: MaternSpec,
}

impl VerifyConfig {
    /// Smallest sizes meeting the gates of `scope`, on a 32-point grid with
    /// 64 atoms and a unit-norm noiseless truth.
    pub fn at_gates(lambda: f64, delta: f64, trials: usize, scope: VerifyScope) -> Self {
        let (m, n) = required_sizes(lambda, delta, scope);
        Self {
            lambda,
            delta,
            trials,
            m: m as usize,
            n: n as usize,
            n_population: 8192,
            p: 32,
            atoms: 64,
            rkhs_norm: 1.0,
            noise_scale: 0.0,
            scope,
            seed: 0,
            features: FeatureConfig::default(),
            input: MaternSpec::input_default(),
            feature_measure: MaternSpec::feature_default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |msg: String| Err(Error::Config(msg));
        if !(self.lambda > 0.0 && self.lambda < 1.0) || !(self.delta > 0.0 && self.delta < 1.0) {
            return cfg_err("lambda and delta must lie in (0, 1)".into());
        }
        if self.trials == 0 || self.m == 0 || self.n == 0 || self.n_population == 0 || self.atoms == 0 {
            return cfg_err("trials, m, n, n_population and atoms must be positive".into());
        }
        check_power_of_two(self.p).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.rkhs_norm > 0.0 && self.rkhs_norm.is_finite()) {
            return cfg_err("rkhs_norm must be > 0".into());
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return cfg_err("noise_scale must be >= 0".into());
        }
        self.features.validate()?;
        self.input.validate()?;
        self.feature_measure.validate()
    }
}

/// `(M_min, N_min)` for `scope`.
pub fn required_sizes(lambda: f64, delta: f64, scope: VerifyScope) -> (u64, u64) {
    match scope {
        VerifyScope::Approximator => (approximator_gate(lambda, delta), 1),
        VerifyScope::Full => sample_gates(lambda, delta),
    }
}

/// The discrete feature measure and the truth built on it.
#[derive(Debug, Clone)]
pub struct DiscreteTruth {
    bank: FeatureBank,
    /// `a_k`.
    coefficients: Vec<f64>,
}

impl DiscreteTruth {
    pub fn new(cfg: &VerifyConfig) -> Result<Self> {
        let family = seed::domain(cfg.seed, "atoms");
        let atoms: Vec<GridFunction> = (0..cfg.atoms)
            .map(|k| sample_grf(&cfg.feature_measure, cfg.p, &mut seed::stream(family, k as u64)))
            .collect::<Result<_>>()?;
        let mut rng = seed::stream(seed::domain(cfg.seed, "coefficients"), 0);
        let raw: Vec<f64> = (0..cfg.atoms).map(|_| rng.sample(StandardNormal)).collect();
        let norm = (raw.iter().map(|a| a * a).sum::<f64>() / cfg.atoms as f64).sqrt();
        let coefficients = raw.iter().map(|a| a * cfg.rkhs_norm / norm).collect();
        Ok(Self {
            bank: FeatureBank::new(&atoms, &cfg.features)?,
            coefficients,
        })
    }

    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `Σ_k w_k a_k²`.
    pub fn rkhs_norm_sq(&self) -> f64 {
        self.coefficients.iter().map(|a| a * a).sum::<f64>() / self.k() as f64
    }

    /// `(Σ_k w_k |a_k|)²`, an upper bound on `sup_u ‖G(u)‖²`.
    pub fn sup_norm_sq_bound(&self) -> f64 {
        (self.coefficients.iter().map(|a| a.abs()).sum::<f64>() / self.k() as f64).powi(2)
    }

    /// Normalized atom features at `u`, laid out `[k][i]`.
    pub fn features(&self, u: &GridFunction) -> Result<Vec<f64>> {
        let p = u.p();
        let w = quadrature_weight(p);
        let mut block = self.bank.evaluate(u)?;
        for row in block.chunks_exact_mut(p) {
            let norm = (w * row.iter().map(|v| v * v).sum::<f64>()).sqrt();
            if norm > 1.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Ok(block)
    }

    /// `G(u)` from the features at `u`.
    pub fn output(&self, block: &[f64], p: usize) -> Vec<f64> {
        let k = self.k() as f64;
        let mut y = vec![0.0; p];
        for (row, a) in block.chunks_exact(p).zip(&self.coefficients) {
            y.iter_mut().zip(row).for_each(|(yi, v)| *yi += a / k * v);
        }
        y
    }

    pub fn bound_inputs(&self, cfg: &VerifyConfig) -> BoundInputs {
        let g_inf_sq = self.sup_norm_sq_bound();
        BoundInputs::well_specified(
            cfg.lambda,
            cfg.delta,
            self.rkhs_norm_sq().sqrt(),
            cfg.noise_scale * g_inf_sq.sqrt(),
            g_inf_sq,
        )
    }
}

/// Atom Gram matrix and cross moments over a set of inputs.
struct Moments {
    n: usize,
    /// `(1/N) Σ ⟨φ̃_k, φ̃_l⟩`.
    gram: DMatrix<f64>,
    /// `(1/N) Σ ⟨y, φ̃_k⟩` for clean and noisy outputs.
    c_clean: Vec<f64>,
    c_noisy: Vec<f64>,
    yy_clean: f64,
    yy_noisy: f64,
}

fn moments(truth: &DiscreteTruth, inputs: &[GridFunction], zeta: &[f64]) -> Result<Moments> {
    let n = inputs.len();
    let k = truth.k();
    let p = inputs[0].p();
    let w = quadrature_weight(p);
    let blocks: Vec<Vec<f64>> = inputs.par_iter().map(|u| truth.features(u)).collect::<Result<_>>()?;
    // columns are samples × grid points, rows are atoms
    let mut x = DMatrix::<f64>::zeros(k, n * p);
    let mut c_clean = vec![0.0; k];
    let mut c_noisy = vec![0.0; k];
    let (mut yy_clean, mut yy_noisy) = (0.0, 0.0);
    for (s, block) in blocks.iter().enumerate() {
        let y = truth.output(block, p);
        let factor = 1.0 + zeta[s];
        for (j, row) in block.chunks_exact(p).enumerate() {
            let ip: f64 = row.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() * w;
            c_clean[j] += ip;
            c_noisy[j] += factor * ip;
            for (i, v) in row.iter().enumerate() {
                x[(j, s * p + i)] = *v;
            }
        }
        let yy = w * y.iter().map(|v| v * v).sum::<f64>();
        yy_clean += yy;
        yy_noisy += factor * factor * yy;
    }
    let inv_n = 1.0 / n as f64;
    let gram = (&x * x.transpose()) * (w * inv_n);
    let gram = (&gram + gram.transpose()) * 0.5;
    Ok(Moments {
        n,
        gram,
        c_clean: c_clean.into_iter().map(|v| v * inv_n).collect(),
        c_noisy: c_noisy.into_iter().map(|v| v * inv_n).collect(),
        yy_clean: yy_clean * inv_n,
        yy_noisy: yy_noisy * inv_n,
    })
}

impl Moments {
    fn system(&self, picks: &[usize], noisy: bool) -> Result<NormalSystem> {
        let m = picks.len();
        let mut a = vec![0.0; m * m];
        for (i, &ki) in picks.iter().enumerate() {
            for (j, &kj) in picks.iter().enumerate() {
                a[i * m + j] = self.gram[(ki, kj)];
            }
        }
        let (c, yy) = if noisy {
            (&self.c_noisy, self.yy_noisy)
        } else {
            (&self.c_clean, self.yy_clean)
        };
        NormalSystem::from_parts(self.n, a, picks.iter().map(|&k| c[k]).collect(), yy)
    }
}

/// Unregularized risk as a quadratic form, without the clamp at zero so
/// differences of risks stay exact.
struct Quadratic {
    constant: f64,
    linear: DVector<f64>,
    quadratic: DMatrix<f64>,
}

impl Quadratic {
    fn of_risk(m: &Moments, picks: &[usize]) -> Self {
        let mm = picks.len() as f64;
        Self {
            constant: m.yy_clean,
            linear: DVector::from_iterator(picks.len(), picks.iter().map(|&k| -2.0 * m.c_clean[k] / mm)),
            quadratic: DMatrix::from_fn(picks.len(), picks.len(), |i, j| m.gram[(picks[i], picks[j])] / (mm * mm)),
        }
    }

    fn minus(&self, other: &Quadratic) -> Quadratic {
        Quadratic {
            constant: self.constant - other.constant,
            linear: &self.linear - &other.linear,
            quadratic: &self.quadratic - &other.quadratic,
        }
    }

    fn negated(&self) -> Quadratic {
        Quadratic {
            constant: -self.constant,
            linear: -&self.linear,
            quadratic: -&self.quadratic,
        }
    }

    fn eval(&self, x: &DVector<f64>) -> f64 {
        self.constant + self.linear.dot(x) + x.dot(&(&self.quadratic * x))
    }
}

/// `max_{‖x‖ ≤ r} c + gᵀx + xᵀQx` for symmetric `Q`, by the secular
/// equation of the trust-region subproblem.
pub fn maximize_on_ball(constant: f64, g: &[f64], q: &DMatrix<f64>, r: f64) -> Result<(f64, Vec<f64>)> {
    let quad = Quadratic {
        constant,
        linear: DVector::from_column_slice(g),
        quadratic: q.clone(),
    };
    let x = trust_region_argmax(&quad, r)?;
    Ok((quad.eval(&x), x.iter().copied().collect()))
}

fn trust_region_argmax(f: &Quadratic, r: f64) -> Result<DVector<f64>> {
    let sym = (&f.quadratic + f.quadratic.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Factorization("eigendecomposition did not converge".into()))?;
    let lam = &eig.eigenvalues;
    let gt = eig.eigenvectors.transpose() * &f.linear;
    let top = lam.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = lam.iter().fold(0.0f64, |s, l| s.max(l.abs())).max(f64::MIN_POSITIVE);
    // stationary point of the Lagrangian: x_i = g_i / (2(μ − λ_i))
    let coords = |mu: f64| -> DVector<f64> {
        DVector::from_iterator(
            lam.len(),
            gt.iter().zip(lam.iter()).map(|(g, l)| {
                let d = 2.0 * (mu - l);
                if d > 0.0 {
                    g / d
                } else {
                    0.0
                }
            }),
        )
    };
    let floor = top.max(0.0);
    if top < 0.0 {
        let inner = coords(0.0);
        if inner.norm() <= r {
            return Ok(&eig.eigenvectors * inner);
        }
    }
    let gnorm = gt.norm();
    let lo_mu = floor;
    let mut hi = floor + gnorm / (2.0 * r) + scale * 1e-12 + f64::MIN_POSITIVE;
    let mut lo = lo_mu;
    // near the top eigenvalue the norm may stay below r: the hard case
    let probe = coords(floor + scale * 1e-13);
    if probe.norm() < r && top >= 0.0 {
        let mut x = coords(floor);
        let idx = (0..lam.len()).filter(|&i| lam[i] >= top - scale * 1e-12).collect::<Vec<_>>();
        for &i in &idx {
            x[i] = 0.0;
        }
        let rest = (r * r - x.norm_squared()).max(0.0).sqrt();
        let i = idx[0];
        x[i] = if gt[i] >= 0.0 { rest } else { -rest };
        return Ok(&eig.eigenvectors * x);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if coords(mid).norm() > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(&eig.eigenvectors * coords(hi))
}

/// One inequality's coverage over the trials.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub statement: &'static str,
    pub rhs: f64,
    pub lhs: Vec<f64>,
}

impl CheckOutcome {
    pub fn holds(&self) -> usize {
        self.lhs.iter().filter(|&&v| v <= self.rhs).count()
    }

    pub fn coverage(&self) -> f64 {
        self.holds() as f64 / self.lhs.len() as f64
    }

    pub fn max_lhs(&self) -> f64 {
        self.lhs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn median_lhs(&self) -> f64 {
        let mut v = self.lhs.clone();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub inputs: BoundInputs,
    pub beta: f64,
    pub sample_gates: (u64, u64),
    pub empirical_gates: (u64, u64),
    pub approximator_gate: u64,
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "lambda = {}  delta = {}  M = {}  N = {}  trials = {}  p = {}  atoms = {}",
            c.lambda, c.delta, c.m, c.n, c.trials, c.p, c.atoms
        )?;
        writeln!(
            f,
            "|G|_H = {:.4e}  psi1(eta) <= {:.4e}  |G|_inf^2 <= {:.4e}  beta = {:.4e}",
            self.inputs.rkhs_norm_g, self.inputs.psi1_noise, self.inputs.g_inf_sq, self.beta
        )?;
        writeln!(
            f,
            "gates: population (M, N) >= {:?}  empirical >= {:?}  approximator M >= {}",
            self.sample_gates, self.empirical_gates, self.approximator_gate
        )?;
        writeln!(
            f,
            "{:<22} {:>12} {:>12} {:>12} {:>10}  statement",
            "check", "median lhs", "max lhs", "rhs", "coverage"
        )?;
        for ch in &self.checks {
            writeln!(
                f,
                "{:<22} {:>12.4e} {:>12.4e} {:>12.4e} {:>9.1}%  {}",
                ch.name,
                ch.median_lhs(),
                ch.max_lhs(),
                ch.rhs,
                100.0 * ch.coverage(),
                ch.statement
            )?;
        }
        Ok(())
    }
}

pub const APPROXIMATOR: &str = "approximator_risk";
pub const EMPIRICAL_RISK: &str = "trained_empirical_risk";
pub const COEFFICIENT_NORM: &str = "coefficient_norm";
pub const POPULATION_RISK: &str = "population_risk";
pub const GENERALIZATION_GAP: &str = "generalization_gap";

struct TrialValues {
    approximator: f64,
    empirical: f64,
    norm: f64,
    population: f64,
    gap: f64,
}

/// Runs `cfg.trials` independent draws of features, data and noise and
/// records each inequality's left-hand side.
pub fn verify_theory(cfg: &VerifyConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let (m_min, n_min) = required_sizes(cfg.lambda, cfg.delta, cfg.scope);
    if (cfg.m as u64) < m_min || (cfg.n as u64) < n_min {
        return Err(Error::GatesUnsatisfied {
            m_min,
            n_min,
            m: cfg.m,
            n: cfg.n,
        });
    }
    let truth = DiscreteTruth::new(cfg)?;
    let inputs = truth.bound_inputs(cfg);
    let beta = beta_factor(&inputs);
    let full = cfg.scope == VerifyScope::Full;
    let population = if full {
        let family = seed::domain(cfg.seed, "population");
        let us: Vec<GridFunction> = (0..cfg.n_population)
            .map(|i| sample_grf(&cfg.input, cfg.p, &mut seed::stream(family, i as u64)))
            .collect::<Result<_>>()?;
        Some(moments(&truth, &us, &vec![0.0; us.len()])?)
    } else {
        None
    };
    let trial_family = seed::domain(cfg.seed, "trials");
    let values: Vec<TrialValues> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, &truth, population.as_ref(), beta, seed::stream_seed(trial_family, t as u64)))
        .collect::<Result<_>>()?;
    let collect = |f: fn(&TrialValues) -> f64| values.iter().map(f).collect::<Vec<_>>();
    let mut checks = vec![CheckOutcome {
        name: APPROXIMATOR,
        statement: "R_N^lambda(alpha*; G) <= 81 lambda |G|_H^2",
        rhs: approximator_rhs(cfg.lambda, inputs.rkhs_norm_g),
        lhs: collect(|v| v.approximator),
    }];
    if full {
        checks.extend([
            CheckOutcome {
                name: EMPIRICAL_RISK,
                statement: "R_N^lambda(alpha_hat; G) <= lambda beta",
                rhs: empirical_risk_rhs(&inputs),
                lhs: collect(|v| v.empirical),
            },
            CheckOutcome {
                name: COEFFICIENT_NORM,
                statement: "|alpha_hat|_M^2 <= beta",
                rhs: beta,
                lhs: collect(|v| v.norm),
            },
            CheckOutcome {
                name: POPULATION_RISK,
                statement: "E|G(u) - Phi(u; alpha_hat)|^2 <= 79 e^1.5 (|G|_inf^2 + 2 beta) lambda",
                rhs: theorem31_rhs(&inputs),
                lhs: collect(|v| v.population),
            },
            CheckOutcome {
                name: GENERALIZATION_GAP,
                statement: "sup_{|alpha|_M^2 <= beta} |R_N(alpha) - R(alpha)| <= 32 e^1.5 (|G|_inf^2 + beta) sqrt(6 log(2/delta)/N)",
                rhs: generalization_gap_rhs(inputs.g_inf_sq, beta, cfg.n as u64, cfg.delta)?,
                lhs: collect(|v| v.gap),
            },
        ]);
    }
    Ok(VerifyReport {
        config: cfg.clone(),
        inputs,
        beta,
        sample_gates: sample_gates(cfg.lambda, cfg.delta),
        empirical_gates: empirical_gates(cfg.lambda, cfg.delta),
        approximator_gate: approximator_gate(cfg.lambda, cfg.delta),
        checks,
    })
}

fn run_trial(
    cfg: &VerifyConfig,
    truth: &DiscreteTruth,
    population: Option<&Moments>,
    beta: f64,
    trial_seed: u64,
) -> Result<TrialValues> {
    let input_family = seed::domain(trial_seed, "inputs");
    let us: Vec<GridFunction> = (0..cfg.n)
        .map(|i| sample_grf(&cfg.input, cfg.p, &mut seed::stream(input_family, i as u64)))
        .collect::<Result<_>>()?;
    let mut noise_rng = seed::stream(seed::domain(trial_seed, "noise"), 0);
    let zeta: Vec<f64> = (0..cfg.n)
        .map(|_| {
            if cfg.noise_scale > 0.0 {
                sample_laplace(cfg.noise_scale, &mut noise_rng)
            } else {
                0.0
            }
        })
        .collect();
    let mut pick_rng = seed::stream(seed::domain(trial_seed, "features"), 0);
    let picks: Vec<usize> = (0..cfg.m).map(|_| pick_rng.random_range(0..truth.k())).collect();
    let data = moments(truth, &us, &zeta)?;
    let clean = data.system(&picks, false)?;

    let a: Vec<f64> = picks.iter().map(|&k| truth.coefficients()[k]).collect();
    let alpha_star = truncate_coefficients(&a, truth.rkhs_norm_sq(), cfg.lambda)?;
    let approximator = clean.risk(&alpha_star, cfg.lambda);

    let Some(pop) = population else {
        return Ok(TrialValues {
            approximator,
            empirical: f64::NAN,
            norm: f64::NAN,
            population: f64::NAN,
            gap: f64::NAN,
        });
    };
    let alpha = data.system(&picks, true)?.solve(cfg.lambda)?.alpha;
    let m = cfg.m as f64;
    let empirical = clean.risk(&alpha, cfg.lambda);
    let norm = alpha.iter().map(|v| v * v).sum::<f64>() / m;
    let population_risk = pop.system(&picks, false)?.risk(&alpha, 0.0);
    let diff = Quadratic::of_risk(&data, &picks).minus(&Quadratic::of_risk(pop, &picks));
    // ‖α‖²_M ≤ β is the Euclidean ball of radius sqrt(Mβ)
    let radius = (m * beta).sqrt();
    let up = diff.eval(&trust_region_argmax(&diff, radius)?);
    let neg = diff.negated();
    let down = neg.eval(&trust_region_argmax(&neg, radius)?);
    Ok(TrialValues {
        approximator,
        empirical,
        norm,
        population: population_risk,
        gap: up.max(down),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scope: VerifyScope) -> VerifyConfig {
        VerifyConfig {
            m: 40,
            n: 60,
            n_population: 200,
            p: 16,
            atoms: 12,
            trials: 3,
            ..VerifyConfig::at_gates(0.5, 0.5, 3, scope)
        }
    }

    #[test]
    fn refuses_below_gates() {
        let cfg = VerifyConfig {
            m: 10,
            ..VerifyConfig::at_gates(0.05, 0.1, 1, VerifyScope::Full)
        };
        match verify_theory(&cfg) {
            Err(Error::GatesUnsatisfied { m_min, n_min, .. }) => {
                assert_eq!((m_min, n_min), sample_gates(0.05, 0.1));
            }
            other => panic!("expected a gate error, got {other:?}"),
        }
    }

    #[test]
    fn truth_is_bounded_and_normalized() {
        let cfg = small(VerifyScope::Full);
        let truth = DiscreteTruth::new(&cfg).unwrap();
        assert!((truth.rkhs_norm_sq() - 1.0).abs() < 1e-12);
        let w = quadrature_weight(cfg.p);
        for i in 0..20 {
            let u = sample_grf(&cfg.input, cfg.p, &mut seed::stream(4, i)).unwrap();
            let block = truth.features(&u).unwrap();
            for row in block.chunks_exact(cfg.p) {
                assert!(w * row.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-12);
            }
            let y = truth.output(&block, cfg.p);
            let norm_sq = w * y.iter().map(|v| v * v).sum::<f64>();
            assert!(norm_sq <= truth.sup_norm_sq_bound() * (1.0 + 1e-12));
        }
    }

    /// The Gram-matrix system equals the one assembled from explicit
    /// feature blocks.
    #[test]
    fn moments_match_direct_assembly() {
        let cfg = small(VerifyScope::Full);
        let truth = DiscreteTruth::new(&cfg).unwrap();
        let us: Vec<GridFunction> = (0..7)
            .map(|i| sample_grf(&cfg.input, cfg.p, &mut seed::stream(9, i)).unwrap())
            .collect();
        let zeta = vec![0.3, -0.2, 0.0, 1.1, -0.5, 0.05, 0.7];
        let picks = vec![3, 0, 3, 11, 5];
        let mom = moments(&truth, &us, &zeta).unwrap();
        let sys = mom.system(&picks, true).unwrap();
        let p = cfg.p;
        let mut data = Vec::new();
        let mut outputs = Vec::new();
        for (u, z) in us.iter().zip(&zeta) {
            let block = truth.features(u).unwrap();
            for &k in &picks {
                data.extend_from_slice(&block[k * p..(k + 1) * p]);
            }
            let y: Vec<f64> = truth.output(&block, p).iter().map(|v| v * (1.0 + z)).collect();
            outputs.push(GridFunction::new(y).unwrap());
        }
        let table = crate::features::FeatureTable::from_raw(us.len(), picks.len(), p, data).unwrap();
        let direct = NormalSystem::from_table(&table, &outputs).unwrap();
        for (a, b) in sys.a().iter().zip(direct.a()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        for (a, b) in sys.c().iter().zip(direct.c()) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        assert!((sys.yy() - direct.yy()).abs() < 1e-12 * direct.yy());
    }

    #[test]
    fn trust_region_matches_dense_search_in_two_dimensions() {
        let cases = [
            (vec![0.3, -0.4], [[1.0, 0.2], [0.2, -0.5]]),
            (vec![0.0, 0.0], [[-1.0, 0.0], [0.0, -2.0]]),
            (vec![1.0, 2.0], [[-3.0, 0.5], [0.5, -2.0]]),
            // hard case: gradient orthogonal to the top eigenvector
            (vec![0.0, 0.1], [[2.0, 0.0], [0.0, -1.0]]),
        ];
        for (g, q) in cases {
            let q = DMatrix::from_fn(2, 2, |i, j| q[i][j]);
            let r = 1.5;
            let (best, x) = maximize_on_ball(0.25, &g, &q, r).unwrap();
            assert!(x.iter().map(|v| v * v).sum::<f64>().sqrt() <= r * (1.0 + 1e-9));
            let mut brute = f64::NEG_INFINITY;
            for a in 0..400 {
                for s in 0..=60 {
                    let rad = r * s as f64 / 60.0;
                    let t = std::f64::consts::TAU * a as f64 / 400.0;
                    let v = DVector::from_vec(vec![rad * t.cos(), rad * t.sin()]);
                    let val = 0.25 + g[0] * v[0] + g[1] * v[1] + v.dot(&(&q * &v));
                    brute = brute.max(val);
                }
            }
            assert!(best >= brute - 1e-9, "{best} < {brute}");
            assert!(best <= brute + 1e-3 * (1.0 + brute.abs()), "{best} vs {brute}");
        }
    }

    #[test]
    fn small_full_run_reports_every_check() {
        let cfg = small(VerifyScope::Full);
        let rep = verify_theory(&cfg).unwrap();
        assert_eq!(rep.checks.len(), 5);
        for ch in &rep.checks {
            assert_eq!(ch.lhs.len(), 3);
            assert!(ch.lhs.iter().all(|v| v.is_finite() && *v >= 0.0), "{}", ch.name);
        }
        assert!(rep.to_string().contains(GENERALIZATION_GAP));
        let again = verify_theory(&cfg).unwrap();
        assert_eq!(rep, again);
    }

    #[test]
    fn approximator_scope_has_one_check() {
        let rep = verify_theory(&small(VerifyScope::Approximator)).unwrap();
        assert_eq!(rep.checks.len(), 1);
        assert_eq!(rep.checks[0].name, APPROXIMATOR);
    }
}
