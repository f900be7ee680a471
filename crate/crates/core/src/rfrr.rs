//! Random feature ridge regression: the `M × M` normal equations and risks.
//!
//! Training minimizes
//!
//! ```text
//! R(α) = (1/N) Σ_n ‖y_n − Φ(u_n; α)‖² + λ (1/M) Σ_m α_m²
//! ```
//!
//! whose stationarity condition is `(A/M + λI) α = c` with
//! `A_mj = (1/N) Σ_n ⟨φ(u_n;θ_j), φ(u_n;θ_m)⟩` and `c_m = (1/N) Σ_n ⟨y_n, φ(u_n;θ_m)⟩`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::{
    combine, feature_matrix_from_bank, table_bytes, FeatureBank, FeatureConfig, FeatureTable, RfModel,
    DEFAULT_TABLE_BUDGET,
};
use crate::grid::{l2_norm_sq, quadrature_weight, GridFunction};

/// Samples accumulated sequentially before pairwise combination.
const LEAF: usize = 4;

/// Where per-sample feature blocks come from during assembly.
#[derive(Clone, Copy)]
pub enum FeatureSource<'a> {
    Table(&'a FeatureTable),
    /// Recompute features per sample instead of materializing the table.
    Streaming {
        bank: &'a FeatureBank,
        inputs: &'a [GridFunction],
    },
}

impl FeatureSource<'_> {
    fn n(&self) -> usize {
        match self {
            FeatureSource::Table(t) => t.n(),
            FeatureSource::Streaming { inputs, .. } => inputs.len(),
        }
    }

    fn m(&self) -> usize {
        match self {
            FeatureSource::Table(t) => t.m(),
            FeatureSource::Streaming { bank, .. } => bank.m(),
        }
    }

    fn p(&self) -> usize {
        match self {
            FeatureSource::Table(t) => t.p(),
            FeatureSource::Streaming { bank, .. } => bank.p(),
        }
    }

    fn with_block<T>(&self, n: usize, scratch: &mut Vec<f64>, f: impl FnOnce(&[f64]) -> T) -> Result<T> {
        match self {
            FeatureSource::Table(t) => Ok(f(t.block(n))),
            FeatureSource::Streaming { bank, inputs } => {
                scratch.resize(bank.m() * bank.p(), 0.0);
                bank.evaluate_into(&inputs[n], scratch)?;
                Ok(f(scratch))
            }
        }
    }
}

/// The assembled normal equations. `a` is row-major `M × M`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalSystem {
    m: usize,
    n: usize,
    a: Vec<f64>,
    c: Vec<f64>,
    /// `(1/N) Σ ‖y_n‖²`, so risks can be evaluated from the system alone.
    yy: f64,
}

struct Partial {
    a: Vec<f64>,
    c: Vec<f64>,
    yy: f64,
}

impl Partial {
    fn zeros(m: usize) -> Self {
        Self {
            a: vec![0.0; m * m],
            c: vec![0.0; m],
            yy: 0.0,
        }
    }

    fn add(mut self, other: Partial) -> Partial {
        self.a.iter_mut().zip(&other.a).for_each(|(x, y)| *x += y);
        self.c.iter_mut().zip(&other.c).for_each(|(x, y)| *x += y);
        self.yy += other.yy;
        self
    }
}

impl NormalSystem {
    /// Assembles `A`, `c` and `(1/N)Σ‖y‖²` from a feature source and outputs.
    ///
    /// Each sample contributes `w·X Xᵀ` with `X` its `M × p` feature block and
    /// `w = 2π/p`; per-sample contributions are combined by pairwise summation.
    pub fn assemble(source: FeatureSource<'_>, outputs: &[GridFunction]) -> Result<Self> {
        let (n, m, p) = (source.n(), source.m(), source.p());
        if n == 0 {
            return Err(Error::EmptyData);
        }
        if outputs.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: outputs.len(),
            });
        }
        if let Some(y) = outputs.iter().find(|y| y.p() != p) {
            return Err(Error::Dimension { expected: p, got: y.p() });
        }
        let w = quadrature_weight(p);
        let total = accumulate(&source, outputs, 0, n, w)?;
        let inv_n = 1.0 / n as f64;
        let mut a = total.a;
        // only the upper triangle is trusted after dgemm; mirror it
        for i in 0..m {
            for j in (i + 1)..m {
                let v = 0.5 * (a[i * m + j] + a[j * m + i]) * inv_n;
                a[i * m + j] = v;
                a[j * m + i] = v;
            }
            a[i * m + i] *= inv_n;
        }
        Ok(Self {
            m,
            n,
            a,
            c: total.c.into_iter().map(|v| v * inv_n).collect(),
            yy: total.yy * inv_n,
        })
    }

    pub fn from_table(table: &FeatureTable, outputs: &[GridFunction]) -> Result<Self> {
        Self::assemble(FeatureSource::Table(table), outputs)
    }

    /// A system from precomputed moments: `a` is the row-major `M × M`
    /// matrix `(1/N) Σ ⟨φ_i, φ_j⟩`, `c_i = (1/N) Σ ⟨y, φ_i⟩` and
    /// `yy = (1/N) Σ ‖y‖²`.
    pub fn from_parts(n: usize, a: Vec<f64>, c: Vec<f64>, yy: f64) -> Result<Self> {
        let m = c.len();
        if a.len() != m * m {
            return Err(Error::Dimension {
                expected: m * m,
                got: a.len(),
            });
        }
        if n == 0 {
            return Err(Error::EmptyData);
        }
        Ok(Self { m, n, a, c, yy })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn yy(&self) -> f64 {
        self.yy
    }

    /// `A/M + λI`.
    pub fn system_matrix(&self, lambda: f64) -> DMatrix<f64> {
        let m = self.m;
        let inv_m = 1.0 / m as f64;
        DMatrix::from_fn(m, m, |i, j| {
            self.a[i * m + j] * inv_m + if i == j { lambda } else { 0.0 }
        })
    }

    /// Regularized empirical risk as a quadratic form in `α`.
    pub fn risk(&self, alpha: &[f64], lambda: f64) -> f64 {
        let m = self.m as f64;
        let quad: f64 = (0..self.m)
            .map(|i| alpha[i] * dot(&self.a[i * self.m..(i + 1) * self.m], alpha))
            .sum();
        let lin = dot(&self.c, alpha);
        (self.yy - 2.0 * lin / m + quad / (m * m)).max(0.0) + lambda * dot(alpha, alpha) / m
    }

    /// Gradient of [`NormalSystem::risk`]: `(2/M)((A/M + λI)α − c)`.
    pub fn gradient(&self, alpha: &[f64], lambda: f64) -> Vec<f64> {
        let r = self.residual_vector(alpha, lambda);
        let scale = 2.0 / self.m as f64;
        r.into_iter().map(|v| scale * v).collect()
    }

    /// `(A/M + λI)α − c`.
    pub fn residual_vector(&self, alpha: &[f64], lambda: f64) -> Vec<f64> {
        let m = self.m;
        let inv_m = 1.0 / m as f64;
        (0..m)
            .map(|i| dot(&self.a[i * m..(i + 1) * m], alpha) * inv_m + lambda * alpha[i] - self.c[i])
            .collect()
    }

    /// `‖(A/M + λI)α − c‖ / ‖c‖`, or the absolute residual when `c = 0`.
    pub fn relative_residual(&self, alpha: &[f64], lambda: f64) -> f64 {
        let r = norm(&self.residual_vector(alpha, lambda));
        let c = norm(&self.c);
        if c > 0.0 {
            r / c
        } else {
            r
        }
    }

    /// Solves the system by Cholesky, falling back to a symmetric
    /// eigendecomposition when the factorization fails.
    pub fn solve(&self, lambda: f64) -> Result<Solution> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidValue(format!("lambda must be > 0, got {lambda}")));
        }
        let k = self.system_matrix(lambda);
        let c = DVector::from_column_slice(&self.c);
        let (mut alpha, fallback) = match k.clone().cholesky() {
            Some(ch) => (ch.solve(&c), false),
            None => (eigen_solve(k.clone(), &c, 0.0)?, true),
        };
        // one step of iterative refinement tightens the residual for
        // ill-conditioned systems at small λ
        let r = &c - &k * &alpha;
        if let Some(ch) = k.clone().cholesky() {
            alpha += ch.solve(&r);
        }
        let alpha: Vec<f64> = alpha.iter().copied().collect();
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("solution is not finite".into()));
        }
        let residual = self.relative_residual(&alpha, lambda);
        Ok(Solution {
            alpha,
            relative_residual: residual,
            fallback,
        })
    }

    /// Minimizer via eigendecomposition of `A/M + λI`, discarding directions
    /// with eigenvalue below `cutoff` times the largest. Used as an
    /// independent check on [`NormalSystem::solve`].
    pub fn eigen_pseudo_solve(&self, lambda: f64, cutoff: f64) -> Result<Vec<f64>> {
        let k = self.system_matrix(lambda);
        let c = DVector::from_column_slice(&self.c);
        Ok(eigen_solve(k, &c, cutoff)?.iter().copied().collect())
    }
}

fn eigen_solve(k: DMatrix<f64>, c: &DVector<f64>, cutoff: f64) -> Result<DVector<f64>> {
    let eig = SymmetricEigen::try_new(k, f64::EPSILON, 0)
        .ok_or_else(|| Error::Factorization("eigendecomposition did not converge".into()))?;
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let proj = eig.eigenvectors.transpose() * c;
    let scaled = DVector::from_iterator(
        proj.len(),
        proj.iter().zip(eig.eigenvalues.iter()).map(|(v, &l)| {
            if l > cutoff * top && l > 0.0 {
                v / l
            } else {
                0.0
            }
        }),
    );
    Ok(&eig.eigenvectors * scaled)
}

fn accumulate(
    source: &FeatureSource<'_>,
    outputs: &[GridFunction],
    lo: usize,
    hi: usize,
    w: f64,
) -> Result<Partial> {
    if hi - lo <= LEAF {
        let (m, p) = (source.m(), source.p());
        let mut acc = Partial::zeros(m);
        let mut scratch = Vec::new();
        for n in lo..hi {
            let y = outputs[n].values();
            source.with_block(n, &mut scratch, |x| {
                if m > 0 && p > 0 {
                    // acc.a += w · X Xᵀ, with X stored [m][i]
                    unsafe {
                        matrixmultiply::dgemm(
                            m,
                            p,
                            m,
                            w,
                            x.as_ptr(),
                            p as isize,
                            1,
                            x.as_ptr(),
                            1,
                            p as isize,
                            1.0,
                            acc.a.as_mut_ptr(),
                            m as isize,
                            1,
                        );
                    }
                }
                for (cm, row) in acc.c.iter_mut().zip(x.chunks_exact(p)) {
                    *cm += w * dot(row, y);
                }
            })?;
            acc.yy += w * dot(y, y);
        }
        return Ok(acc);
    }
    let mid = lo + (hi - lo) / 2;
    let (left, right) = rayon::join(
        || accumulate(source, outputs, lo, mid, w),
        || accumulate(source, outputs, mid, hi, w),
    );
    Ok(left?.add(right?))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub alpha: Vec<f64>,
    pub relative_residual: f64,
    /// The Cholesky factorization failed and the eigen path was used.
    pub fallback: bool,
}

/// Diagnostics from one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub m: usize,
    pub n: usize,
    pub lambda: f64,
    pub relative_residual: f64,
    pub fallback: bool,
    /// Regularized empirical risk at the trained coefficients.
    pub train_risk: f64,
    pub wall_ms: f64,
}

/// Options for [`train_with`].
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    /// Materialize the feature table when it fits in this many bytes,
    /// stream otherwise.
    pub table_budget: usize,
    /// Required relative residual of the normal equations.
    pub tolerance: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            table_budget: DEFAULT_TABLE_BUDGET,
            tolerance: 1e-10,
        }
    }
}

pub fn train(data: &Dataset, thetas: &[GridFunction], cfg: &FeatureConfig, lambda: f64) -> Result<RfModel> {
    train_with(data, thetas, cfg, lambda, TrainOptions::default()).map(|(m, _)| m)
}

pub fn train_with(
    data: &Dataset,
    thetas: &[GridFunction],
    cfg: &FeatureConfig,
    lambda: f64,
    opts: TrainOptions,
) -> Result<(RfModel, TrainReport)> {
    let start = Instant::now();
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let bank = FeatureBank::new(thetas, cfg)?;
    if bank.p() != data.p() {
        return Err(Error::Dimension {
            expected: data.p(),
            got: bank.p(),
        });
    }
    let system = if table_bytes(data.len(), bank.m(), bank.p()) <= opts.table_budget {
        let table = feature_matrix_from_bank(&bank, data.inputs(), opts.table_budget)?;
        NormalSystem::from_table(&table, data.outputs())?
    } else {
        NormalSystem::assemble(
            FeatureSource::Streaming {
                bank: &bank,
                inputs: data.inputs(),
            },
            data.outputs(),
        )?
    };
    let (model, mut report) = fit_system(&system, thetas, cfg, lambda, opts.tolerance)?;
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((model, report))
}

/// Solves an assembled system and packages the model.
pub fn fit_system(
    system: &NormalSystem,
    thetas: &[GridFunction],
    cfg: &FeatureConfig,
    lambda: f64,
    tolerance: f64,
) -> Result<(RfModel, TrainReport)> {
    let sol = system.solve(lambda)?;
    if !(sol.relative_residual <= tolerance) {
        return Err(Error::Factorization(format!(
            "relative residual {:.3e} exceeds {tolerance:.1e}",
            sol.relative_residual
        )));
    }
    let train_risk = system.risk(&sol.alpha, lambda);
    let report = TrainReport {
        m: system.m(),
        n: system.n(),
        lambda,
        relative_residual: sol.relative_residual,
        fallback: sol.fallback,
        train_risk,
        wall_ms: 0.0,
    };
    Ok((RfModel::new(*cfg, thetas.to_vec(), sol.alpha, lambda)?, report))
}

/// Regularized empirical risk, evaluated directly from predictions.
pub fn empirical_risk(model: &RfModel, data: &Dataset, lambda: f64) -> Result<f64> {
    if lambda < 0.0 {
        return Err(Error::InvalidValue(format!("lambda must be >= 0, got {lambda}")));
    }
    let fit = population_risk_estimate(model, data)?;
    let m = model.m() as f64;
    Ok(fit + lambda * dot(model.alpha(), model.alpha()) / m)
}

/// Regularized empirical risk from a materialized feature table.
pub fn empirical_risk_from_table(
    table: &FeatureTable,
    outputs: &[GridFunction],
    alpha: &[f64],
    lambda: f64,
) -> Result<f64> {
    if table.n() == 0 {
        return Err(Error::EmptyData);
    }
    if alpha.len() != table.m() || outputs.len() != table.n() {
        return Err(Error::Dimension {
            expected: table.m(),
            got: alpha.len(),
        });
    }
    let total: f64 = (0..table.n())
        .map(|n| {
            let pred = combine(alpha, table.block(n), table.p());
            l2_norm_sq(&outputs[n].sub(&pred).expect("grid checked"))
        })
        .sum();
    Ok(total / table.n() as f64 + lambda * dot(alpha, alpha) / alpha.len() as f64)
}

/// `(1/N′) Σ ‖y′_n − Φ(u′_n; α)‖²` over held-out pairs.
pub fn population_risk_estimate(model: &RfModel, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyData);
    }
    if test.p() != model.p() {
        return Err(Error::Dimension {
            expected: model.p(),
            got: test.p(),
        });
    }
    let preds = model.predict_many(test.inputs())?;
    let total: f64 = preds
        .iter()
        .zip(test.outputs())
        .map(|(pred, y)| l2_norm_sq(&y.sub(pred).expect("grid checked")))
        .sum();
    Ok(total / test.len() as f64)
}

/// Population risk estimate divided by `(1/N′) Σ ‖y′_n‖²`.
pub fn relative_test_error(model: &RfModel, test: &Dataset) -> Result<f64> {
    let risk = population_risk_estimate(model, test)?;
    let denom: f64 = test.outputs().iter().map(l2_norm_sq).sum::<f64>() / test.len() as f64;
    if denom == 0.0 {
        return Err(Error::Division("test outputs are identically zero".into()));
    }
    Ok(risk / denom)
}
