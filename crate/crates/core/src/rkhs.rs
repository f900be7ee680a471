//! Kernel integral operator of the random feature kernel on a finite setting:
//! a discrete feature measure with `K` atoms and an empirical input measure
//! with `n_u` samples.
//!
//! Vectors live in `L²_ν` over the empirical measure, stored as `n_u · p`
//! values `[a][i]` with inner product `ω Σ F·G`, `ω = (1/n_u)(2π/p)`. The
//! kernel `K(u,u′) = Σ_j w_j φ(u;ϑ_j) ⊗ φ(u′;ϑ_j)` induces the operator
//! `𝒦 = ω Σ_j w_j v_j v_jᵀ` where `v_j` stacks `φ(u_a;ϑ_j)` over the samples.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::features::{FeatureBank, FeatureConfig};
use crate::grid::{quadrature_weight, GridFunction};

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DiscreteSetting {
    weights: Vec<f64>,
    /// `features[j]` stacks `φ(u_a; ϑ_j)` over the samples, length `n_u · p`.
    features: Vec<Vec<f64>>,
    n_u: usize,
    p: usize,
}

impl DiscreteSetting {
    pub fn new(thetas: &[GridFunction], weights: &[f64], inputs: &[GridFunction], cfg: &FeatureConfig) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptyData);
        }
        let bank = FeatureBank::new(thetas, cfg)?;
        let (k, p) = (bank.m(), bank.p());
        let mut features = vec![Vec::with_capacity(inputs.len() * p); k];
        for u in inputs {
            let block = bank.evaluate(u)?;
            for (j, row) in block.chunks_exact(p).enumerate() {
                features[j].extend_from_slice(row);
            }
        }
        Self::from_features(weights, features, inputs.len(), p)
    }

    /// A setting from already evaluated features, `features[j][a·p + i]`.
    pub fn from_features(weights: &[f64], features: Vec<Vec<f64>>, n_u: usize, p: usize) -> Result<Self> {
        if features.is_empty() || n_u == 0 {
            return Err(Error::InvalidValue("need K >= 1 atoms and n_u >= 1 inputs".into()));
        }
        if weights.len() != features.len() {
            return Err(Error::Dimension {
                expected: features.len(),
                got: weights.len(),
            });
        }
        if let Some(f) = features.iter().find(|f| f.len() != n_u * p) {
            return Err(Error::Dimension {
                expected: n_u * p,
                got: f.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidValue("weights must be nonnegative and sum to 1".into()));
        }
        Ok(Self {
            weights: weights.to_vec(),
            features,
            n_u,
            p,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.n_u * self.p
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn feature(&self, j: usize) -> &[f64] {
        &self.features[j]
    }

    /// `ω = (1/n_u)(2π/p)`, the weight of the `L²_ν` inner product.
    pub fn omega(&self) -> f64 {
        quadrature_weight(self.p) / self.n_u as f64
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.omega() * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Ridge regression in the feature coordinates: minimizes
    /// `‖G − Σ_j √w_j b_j φ_j‖² + ϑ|b|²` over `b` and returns the minimum.
    ///
    /// Solving this `K × K` problem directly is independent of the spectral
    /// route through [`KernelSpectrum`].
    pub fn direct_ridge_error(&self, g: &[f64], vartheta: f64) -> Result<f64> {
        if g.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: g.len(),
            });
        }
        let k = self.k();
        let omega = self.omega();
        let b = DMatrix::from_fn(self.dim(), k, |r, j| self.weights[j].sqrt() * self.features[j][r]);
        let gv = DVector::from_column_slice(g);
        let mut lhs = b.transpose() * &b * omega;
        for j in 0..k {
            lhs[(j, j)] += vartheta;
        }
        let rhs = b.transpose() * &gv * omega;
        let coef = lhs
            .cholesky()
            .ok_or_else(|| Error::Factorization("ridge system is not positive definite".into()))?
            .solve(&rhs);
        let resid = &gv - &b * &coef;
        Ok(omega * resid.norm_squared() + vartheta * coef.norm_squared())
    }
}

/// The operator matrix `ω Σ_j w_j v_j v_jᵀ`, acting on stacked sample values.
pub fn assemble_operator(s: &DiscreteSetting) -> DMatrix<f64> {
    let d = s.dim();
    let omega = s.omega();
    let mut op = DMatrix::zeros(d, d);
    for (w, v) in s.weights.iter().zip(&s.features) {
        if *w == 0.0 {
            continue;
        }
        let v = DVector::from_column_slice(v);
        op.ger(omega * w, &v, &v, 1.0);
    }
    op
}

#[derive(Debug, Clone)]
pub struct KernelSpectrum {
    /// Nonincreasing, nonnegative.
    eigenvalues: Vec<f64>,
    /// Columns are orthonormal in the weighted inner product.
    eigenvectors: DMatrix<f64>,
    omega: f64,
}

impl KernelSpectrum {
    /// Eigendecomposition of the operator of `s`.
    pub fn new(s: &DiscreteSetting) -> Result<Self> {
        Self::from_operator(assemble_operator(s), s.omega())
    }

    /// Eigendecomposition of an operator matrix that is symmetric in
    /// Euclidean coordinates, for the inner product `ω Σ F·G`.
    pub fn from_operator(op: DMatrix<f64>, omega: f64) -> Result<Self> {
        let eig = SymmetricEigen::try_new(op, f64::EPSILON, 0)
            .ok_or_else(|| Error::Factorization("eigendecomposition did not converge".into()))?;
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let mut eigenvalues = Vec::with_capacity(order.len());
        for &j in &order {
            let l = eig.eigenvalues[j];
            if l < -1e-10 * top {
                return Err(Error::Factorization(format!(
                    "operator is not positive semidefinite: eigenvalue {l:.3e}"
                )));
            }
            eigenvalues.push(l.max(0.0));
        }
        let scale = 1.0 / omega.sqrt();
        let eigenvectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
            eig.eigenvectors[(r, order[c])] * scale
        });
        Ok(Self {
            eigenvalues,
            eigenvectors,
            omega,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The `j`-th eigenvector, normalized in the weighted inner product.
    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        self.eigenvectors.column(j).iter().copied().collect()
    }

    /// Whether mode `j` counts as a nonzero eigenvalue.
    pub fn is_active(&self, j: usize) -> bool {
        let top = self.eigenvalues.first().copied().unwrap_or(0.0);
        top > 0.0 && self.eigenvalues[j] > RANK_TOLERANCE * top
    }

    /// `⟨e_j, G⟩` for every `j`.
    pub fn coordinates(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: g.len(),
            });
        }
        let gv = DVector::from_column_slice(g);
        Ok((self.eigenvectors.transpose() * gv * self.omega).iter().copied().collect())
    }

    /// `Σ_j c_j e_j`.
    pub fn synthesize(&self, coords: &[f64]) -> Vec<f64> {
        (&self.eigenvectors * DVector::from_column_slice(coords)).iter().copied().collect()
    }

    /// Gram matrix of the eigenvectors in the weighted inner product.
    pub fn gram(&self) -> DMatrix<f64> {
        self.eigenvectors.transpose() * &self.eigenvectors * self.omega
    }
}

/// `𝒜_G(ϑ) = Σ_j ϑ/(λ_j + ϑ) ⟨e_j, G⟩²`, the regularized approximation error.
pub fn regularized_rkhs_error(spec: &KernelSpectrum, g: &[f64], vartheta: f64) -> Result<f64> {
    if !(vartheta > 0.0) {
        return Err(Error::InvalidValue(format!("vartheta must be > 0, got {vartheta}")));
    }
    let coords = spec.coordinates(g)?;
    Ok(coords
        .iter()
        .zip(spec.eigenvalues())
        .map(|(c, l)| vartheta / (l + vartheta) * c * c)
        .sum())
}

/// `Σ_{λ_j = 0} ⟨e_j, G⟩²`, the limit of `𝒜_G(ϑ)` as `ϑ → 0`.
pub fn null_space_mass(spec: &KernelSpectrum, g: &[f64]) -> Result<f64> {
    let coords = spec.coordinates(g)?;
    Ok(coords
        .iter()
        .enumerate()
        .filter(|(j, _)| !spec.is_active(*j))
        .map(|(_, c)| c * c)
        .sum())
}

/// A truth satisfying the source condition of order `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceInstance {
    /// `G = 𝒦^{r/2} F`.
    pub g: Vec<f64>,
    /// `‖𝒦^{−r/2} G‖²`.
    pub certificate: f64,
}

/// Builds `G = 𝒦^{r/2} F` spectrally. `F` must have no mass on the null
/// space of `𝒦` (relative to `‖F‖²`, beyond rounding).
pub fn source_condition_instance(spec: &KernelSpectrum, f: &[f64], r: f64) -> Result<SourceInstance> {
    if !(r >= 0.0) {
        return Err(Error::InvalidValue(format!("r must be >= 0, got {r}")));
    }
    let coords = spec.coordinates(f)?;
    let total: f64 = coords.iter().map(|c| c * c).sum();
    let mass: f64 = coords
        .iter()
        .enumerate()
        .filter(|(j, _)| !spec.is_active(*j))
        .map(|(_, c)| c * c)
        .sum();
    if mass > 1e-12 * total.max(f64::MIN_POSITIVE) {
        return Err(Error::Support { mass });
    }
    let mut certificate = 0.0;
    let scaled: Vec<f64> = coords
        .iter()
        .enumerate()
        .map(|(j, c)| {
            if spec.is_active(j) {
                certificate += c * c;
                spec.eigenvalues()[j].powf(r / 2.0) * c
            } else {
                0.0
            }
        })
        .collect();
    Ok(SourceInstance {
        g: spec.synthesize(&scaled),
        certificate,
    })
}

/// The rate bound on `𝒜_G(ϑ)` under a source condition with `certificate`:
/// `ϑ^r · cert` for `r ≤ 1`, `ϑ λ_1^{r−1} · cert` for `r > 1`.
pub fn source_rate_bound(spec: &KernelSpectrum, r: f64, vartheta: f64, certificate: f64) -> f64 {
    if r <= 1.0 {
        vartheta.powf(r) * certificate
    } else {
        vartheta * spec.eigenvalues()[0].powf(r - 1.0) * certificate
    }
}

/// Projects `f` onto the span of the active eigenvectors.
pub fn project_active(spec: &KernelSpectrum, f: &[f64]) -> Result<Vec<f64>> {
    let coords = spec.coordinates(f)?;
    let kept: Vec<f64> = coords
        .iter()
        .enumerate()
        .map(|(j, c)| if spec.is_active(j) { *c } else { 0.0 })
        .collect();
    Ok(spec.synthesize(&kept))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub vartheta: f64,
    pub r: f64,
    pub error: f64,
    pub bound: f64,
}

impl RatePoint {
    pub fn ratio(&self) -> f64 {
        if self.bound > 0.0 {
            self.error / self.bound
        } else {
            0.0
        }
    }
}

/// Evaluates `𝒜_G(ϑ)` against the source-condition bound over `(r, ϑ)` pairs,
/// with `G = 𝒦^{r/2} F` for each `r`.
pub fn rate_sweep(spec: &KernelSpectrum, f: &[f64], rs: &[f64], varthetas: &[f64]) -> Result<Vec<RatePoint>> {
    let mut out = Vec::with_capacity(rs.len() * varthetas.len());
    for &r in rs {
        let inst = source_condition_instance(spec, f, r)?;
        for &t in varthetas {
            out.push(RatePoint {
                vartheta: t,
                r,
                error: regularized_rkhs_error(spec, &inst.g, t)?,
                bound: source_rate_bound(spec, r, t, inst.certificate),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grf::{sample_grf, MaternSpec};
    use crate::seed;
    use rand::Rng;

    fn small_setting(k: usize, n_u: usize, p: usize, s: u64) -> DiscreteSetting {
        let thetas: Vec<_> = (0..k)
            .map(|j| sample_grf(&MaternSpec::feature_default(), p, &mut seed::stream(s, j as u64)).unwrap())
            .collect();
        let inputs: Vec<_> = (0..n_u)
            .map(|a| sample_grf(&MaternSpec::input_default(), p, &mut seed::stream(s + 1, a as u64)).unwrap())
            .collect();
        let mut rng = seed::stream(s + 2, 0);
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let head: f64 = weights[1..].iter().sum();
        weights[0] = 1.0 - head;
        let cfg = FeatureConfig {
            k_max: p / 2,
            ..FeatureConfig::default()
        };
        DiscreteSetting::new(&thetas, &weights, &inputs, &cfg).unwrap()
    }

    fn random_vector(d: usize, s: u64) -> Vec<f64> {
        let mut rng = seed::stream(s, 99);
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn operator_matches_definition() {
        let s = small_setting(3, 2, 8, 1);
        let op = assemble_operator(&s);
        let (n_u, p) = (2, 8);
        let w = quadrature_weight(p) / n_u as f64;
        for a in 0..n_u {
            for i in 0..p {
                for b in 0..n_u {
                    for k in 0..p {
                        let mut v = 0.0;
                        for j in 0..3 {
                            v += s.weights()[j] * s.feature(j)[a * p + i] * s.feature(j)[b * p + k] * w;
                        }
                        assert!((op[(a * p + i, b * p + k)] - v).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_feature_is_rank_one() {
        let (n_u, p) = (3, 8);
        let v: Vec<f64> = (0..p).map(|i| 0.5 + i as f64 * 0.1).collect();
        let stacked: Vec<f64> = (0..n_u).flat_map(|_| v.clone()).collect();
        let s = DiscreteSetting::from_features(&[1.0], vec![stacked], n_u, p).unwrap();
        let spec = KernelSpectrum::new(&s).unwrap();
        let norm_y: f64 = quadrature_weight(p) * v.iter().map(|x| x * x).sum::<f64>();
        assert!((spec.eigenvalues()[0] - norm_y).abs() < 1e-12 * norm_y);
        assert!(spec.eigenvalues()[1..].iter().all(|&l| l < 1e-12 * norm_y));
    }

    #[test]
    fn degenerate_weights_reduce_to_single_atom() {
        let s = small_setting(3, 2, 8, 2);
        let full: Vec<Vec<f64>> = (0..3).map(|j| s.feature(j).to_vec()).collect();
        let degenerate = DiscreteSetting::from_features(&[1.0, 0.0, 0.0], full.clone(), 2, 8).unwrap();
        let single = DiscreteSetting::from_features(&[1.0], vec![full[0].clone()], 2, 8).unwrap();
        assert_eq!(assemble_operator(&degenerate), assemble_operator(&single));
    }

    #[test]
    fn spectrum_invariants() {
        let s = small_setting(4, 3, 16, 3);
        let spec = KernelSpectrum::new(&s).unwrap();
        assert!(spec.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        assert!(spec.eigenvalues().iter().all(|&l| l >= 0.0));
        let gram = spec.gram();
        let id = DMatrix::<f64>::identity(spec.dim(), spec.dim());
        assert!((gram - id).amax() < 1e-8);
        // rank is at most the number of atoms
        assert!((4..spec.dim()).all(|j| !spec.is_active(j)));
    }

    #[test]
    fn approximation_error_examples() {
        let s = small_setting(3, 2, 16, 4);
        let spec = KernelSpectrum::new(&s).unwrap();
        assert_eq!(regularized_rkhs_error(&spec, &vec![0.0; s.dim()], 0.1).unwrap(), 0.0);
        let e1 = spec.eigenvector(0);
        let l1 = spec.eigenvalues()[0];
        assert!((regularized_rkhs_error(&spec, &e1, l1).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spectral_error_matches_direct_ridge() {
        for seed in 0..5 {
            let s = small_setting(5, 3, 16, 10 + seed);
            let spec = KernelSpectrum::new(&s).unwrap();
            let g = random_vector(s.dim(), seed);
            for t in [1e-1, 1e-3, 1e-5] {
                let a = regularized_rkhs_error(&spec, &g, t).unwrap();
                let b = s.direct_ridge_error(&g, t).unwrap();
                assert!((a - b).abs() <= 1e-9 * b.max(1e-300), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn error_decreases_to_null_space_mass() {
        let s = small_setting(4, 2, 16, 5);
        let spec = KernelSpectrum::new(&s).unwrap();
        let g = random_vector(s.dim(), 5);
        let mut prev = f64::INFINITY;
        for e in 0..12 {
            let v = regularized_rkhs_error(&spec, &g, 10f64.powi(-e)).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        let limit = null_space_mass(&spec, &g).unwrap();
        let v = regularized_rkhs_error(&spec, &g, 1e-13 * spec.eigenvalues()[0]).unwrap();
        assert!((v - limit).abs() < 1e-2 * limit);

        let in_span = project_active(&spec, &g).unwrap();
        assert!(null_space_mass(&spec, &in_span).unwrap() < 1e-20);
        assert!(regularized_rkhs_error(&spec, &in_span, 1e-14).unwrap() < 1e-6);
    }

    #[test]
    fn source_condition_examples() {
        let s = small_setting(4, 2, 16, 6);
        let spec = KernelSpectrum::new(&s).unwrap();
        let f = project_active(&spec, &random_vector(s.dim(), 6)).unwrap();
        let id = source_condition_instance(&spec, &f, 0.0).unwrap();
        let norm_sq = s.inner(&f, &f);
        assert!((id.certificate - norm_sq).abs() < 1e-10 * norm_sq);
        for (a, b) in id.g.iter().zip(&f) {
            assert!((a - b).abs() < 1e-10);
        }
        let e1 = spec.eigenvector(0);
        let sq = source_condition_instance(&spec, &e1, 2.0).unwrap();
        for (a, b) in sq.g.iter().zip(&e1) {
            assert!((a - spec.eigenvalues()[0] * b).abs() < 1e-10);
        }
        let off_support = random_vector(s.dim(), 7);
        assert!(matches!(
            source_condition_instance(&spec, &off_support, 0.5),
            Err(Error::Support { .. })
        ));
    }

    #[test]
    fn rate_bound_holds_on_grid() {
        let s = small_setting(6, 2, 16, 8);
        let spec = KernelSpectrum::new(&s).unwrap();
        let f = project_active(&spec, &random_vector(s.dim(), 8)).unwrap();
        let rs = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0];
        let ts: Vec<f64> = (1..=6).map(|e| 10f64.powi(-e)).collect();
        for pt in rate_sweep(&spec, &f, &rs, &ts).unwrap() {
            assert!(pt.error <= pt.bound + 1e-10, "{pt:?}");
        }
    }
}
