//! Fourier-space random features and the random feature model.
//!
//! For an input `u` and a feature parameter `θ` (both grid functions) the
//! feature is
//!
//! ```text
//! φ(u; θ) = scale · ELU( gain · F⁻¹{ 1(|k| ≤ k_max) χ_k (Fu)_k (Fθ)_k } )
//! ```
//!
//! and the model with coefficients `α` is `Φ(u; α) = (1/M) Σ_m α_m φ(u; θ_m)`.

use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grf::{matern_eigenvalue, MaternSpec};
use crate::grid::{
    check_power_of_two, forward_transform, inverse_plan, inverse_transform, wavenumber,
    GridFunction, SpectralCoeffs,
};

pub const MODEL_MAGIC: &[u8; 4] = b"VVRM";
pub const MODEL_VERSION: u32 = 1;

/// Default byte budget for materialized feature tables.
pub const DEFAULT_TABLE_BUDGET: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    /// `χ_k = δ + (1−δ)·max(0, 1 − |k|/k_max)^β`.
    #[default]
    Ramp,
    /// `χ_k = 1`.
    Unit,
}

impl FilterKind {
    fn code(self) -> u32 {
        match self {
            FilterKind::Ramp => 0,
            FilterKind::Unit => 1,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(FilterKind::Ramp),
            1 => Some(FilterKind::Unit),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub delta: f64,
    pub beta: f64,
    #[serde(default)]
    pub kind: FilterKind,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            delta: 0.32,
            beta: 0.1,
            kind: FilterKind::Ramp,
        }
    }
}

impl FilterSpec {
    pub fn unit() -> Self {
        Self {
            kind: FilterKind::Unit,
            ..Self::default()
        }
    }

    /// `χ_k` in `[0, 1]`, symmetric in `k`.
    pub fn weight(&self, k: i64, k_max: usize) -> f64 {
        match self.kind {
            FilterKind::Unit => 1.0,
            FilterKind::Ramp => {
                let ramp = (1.0 - k.unsigned_abs() as f64 / k_max as f64).max(0.0);
                (self.delta + (1.0 - self.delta) * ramp.powf(self.beta)).clamp(0.0, 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub k_max: usize,
    pub scale: f64,
    /// Multiplier on the pre-activation field. Fourier coefficients here are
    /// normalized as series coefficients, which makes the spectral product of
    /// a unit-variance input and a draw from the default feature measure tiny;
    /// the gain puts the activation in its nonlinear range.
    pub gain: f64,
    #[serde(default)]
    pub filter: FilterSpec,
}

/// Default pre-activation gain: [`calibrated_gain`] for the unit-variance
/// input measure and the default feature measure with a unit target, rounded.
/// Inputs from [`MaternSpec::benchmark_input`] then see a pre-activation
/// standard deviation of about 0.1.
pub const DEFAULT_GAIN: f64 = 1970.0;

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            k_max: 64,
            scale: 2.6,
            gain: DEFAULT_GAIN,
            filter: FilterSpec::default(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max < 1 {
            return Err(Error::InvalidValue("k_max must be >= 1".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidValue(format!("scale must be > 0, got {}", self.scale)));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::InvalidValue(format!("gain must be > 0, got {}", self.gain)));
        }
        if !(0.0..=1.0).contains(&self.filter.delta) || self.filter.beta < 0.0 {
            return Err(Error::InvalidValue("filter needs delta in [0,1] and beta >= 0".into()));
        }
        Ok(())
    }

    /// `gain · 1(|k| ≤ k_max) · χ_k` in FFT order.
    fn spectral_mask(&self, p: usize) -> Vec<f64> {
        (0..p)
            .map(|idx| {
                let k = wavenumber(idx, p);
                if k.unsigned_abs() as usize <= self.k_max {
                    self.gain * self.filter.weight(k, self.k_max)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Pointwise variance of the pre-activation field for independent inputs and
/// parameters drawn from `input` and `feature`, on a `p`-point grid.
pub fn pre_activation_variance(cfg: &FeatureConfig, input: &MaternSpec, feature: &MaternSpec, p: usize) -> f64 {
    let half = p as i64 / 2;
    let band = (cfg.k_max as i64).min(half - 1);
    (-band..=band)
        .filter(|&k| k != 0 || (input.include_mean && feature.include_mean))
        .map(|k| {
            let chi = cfg.filter.weight(k, cfg.k_max);
            cfg.gain * cfg.gain * chi * chi * matern_eigenvalue(input, k) * matern_eigenvalue(feature, k)
        })
        .sum()
}

/// The gain giving the pre-activation field pointwise standard deviation
/// `target` (the other fields of `cfg` are kept).
pub fn calibrated_gain(cfg: &FeatureConfig, input: &MaternSpec, feature: &MaternSpec, p: usize, target: f64) -> f64 {
    let unit = FeatureConfig { gain: 1.0, ..*cfg };
    target / pre_activation_variance(&unit, input, feature, p).sqrt()
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// The band-limited, filtered spectral product before the activation.
pub fn pre_activation(u: &GridFunction, theta: &GridFunction, cfg: &FeatureConfig) -> Result<GridFunction> {
    if u.p() != theta.p() {
        return Err(Error::Dimension {
            expected: u.p(),
            got: theta.p(),
        });
    }
    let cu = forward_transform(u)?;
    let ct = forward_transform(theta)?;
    let mask = cfg.spectral_mask(u.p());
    let prod: Vec<Complex64> = cu
        .as_fft_order()
        .iter()
        .zip(ct.as_fft_order())
        .zip(&mask)
        .map(|((a, b), m)| a * (b * *m))
        .collect();
    Ok(inverse_transform(&SpectralCoeffs::from_fft_order(prod)?))
}

pub fn apply_feature(u: &GridFunction, theta: &GridFunction, cfg: &FeatureConfig) -> Result<GridFunction> {
    if u.p() != theta.p() {
        return Err(Error::Dimension {
            expected: u.p(),
            got: theta.p(),
        });
    }
    let bank = FeatureBank::new(std::slice::from_ref(theta), cfg)?;
    Ok(GridFunction::from_vec_unchecked(bank.evaluate(u)?))
}

/// Feature parameters with their masked spectra precomputed, for evaluating
/// all `M` features of an input at once.
#[derive(Debug, Clone)]
pub struct FeatureBank {
    cfg: FeatureConfig,
    p: usize,
    spectra: Vec<Vec<Complex64>>,
}

impl FeatureBank {
    pub fn new(thetas: &[GridFunction], cfg: &FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let p = thetas.first().map(|t| t.p()).ok_or_else(|| {
            Error::InvalidValue("at least one feature parameter is required".into())
        })?;
        check_power_of_two(p)?;
        let mask = cfg.spectral_mask(p);
        let spectra = thetas
            .iter()
            .map(|t| {
                if t.p() != p {
                    return Err(Error::Dimension {
                        expected: p,
                        got: t.p(),
                    });
                }
                let c = forward_transform(t)?;
                Ok(c.as_fft_order().iter().zip(&mask).map(|(z, m)| z * *m).collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self { cfg: *cfg, p, spectra })
    }

    pub fn m(&self) -> usize {
        self.spectra.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    /// Writes `φ(u; θ_m)` for every `m` into `out` (layout `[m][i]`, length `M·p`).
    ///
    /// Two real inverse transforms share one complex FFT: both pre-activation
    /// spectra are Hermitian, so `F⁻¹(a + i b)` carries them in its real and
    /// imaginary parts.
    pub fn evaluate_into(&self, u: &GridFunction, out: &mut [f64]) -> Result<()> {
        let p = self.p;
        if u.p() != p {
            return Err(Error::Dimension { expected: p, got: u.p() });
        }
        debug_assert_eq!(out.len(), self.m() * p);
        let cu = forward_transform(u)?;
        let cu = cu.as_fft_order();
        let plan = inverse_plan(p);
        let mut buf = vec![Complex64::new(0.0, 0.0); p];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let scale = self.cfg.scale;
        let mut m = 0;
        while m < self.m() {
            let first = &self.spectra[m];
            if m + 1 < self.m() {
                let second = &self.spectra[m + 1];
                for i in 0..p {
                    let a = cu[i] * first[i];
                    let b = cu[i] * second[i];
                    buf[i] = Complex64::new(a.re - b.im, a.im + b.re);
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                let (lo, hi) = out[m * p..(m + 2) * p].split_at_mut(p);
                for i in 0..p {
                    lo[i] = scale * elu(buf[i].re);
                    hi[i] = scale * elu(buf[i].im);
                }
                m += 2;
            } else {
                for i in 0..p {
                    buf[i] = cu[i] * first[i];
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for (o, z) in out[m * p..(m + 1) * p].iter_mut().zip(&buf) {
                    *o = scale * elu(z.re);
                }
                m += 1;
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, u: &GridFunction) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.m() * self.p];
        self.evaluate_into(u, &mut out)?;
        Ok(out)
    }

    /// `(1/M) Σ_m α_m φ(u; θ_m)`.
    pub fn predict(&self, alpha: &[f64], u: &GridFunction) -> Result<GridFunction> {
        if alpha.len() != self.m() {
            return Err(Error::Dimension {
                expected: self.m(),
                got: alpha.len(),
            });
        }
        let feats = self.evaluate(u)?;
        Ok(combine(alpha, &feats, self.p))
    }
}

/// `(1/M) Σ_m α_m block[m]` for a `[m][i]` feature block.
pub(crate) fn combine(alpha: &[f64], block: &[f64], p: usize) -> GridFunction {
    let m = alpha.len();
    let mut out = vec![0.0; p];
    for (a, row) in alpha.iter().zip(block.chunks_exact(p)) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += a * v;
        }
    }
    let inv_m = 1.0 / m as f64;
    out.iter_mut().for_each(|v| *v *= inv_m);
    GridFunction::from_vec_unchecked(out)
}

/// Evaluated features `φ(u_n; θ_m)`, stored `[n][m][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    n: usize,
    m: usize,
    p: usize,
    data: Vec<f64>,
}

impl FeatureTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// All `M` features of sample `n`, layout `[m][i]`.
    pub fn block(&self, n: usize) -> &[f64] {
        let len = self.m * self.p;
        &self.data[n * len..(n + 1) * len]
    }

    pub fn entry(&self, n: usize, m: usize) -> GridFunction {
        let start = (n * self.m + m) * self.p;
        GridFunction::from_vec_unchecked(self.data[start..start + self.p].to_vec())
    }

    /// Builds a table from precomputed blocks (layout `[n][m][i]`).
    pub fn from_raw(n: usize, m: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * m * p {
            return Err(Error::Dimension {
                expected: n * m * p,
                got: data.len(),
            });
        }
        Ok(Self { n, m, p, data })
    }
}

/// Bytes a materialized table of this shape needs.
pub fn table_bytes(n: usize, m: usize, p: usize) -> usize {
    n.saturating_mul(m).saturating_mul(p).saturating_mul(std::mem::size_of::<f64>())
}

/// Evaluates all `N × M` features, refusing when the table would exceed
/// `budget` bytes.
pub fn feature_matrix(
    thetas: &[GridFunction],
    cfg: &FeatureConfig,
    inputs: &[GridFunction],
    budget: usize,
) -> Result<FeatureTable> {
    let bank = FeatureBank::new(thetas, cfg)?;
    feature_matrix_from_bank(&bank, inputs, budget)
}

pub fn feature_matrix_from_bank(
    bank: &FeatureBank,
    inputs: &[GridFunction],
    budget: usize,
) -> Result<FeatureTable> {
    let (m, p) = (bank.m(), bank.p());
    let needed = table_bytes(inputs.len(), m, p);
    if needed > budget {
        return Err(Error::Capacity { needed, budget });
    }
    let mut data = vec![0.0; inputs.len() * m * p];
    if m * p > 0 {
        data.par_chunks_mut(m * p)
            .zip(inputs.par_iter())
            .try_for_each(|(out, u)| bank.evaluate_into(u, out))?;
    }
    Ok(FeatureTable {
        n: inputs.len(),
        m,
        p,
        data,
    })
}

/// A trained (or hand-built) random feature model.
#[derive(Debug, Clone, PartialEq)]
pub struct RfModel {
    pub config: FeatureConfig,
    thetas: Vec<GridFunction>,
    alpha: Vec<f64>,
    pub lambda_used: f64,
}

impl RfModel {
    pub fn new(config: FeatureConfig, thetas: Vec<GridFunction>, alpha: Vec<f64>, lambda_used: f64) -> Result<Self> {
        config.validate()?;
        if thetas.is_empty() {
            return Err(Error::InvalidValue("a model needs M >= 1 features".into()));
        }
        if thetas.len() != alpha.len() {
            return Err(Error::Dimension {
                expected: thetas.len(),
                got: alpha.len(),
            });
        }
        let p = thetas[0].p();
        if let Some(t) = thetas.iter().find(|t| t.p() != p) {
            return Err(Error::Dimension { expected: p, got: t.p() });
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidValue("non-finite coefficient".into()));
        }
        Ok(Self {
            config,
            thetas,
            alpha,
            lambda_used,
        })
    }

    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    pub fn p(&self) -> usize {
        self.thetas[0].p()
    }

    pub fn thetas(&self) -> &[GridFunction] {
        &self.thetas
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn bank(&self) -> Result<FeatureBank> {
        FeatureBank::new(&self.thetas, &self.config)
    }

    pub fn predict(&self, u: &GridFunction) -> Result<GridFunction> {
        rfm_predict(self, u)
    }

    pub fn predict_many(&self, inputs: &[GridFunction]) -> Result<Vec<GridFunction>> {
        let bank = self.bank()?;
        inputs.par_iter().map(|u| bank.predict(&self.alpha, u)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MODEL_MAGIC);
        b.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.config.k_max as u32).to_le_bytes());
        b.extend_from_slice(&self.config.scale.to_le_bytes());
        b.extend_from_slice(&self.config.gain.to_le_bytes());
        b.extend_from_slice(&self.config.filter.kind.code().to_le_bytes());
        b.extend_from_slice(&self.config.filter.delta.to_le_bytes());
        b.extend_from_slice(&self.config.filter.beta.to_le_bytes());
        b.extend_from_slice(&(self.m() as u64).to_le_bytes());
        b.extend_from_slice(&(self.p() as u32).to_le_bytes());
        b.extend_from_slice(&self.lambda_used.to_le_bytes());
        for t in &self.thetas {
            for v in t.values() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        for a in &self.alpha {
            b.extend_from_slice(&a.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::format(path, reason);
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok_or_else(|| bad("truncated header"))? != MODEL_MAGIC {
            return Err(bad("missing VVRM header"));
        }
        let header = (|| {
            let version = r.u32()?;
            let k_max = r.u32()? as usize;
            let scale = r.f64()?;
            let gain = r.f64()?;
            let kind = r.u32()?;
            let delta = r.f64()?;
            let beta = r.f64()?;
            let m = r.u64()? as usize;
            let p = r.u32()? as usize;
            let lambda = r.f64()?;
            Some((version, k_max, scale, gain, kind, delta, beta, m, p, lambda))
        })()
        .ok_or_else(|| bad("truncated header"))?;
        let (version, k_max, scale, gain, kind, delta, beta, m, p, lambda) = header;
        if version != MODEL_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let kind = FilterKind::from_code(kind).ok_or_else(|| bad("unknown filter kind"))?;
        let expected = m
            .checked_mul(p + 1)
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(|| bad("size overflow"))?;
        if bytes.len() - r.pos != expected {
            return Err(bad("payload size does not match header"));
        }
        let mut thetas = Vec::with_capacity(m);
        for _ in 0..m {
            let vals: Vec<f64> = (0..p).map(|_| r.f64().unwrap()).collect();
            thetas.push(GridFunction::new(vals).map_err(|e| bad(&e.to_string()))?);
        }
        let alpha: Vec<f64> = (0..m).map(|_| r.f64().unwrap()).collect();
        let config = FeatureConfig {
            k_max,
            scale,
            gain,
            filter: FilterSpec { delta, beta, kind },
        };
        RfModel::new(config, thetas, alpha, lambda).map_err(|e| bad(&e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// `Φ(u; α) = (1/M) Σ_m α_m φ(u; θ_m)`.
pub fn rfm_predict(model: &RfModel, u: &GridFunction) -> Result<GridFunction> {
    if u.p() != model.p() {
        return Err(Error::Dimension {
            expected: model.p(),
            got: u.p(),
        });
    }
    model.bank()?.predict(&model.alpha, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grf::{sample_grf, MaternSpec};
    use crate::grid::grid_point;
    use crate::seed;
    use std::f64::consts::PI;

    #[test]
    fn default_gain_is_the_calibrated_gain() {
        let cfg = FeatureConfig::default();
        for p in [64, 128, 256] {
            let g = calibrated_gain(&cfg, &MaternSpec::input_default(), &MaternSpec::feature_default(), p, 1.0);
            assert!((g / DEFAULT_GAIN - 1.0).abs() < 0.01, "p = {p}: {g}");
            let sd = pre_activation_variance(&cfg, &MaternSpec::benchmark_input(), &MaternSpec::feature_default(), p).sqrt();
            assert!((sd - 0.1).abs() < 1e-3, "p = {p}: {sd}");
        }
    }

    fn draw(spec: &MaternSpec, p: usize, idx: u64) -> GridFunction {
        sample_grf(spec, p, &mut seed::stream(4242, idx)).unwrap()
    }

    fn inputs(p: usize, n: usize) -> Vec<GridFunction> {
        (0..n).map(|i| draw(&MaternSpec::input_default(), p, i as u64)).collect()
    }

    fn thetas(p: usize, m: usize) -> Vec<GridFunction> {
        (0..m)
            .map(|i| draw(&MaternSpec::feature_default(), p, 1000 + i as u64))
            .collect()
    }

    /// Direct O(p²) evaluation of the feature from its definition.
    fn naive_feature(u: &GridFunction, theta: &GridFunction, cfg: &FeatureConfig) -> Vec<f64> {
        let p = u.p();
        let dft = |f: &GridFunction, k: i64| -> Complex64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..p {
                acc += Complex64::from_polar(f.values()[i], -(k as f64) * grid_point(i, p));
            }
            acc / p as f64
        };
        let half = p as i64 / 2;
        let coeffs: Vec<(i64, Complex64)> = (-half..half)
            .filter(|k| k.unsigned_abs() as usize <= cfg.k_max)
            .map(|k| (k, cfg.gain * cfg.filter.weight(k, cfg.k_max) * dft(u, k) * dft(theta, k)))
            .collect();
        (0..p)
            .map(|i| {
                let x = grid_point(i, p);
                let z: Complex64 = coeffs
                    .iter()
                    .map(|(k, c)| c * Complex64::from_polar(1.0, *k as f64 * x))
                    .sum();
                cfg.scale * elu(z.re)
            })
            .collect()
    }

    #[test]
    fn zero_inputs_give_zero_features() {
        let cfg = FeatureConfig::default();
        let t = thetas(32, 1).remove(0);
        let u = inputs(32, 1).remove(0);
        let z = GridFunction::zeros(32);
        assert_eq!(apply_feature(&z, &t, &cfg).unwrap().max_abs(), 0.0);
        assert_eq!(apply_feature(&u, &z, &cfg).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn cosine_product_matches_naive_evaluation() {
        let cfg = FeatureConfig {
            filter: FilterSpec::unit(),
            gain: 1.0,
            ..FeatureConfig::default()
        };
        let u = GridFunction::from_fn(32, |x| (2.0 * x).cos()).unwrap();
        let t = GridFunction::from_fn(32, |x| (2.0 * x).cos()).unwrap();
        // the spectral product keeps only k = ±2, each with weight 1/4
        let z = pre_activation(&u, &t, &cfg).unwrap();
        let c = forward_transform(&z).unwrap();
        for k in -16..16 {
            let expected = if k == 2 || k == -2 { 0.25 } else { 0.0 };
            assert!((c.mode(k).re - expected).abs() < 1e-12);
        }
        let fast = apply_feature(&u, &t, &cfg).unwrap();
        let slow = naive_feature(&u, &t, &cfg);
        for (a, b) in fast.values().iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10);
        }
        for (i, v) in fast.values().iter().enumerate() {
            let x = grid_point(i, 32);
            assert!((v - 2.6 * elu(0.5 * (2.0 * x).cos())).abs() < 1e-12);
        }
    }

    #[test]
    fn random_fields_match_naive_evaluation() {
        let cfg = FeatureConfig {
            k_max: 10,
            ..FeatureConfig::default()
        };
        let u = inputs(32, 1).remove(0);
        let t = thetas(32, 1).remove(0);
        let fast = apply_feature(&u, &t, &cfg).unwrap();
        let slow = naive_feature(&u, &t, &cfg);
        for (a, b) in fast.values().iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn pre_activation_is_band_limited() {
        let cfg = FeatureConfig {
            k_max: 5,
            ..FeatureConfig::default()
        };
        let z = pre_activation(&inputs(64, 1)[0], &thetas(64, 1)[0], &cfg).unwrap();
        let c = forward_transform(&z).unwrap();
        for k in -32i64..32 {
            if k.abs() > 5 {
                assert!(c.mode(k).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn filter_is_symmetric_and_bounded() {
        let f = FilterSpec::default();
        for k in -80..80 {
            let w = f.weight(k, 64);
            assert!((0.0..=1.0).contains(&w));
            assert_eq!(w, f.weight(-k, 64));
        }
        assert!((f.weight(0, 64) - 1.0).abs() < 1e-15);
        assert!((f.weight(64, 64) - 0.32).abs() < 1e-15);
    }

    #[test]
    fn bank_matches_single_feature_path() {
        let cfg = FeatureConfig::default();
        let ts = thetas(32, 5);
        let u = inputs(32, 1).remove(0);
        let bank = FeatureBank::new(&ts, &cfg).unwrap();
        let all = bank.evaluate(&u).unwrap();
        for (m, t) in ts.iter().enumerate() {
            let one = apply_feature(&u, t, &cfg).unwrap();
            for (a, b) in all[m * 32..(m + 1) * 32].iter().zip(one.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn prediction_examples() {
        let cfg = FeatureConfig::default();
        let ts = thetas(32, 3);
        let u = inputs(32, 1).remove(0);
        let zero = RfModel::new(cfg, ts.clone(), vec![0.0; 3], 0.0).unwrap();
        assert_eq!(rfm_predict(&zero, &u).unwrap().max_abs(), 0.0);

        let single = RfModel::new(cfg, vec![ts[0].clone()], vec![1.0], 0.0).unwrap();
        assert_eq!(
            rfm_predict(&single, &u).unwrap(),
            apply_feature(&u, &ts[0], &cfg).unwrap()
        );

        let alpha = vec![0.7, -1.3, 2.2];
        let model = RfModel::new(cfg, ts.clone(), alpha.clone(), 0.0).unwrap();
        let mut expected = GridFunction::zeros(32);
        for (a, t) in alpha.iter().zip(&ts) {
            expected.axpy(a / 3.0, &apply_feature(&u, t, &cfg).unwrap()).unwrap();
        }
        let got = rfm_predict(&model, &u).unwrap();
        for (a, b) in got.values().iter().zip(expected.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(rfm_predict(&model, &GridFunction::zeros(64)).is_err());
    }

    #[test]
    fn feature_matrix_examples() {
        let cfg = FeatureConfig::default();
        let ts = thetas(16, 2);
        let us = inputs(16, 2);
        let empty = feature_matrix(&ts, &cfg, &[], DEFAULT_TABLE_BUDGET).unwrap();
        assert_eq!(empty.n(), 0);
        let one = feature_matrix(&ts[..1], &cfg, &us[..1], DEFAULT_TABLE_BUDGET).unwrap();
        assert_eq!(one.entry(0, 0), apply_feature(&us[0], &ts[0], &cfg).unwrap());
        let table = feature_matrix(&ts, &cfg, &us, DEFAULT_TABLE_BUDGET).unwrap();
        for n in 0..2 {
            for m in 0..2 {
                let direct = apply_feature(&us[n], &ts[m], &cfg).unwrap();
                for (a, b) in table.entry(n, m).values().iter().zip(direct.values()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
        assert!(matches!(
            feature_matrix(&ts, &cfg, &us, 100),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn model_file_round_trip() {
        let cfg = FeatureConfig::default();
        let model = RfModel::new(cfg, thetas(16, 3), vec![1.5, -0.25, 1e-300], 7e-4 / 3.0).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..4], b"VVRM");
        let back = RfModel::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_bytes(), bytes);
        assert!(RfModel::from_bytes(&bytes[..bytes.len() - 1], Path::new("mem")).is_err());
    }

    /// Feature norms under the default measures are finite; their spread is
    /// printed rather than asserted (ELU features are not uniformly bounded).
    #[test]
    fn feature_norm_distribution_is_finite() {
        let cfg = FeatureConfig::default();
        let p = 64;
        let mut norms: Vec<f64> = (0..1000)
            .map(|i| {
                let u = draw(&MaternSpec::input_default(), p, 50_000 + i);
                let t = draw(&MaternSpec::feature_default(), p, 90_000 + i);
                crate::grid::l2_norm_sq(&apply_feature(&u, &t, &cfg).unwrap()).sqrt()
            })
            .collect();
        assert!(norms.iter().all(|v| v.is_finite()));
        norms.sort_by(f64::total_cmp);
        eprintln!(
            "feature norm quantiles: min {:.3} median {:.3} p99 {:.3} max {:.3} (unit bound would be 1, 2π-normalized L2 of 1 is {:.3})",
            norms[0],
            norms[500],
            norms[990],
            norms[999],
            (2.0 * PI).sqrt()
        );
    }
}
