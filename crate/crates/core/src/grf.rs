//! Centered Matérn-type Gaussian random fields on the torus.
//!
//! Fields are synthesized spectrally: Fourier mode `k` receives a centered
//! complex Gaussian with `E|c_k|² = σ²(k² + τ²)^(−γ)`, the conjugate goes to
//! `−k`, and the result is inverse transformed. Coefficients are drawn in
//! order of increasing `|k|`, so the same stream produces the same low modes
//! on every grid size; a field sampled on `p` points is exactly the spectral
//! restriction of the field sampled on `2p`. The Nyquist mode is left at zero.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_power_of_two, inverse_transform, GridFunction, SpectralCoeffs};

/// Covariance `σ²(−d²/dx² + τ²)^(−γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternSpec {
    pub sigma: f64,
    pub tau: f64,
    pub gamma: f64,
    /// Whether the `k = 0` mode is sampled; off by default.
    #[serde(default)]
    pub include_mean: bool,
}

/// Truncation used when summing the spectrum over all wavenumbers.
const SPECTRUM_SUM_MODES: i64 = 1 << 16;

impl MaternSpec {
    pub fn new(sigma: f64, tau: f64, gamma: f64) -> Result<Self> {
        let spec = Self {
            sigma,
            tau,
            gamma,
            include_mean: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidValue(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidValue(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.gamma > 0.5 && self.gamma.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "gamma must exceed 1/2, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    pub fn with_mean(mut self, include_mean: bool) -> Self {
        self.include_mean = include_mean;
        self
    }

    /// The feature-parameter measure: `1.8²(−d²/dx² + 15²)^(−3)`.
    pub fn feature_default() -> Self {
        Self {
            sigma: 1.8,
            tau: 15.0,
            gamma: 3.0,
            include_mean: false,
        }
    }

    /// Input measure: `τ = 3`, `γ = 2`, amplitude normalized so the field has
    /// unit pointwise variance in the continuum limit.
    pub fn input_default() -> Self {
        Self::unit_variance(3.0, 2.0, false)
    }

    /// Benchmark input measure: the shape of [`MaternSpec::input_default`]
    /// with pointwise standard deviation 0.1, where the time-one Burgers map
    /// is only weakly nonlinear.
    pub fn benchmark_input() -> Self {
        let base = Self::input_default();
        Self {
            sigma: 0.1 * base.sigma,
            ..base
        }
    }

    /// Chooses `σ` so that `Σ_k λ_k = 1` over the sampled modes.
    pub fn unit_variance(tau: f64, gamma: f64, include_mean: bool) -> Self {
        let base = Self {
            sigma: 1.0,
            tau,
            gamma,
            include_mean,
        };
        let total = base.pointwise_variance(None);
        Self {
            sigma: total.sqrt().recip(),
            ..base
        }
    }

    /// Pointwise variance `Σ_k λ_k` over the modes a `p`-point grid samples,
    /// or over all modes when `p` is `None`.
    pub fn pointwise_variance(&self, p: Option<usize>) -> f64 {
        let kmax = p.map(|p| p as i64 / 2 - 1).unwrap_or(SPECTRUM_SUM_MODES);
        let tail: f64 = (1..=kmax).rev().map(|k| 2.0 * matern_eigenvalue(self, k)).sum();
        if self.include_mean {
            tail + matern_eigenvalue(self, 0)
        } else {
            tail
        }
    }
}

/// `σ²(k² + τ²)^(−γ)`.
pub fn matern_eigenvalue(spec: &MaternSpec, k: i64) -> f64 {
    let k = k as f64;
    spec.sigma * spec.sigma * (k * k + spec.tau * spec.tau).powf(-spec.gamma)
}

/// Draws the Fourier coefficients of one field.
pub fn sample_grf_coeffs<R: Rng + ?Sized>(
    spec: &MaternSpec,
    p: usize,
    rng: &mut R,
) -> Result<SpectralCoeffs> {
    check_power_of_two(p)?;
    let mut c = SpectralCoeffs::zeros(p)?;
    // k = 0 is always drawn to keep the stream aligned across configurations
    let xi0: f64 = rng.sample(StandardNormal);
    if spec.include_mean {
        c.set_mode(0, Complex64::new(matern_eigenvalue(spec, 0).sqrt() * xi0, 0.0));
    }
    let half = p as i64 / 2;
    for k in 1..half {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let s = (matern_eigenvalue(spec, k) / 2.0).sqrt();
        let z = Complex64::new(s * a, s * b);
        c.set_mode(k, z);
        c.set_mode(-k, z.conj());
    }
    Ok(c)
}

pub fn sample_grf<R: Rng + ?Sized>(spec: &MaternSpec, p: usize, rng: &mut R) -> Result<GridFunction> {
    Ok(inverse_transform(&sample_grf_coeffs(spec, p, rng)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{forward_transform, resample};
    use crate::seed;

    #[test]
    fn eigenvalue_examples() {
        let measure = MaternSpec::new(1.8, 15.0, 3.0).unwrap();
        let expected = 1.8f64.powi(2) * 15f64.powi(-6);
        assert!((matern_eigenvalue(&measure, 0) - expected).abs() < 1e-22);
        let unit = MaternSpec::new(1.0, 1.0, 1.0).unwrap();
        assert!((matern_eigenvalue(&unit, 1) - 0.5).abs() < 1e-15);
        for k in 0..20 {
            assert_eq!(matern_eigenvalue(&measure, k), matern_eigenvalue(&measure, -k));
            assert!(matern_eigenvalue(&measure, k + 1) < matern_eigenvalue(&measure, k));
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(MaternSpec::new(0.0, 1.0, 1.0).is_err());
        assert!(MaternSpec::new(1.0, -1.0, 1.0).is_err());
        assert!(MaternSpec::new(1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn vanishing_amplitude() {
        let spec = MaternSpec::new(1e-300, 1.0, 1.0).unwrap();
        let f = sample_grf(&spec, 64, &mut seed::stream(3, 0)).unwrap();
        assert!(f.max_abs() < 1e-100);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = MaternSpec::input_default();
        let a = sample_grf(&spec, 64, &mut seed::stream(11, 5)).unwrap();
        let b = sample_grf(&spec, 64, &mut seed::stream(11, 5)).unwrap();
        assert_eq!(a, b);
    }

    /// The modes below the coarse Nyquist frequency are shared; the coarse
    /// draw leaves its Nyquist mode empty.
    #[test]
    fn coarse_sample_is_restriction_of_fine_sample() {
        let spec = MaternSpec::input_default();
        let fine = sample_grf(&spec, 128, &mut seed::stream(2, 9)).unwrap();
        let coarse = sample_grf(&spec, 32, &mut seed::stream(2, 9)).unwrap();
        let cf = forward_transform(&fine).unwrap();
        let cc = forward_transform(&coarse).unwrap();
        for k in -15i64..16 {
            assert!((cf.mode(k) - cc.mode(k)).norm() < 1e-14);
        }
        assert!(cc.mode(16).norm() < 1e-14);
        let band_limited = resample(&resample(&fine, 32).unwrap(), 128).unwrap();
        let truncated = resample(&coarse, 128).unwrap();
        let gap: f64 = band_limited
            .values()
            .iter()
            .zip(truncated.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        // the only difference is the folded k = ±16 mode of the fine draw
        assert!(gap <= 2.0 * cf.mode(16).norm() + 1e-12);
    }

    #[test]
    fn unit_variance_normalization() {
        let spec = MaternSpec::input_default();
        assert!((spec.pointwise_variance(None) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthesized_field_is_real() {
        let spec = MaternSpec::input_default();
        let c = sample_grf_coeffs(&spec, 64, &mut seed::stream(1, 1)).unwrap();
        assert!(c.hermitian_defect() < 1e-12);
        let mut buf = c.as_fft_order().to_vec();
        crate::grid::inverse_plan(64).process(&mut buf);
        assert!(buf.iter().all(|z| z.im.abs() < 1e-12));
    }

    /// Monte Carlo moments over 10⁴ draws: per-mode variance, pointwise
    /// stationarity, and decorrelation of distinct modes.
    #[test]
    fn monte_carlo_moments() {
        let spec = MaternSpec::new(1.0, 1.0, 1.0).unwrap();
        let p = 64;
        let n = 10_000;
        let mut mode_var = [0.0f64; 5];
        let mut cross = 0.0f64;
        let mut cross_sq = 0.0f64;
        let mut point_var = vec![0.0f64; p];
        for i in 0..n {
            let f = sample_grf(&spec, p, &mut seed::stream(77, i as u64)).unwrap();
            let c = forward_transform(&f).unwrap();
            for (k, v) in mode_var.iter_mut().enumerate().skip(1) {
                *v += c.mode(k as i64).norm_sqr();
            }
            // Re c_1 · Re c_2 has mean zero for independent modes
            let x = c.mode(1).re * c.mode(2).re;
            cross += x;
            cross_sq += x * x;
            for (acc, v) in point_var.iter_mut().zip(f.values()) {
                *acc += v * v;
            }
        }
        for k in 1..=4 {
            let emp = mode_var[k] / n as f64;
            let exact = matern_eigenvalue(&spec, k as i64);
            assert!((emp / exact - 1.0).abs() < 0.05, "k={k}: {emp} vs {exact}");
        }
        let mean = cross / n as f64;
        let se = ((cross_sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se);
        let target = spec.pointwise_variance(Some(p));
        for acc in point_var {
            assert!((acc / n as f64 / target - 1.0).abs() < 0.05);
        }
    }
}
