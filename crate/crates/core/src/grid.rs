//! Periodic grid functions on the torus (0, 2π) and their Fourier coefficients.
//!
//! A [`GridFunction`] holds samples at `x_i = 2π i / p`. The forward transform
//! divides by `p`, so the `k = 0` coefficient is the field mean and the
//! inverse transform is the plain Fourier sum `f(x) = Σ_k c_k e^{ikx}`. The L²
//! inner product uses the rectangle rule with weight `2π / p`, which is exact
//! for trigonometric polynomials below the Nyquist limit. Under these
//! conventions Parseval reads `‖f‖² = 2π Σ_k |c_k|²`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn forward_plan(p: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|pl| pl.borrow_mut().plan_fft_forward(p))
}

pub(crate) fn inverse_plan(p: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|pl| pl.borrow_mut().plan_fft_inverse(p))
}

pub fn check_power_of_two(p: usize) -> Result<()> {
    if p >= 2 && p.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::Sizing { p })
    }
}

/// Signed wavenumber stored at FFT index `idx` on a grid of size `p`.
#[inline]
pub fn wavenumber(idx: usize, p: usize) -> i64 {
    if idx < p / 2 {
        idx as i64
    } else {
        idx as i64 - p as i64
    }
}

/// FFT index holding wavenumber `k`, if `k` is representable on `p` points.
#[inline]
pub fn index_of(k: i64, p: usize) -> Option<usize> {
    let half = (p / 2) as i64;
    if k >= -half && k < half {
        Some(if k >= 0 { k as usize } else { (k + p as i64) as usize })
    } else {
        None
    }
}

/// Real samples of a function on the uniform periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidValue("grid function needs p >= 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "non-finite grid value at index {i}"
            )));
        }
        Ok(Self { values })
    }

    /// Wraps values already known to be finite (internal hot paths).
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }

    pub fn zeros(p: usize) -> Self {
        Self { values: vec![0.0; p] }
    }

    pub fn constant(c: f64, p: usize) -> Self {
        Self { values: vec![c; p] }
    }

    /// Samples `f` at the grid points `2π i / p`.
    pub fn from_fn(p: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..p).map(|i| f(grid_point(i, p))).collect())
    }

    pub fn p(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.p() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.p() == other.p() {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.p(),
                got: other.p(),
            })
        }
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.linear_combination(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.linear_combination(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> GridFunction {
        GridFunction::from_vec_unchecked(self.values.iter().map(|v| a * v).collect())
    }

    /// `a·self + b·other`.
    pub fn linear_combination(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        self.check_same_grid(other)?;
        Ok(GridFunction::from_vec_unchecked(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        ))
    }

    /// `self += a·other`.
    pub fn axpy(&mut self, a: f64, other: &GridFunction) -> Result<()> {
        self.check_same_grid(other)?;
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
        Ok(())
    }
}

pub fn grid_point(i: usize, p: usize) -> f64 {
    2.0 * PI * i as f64 / p as f64
}

/// Fourier coefficients in FFT order; [`SpectralCoeffs::mode`] addresses them
/// by signed wavenumber `k ∈ [−p/2, p/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    coeffs: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn from_fft_order(coeffs: Vec<Complex64>) -> Result<Self> {
        check_power_of_two(coeffs.len())?;
        Ok(Self { coeffs })
    }

    pub fn zeros(p: usize) -> Result<Self> {
        check_power_of_two(p)?;
        Ok(Self {
            coeffs: vec![Complex64::new(0.0, 0.0); p],
        })
    }

    pub fn p(&self) -> usize {
        self.coeffs.len()
    }

    pub fn as_fft_order(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn as_fft_order_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn mode(&self, k: i64) -> Complex64 {
        index_of(k, self.p())
            .map(|i| self.coeffs[i])
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    pub fn set_mode(&mut self, k: i64, value: Complex64) {
        if let Some(i) = index_of(k, self.p()) {
            self.coeffs[i] = value;
        }
    }

    /// Largest violation of `c_{−k} = conj(c_k)` over the representable pairs.
    /// The Nyquist mode pairs with itself and must be real.
    pub fn hermitian_defect(&self) -> f64 {
        let p = self.p();
        (0..p)
            .map(|i| {
                let j = (p - i) % p;
                (self.coeffs[i] - self.coeffs[j].conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `2π Σ_k |c_k|²`, equal to the squared L² norm of the synthesized field.
    pub fn energy(&self) -> f64 {
        2.0 * PI * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }
}

pub fn forward_transform(f: &GridFunction) -> Result<SpectralCoeffs> {
    let p = f.p();
    check_power_of_two(p)?;
    let mut buf: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward_plan(p).process(&mut buf);
    let inv_p = 1.0 / p as f64;
    for c in &mut buf {
        *c *= inv_p;
    }
    Ok(SpectralCoeffs { coeffs: buf })
}

/// Synthesizes `Σ_k c_k e^{ikx}` on the grid and keeps the real part.
pub fn inverse_transform(c: &SpectralCoeffs) -> GridFunction {
    let mut buf = c.coeffs.clone();
    inverse_plan(c.p()).process(&mut buf);
    GridFunction::from_vec_unchecked(buf.into_iter().map(|z| z.re).collect())
}

/// `(2π/p) Σ_i f_i g_i`.
pub fn inner_product(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    f.check_same_grid(g)?;
    Ok(weighted_dot(&f.values, &g.values))
}

pub fn l2_norm_sq(f: &GridFunction) -> f64 {
    weighted_dot(&f.values, &f.values)
}

pub(crate) fn weighted_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    quadrature_weight(a.len()) * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

#[inline]
pub fn quadrature_weight(p: usize) -> f64 {
    2.0 * PI / p as f64
}

/// Moves coefficients between grid sizes by zero-padding or truncation.
///
/// Modes with `|k| < min(p, q)/2` are copied. When refining, the source
/// Nyquist coefficient is split evenly between `±p/2`, so the refined field
/// interpolates the original samples exactly. When coarsening, the two
/// source modes `±q/2` fold onto the target Nyquist slot.
pub fn resample_coeffs(c: &SpectralCoeffs, q: usize) -> Result<SpectralCoeffs> {
    check_power_of_two(q)?;
    let p = c.p();
    let mut out = SpectralCoeffs::zeros(q)?;
    let lo = p.min(q) as i64 / 2;
    for k in (-lo + 1)..lo {
        out.set_mode(k, c.mode(k));
    }
    match q.cmp(&p) {
        std::cmp::Ordering::Greater => {
            let half = c.mode(-lo) * 0.5;
            out.set_mode(-lo, half);
            out.set_mode(lo, half);
        }
        std::cmp::Ordering::Less => {
            out.set_mode(-lo, c.mode(-lo) + c.mode(lo));
        }
        std::cmp::Ordering::Equal => out.set_mode(-lo, c.mode(-lo)),
    }
    Ok(out)
}

/// Spectral interpolation or restriction of a field onto a `q`-point grid.
pub fn resample(f: &GridFunction, q: usize) -> Result<GridFunction> {
    if f.p() == q {
        return Ok(f.clone());
    }
    Ok(inverse_transform(&resample_coeffs(&forward_transform(f)?, q)?))
}
