//! Closed-form evaluators for the error bounds, sample-size gates and
//! concentration tails of random feature ridge regression.

use std::f64::consts::E;

use crate::error::{Error, Result};

/// Quantities entering the β factor and the population error bound.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundInputs {
    pub lambda: f64,
    pub delta: f64,
    /// `‖G_H‖_H`, the RKHS norm of the well-specified part of the truth.
    pub rkhs_norm_g: f64,
    /// `‖η‖_ψ₁`, subexponential norm of the output noise.
    pub psi1_noise: f64,
    /// `E‖ρ(u)‖²` for the misspecification residual `ρ = G − G_H`.
    pub rho_l2_sq: f64,
    /// `‖ρ‖²_∞`.
    pub rho_inf_sq: f64,
    /// `‖G‖²_∞`.
    pub g_inf_sq: f64,
}

impl BoundInputs {
    /// Inputs with no misspecification residual.
    pub fn well_specified(lambda: f64, delta: f64, rkhs_norm_g: f64, psi1_noise: f64, g_inf_sq: f64) -> Self {
        Self {
            lambda,
            delta,
            rkhs_norm_g,
            psi1_noise,
            rho_l2_sq: 0.0,
            rho_inf_sq: 0.0,
            g_inf_sq,
        }
    }

    pub fn validate(&self) -> Result<()> {
        open_unit("lambda", self.lambda)?;
        open_unit("delta", self.delta)?;
        for (name, v) in [
            ("rkhs_norm_g", self.rkhs_norm_g),
            ("psi1_noise", self.psi1_noise),
            ("rho_l2_sq", self.rho_l2_sq),
            ("rho_inf_sq", self.rho_inf_sq),
            ("g_inf_sq", self.g_inf_sq),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidValue(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// `β = 328‖G_H‖² + 2023e³‖η‖²_ψ₁ + 8λ⁻¹E‖ρ‖² + 18λ‖ρ‖²_∞`.
///
/// The ρ terms are skipped when zero so that `λ = 0` is allowed in the
/// well-specified case.
pub fn beta_factor(b: &BoundInputs) -> f64 {
    let mut beta = well_specified_b(b.rkhs_norm_g, b.psi1_noise);
    if b.rho_l2_sq != 0.0 {
        beta += 8.0 * b.rho_l2_sq / b.lambda;
    }
    if b.rho_inf_sq != 0.0 {
        beta += 18.0 * b.lambda * b.rho_inf_sq;
    }
    beta
}

/// `B = 328‖G‖² + 2023e³‖η‖²_ψ₁`, the λ-free factor when `ρ ≡ 0`.
pub fn well_specified_b(rkhs_norm_g: f64, psi1_noise: f64) -> f64 {
    328.0 * rkhs_norm_g * rkhs_norm_g + 2023.0 * E.powi(3) * psi1_noise * psi1_noise
}

/// `79 e^{3/2} (‖G‖²_∞ + 2β) λ`.
pub fn theorem31_rhs(b: &BoundInputs) -> f64 {
    79.0 * E.powf(1.5) * (b.g_inf_sq + 2.0 * beta_factor(b)) * b.lambda
}

/// `(⌈λ⁻¹ log(32/δ)⌉, ⌈λ⁻² log(16/δ)⌉)`: sizes under which the population
/// error bound holds with probability at least `1 − δ`.
pub fn sample_gates(lambda: f64, delta: f64) -> (u64, u64) {
    gates(lambda, delta, 32.0, 16.0)
}

/// `(⌈λ⁻¹ log(16/δ)⌉, ⌈λ⁻² log(8/δ)⌉)`: sizes for the empirical risk and
/// coefficient norm bounds.
pub fn empirical_gates(lambda: f64, delta: f64) -> (u64, u64) {
    gates(lambda, delta, 16.0, 8.0)
}

/// `⌈λ⁻¹ log(4/δ)⌉`: feature count for the truncated approximator bound.
pub fn approximator_gate(lambda: f64, delta: f64) -> u64 {
    (ln_ratio(4.0, delta) / lambda).ceil() as u64
}

fn gates(lambda: f64, delta: f64, cm: f64, cn: f64) -> (u64, u64) {
    let m = (ln_ratio(cm, delta) / lambda).ceil();
    let n = (ln_ratio(cn, delta) / (lambda * lambda)).ceil();
    (m as u64, n as u64)
}

fn ln_ratio(c: f64, delta: f64) -> f64 {
    (c / delta).ln()
}

/// `λβ`, the bound on the regularized empirical risk of the trained model.
pub fn empirical_risk_rhs(b: &BoundInputs) -> f64 {
    b.lambda * beta_factor(b)
}

/// `81λ‖G_H‖²`, the bound on the regularized empirical risk of the truncated
/// approximator.
pub fn approximator_rhs(lambda: f64, rkhs_norm_g: f64) -> f64 {
    81.0 * lambda * rkhs_norm_g * rkhs_norm_g
}

/// `32e^{3/2}(‖G‖²_∞ + β) sqrt(6 log(2/δ)/N)`, the uniform generalization gap
/// over coefficient balls of squared radius `β`. Requires `N ≥ log(1/δ)`.
pub fn generalization_gap_rhs(g_inf_sq: f64, beta: f64, n: u64, delta: f64) -> Result<f64> {
    let n = n as f64;
    if n < (1.0 / delta).ln() {
        return Err(Error::InvalidValue(format!(
            "generalization gap bound needs N >= log(1/δ), got N = {n}"
        )));
    }
    Ok(32.0 * E.powf(1.5) * (g_inf_sq + beta) * (6.0 * ln_ratio(2.0, delta) / n).sqrt())
}

/// `2b log(2/δ)/N + sqrt(2σ² log(2/δ)/N)`.
pub fn bernstein_tail(b: f64, sigma_sq: f64, n: u64, delta: f64) -> f64 {
    let l = ln_ratio(2.0, delta);
    let n = n as f64;
    2.0 * b * l / n + (2.0 * sigma_sq * l / n).sqrt()
}

/// Bernstein moment constants from a subexponential norm:
/// `σ² = 4e sqrt(variance) ψ₁`, `b = 4e ψ₁`. Returns `(σ², b)`.
pub fn bernstein_from_subexp(psi1: f64, variance: f64) -> (f64, f64) {
    (4.0 * E * variance.sqrt() * psi1, 4.0 * E * psi1)
}

/// Bernstein moment constants for `‖Z‖ ≤ c` and `E‖Z − EZ‖² ≤ v²`:
/// `b = 2c` (or `c` when `Z` is centered) and `σ = v`. Returns `(σ², b)`.
pub fn bernstein_from_bounded(c: f64, v: f64, centered: bool) -> (f64, f64) {
    (v * v, if centered { c } else { 2.0 * c })
}

/// `max_{q ∈ grid} (mean |Z|^q)^{1/q} / q`, an empirical subexponential norm.
pub fn subexp_norm_estimate(samples: &[f64], p_grid: &[u32]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyData);
    }
    if p_grid.contains(&0) {
        return Err(Error::InvalidValue("moment orders must be >= 1".into()));
    }
    // factor out the largest magnitude so high moments do not overflow
    let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let n = samples.len() as f64;
    Ok(p_grid
        .iter()
        .map(|&q| {
            let moment = samples.iter().map(|v| (v.abs() / scale).powi(q as i32)).sum::<f64>() / n;
            scale * moment.powf(1.0 / q as f64) / q as f64
        })
        .fold(0.0, f64::max))
}

/// Default moment grid `1..=12` for [`subexp_norm_estimate`].
pub fn default_moment_grid() -> Vec<u32> {
    (1..=12).collect()
}

/// Zeroes coefficients with `|α| > T`, `T = sqrt(E|α|²/λ)`.
pub fn truncate_coefficients(alpha: &[f64], second_moment: f64, lambda: f64) -> Result<Vec<f64>> {
    if !(second_moment >= 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidValue(
            "truncation needs second_moment >= 0 and lambda > 0".into(),
        ));
    }
    let t = truncation_level(second_moment, lambda);
    Ok(alpha.iter().map(|&a| if a.abs() <= t { a } else { 0.0 }).collect())
}

pub fn truncation_level(second_moment: f64, lambda: f64) -> f64 {
    (second_moment / lambda).sqrt()
}
