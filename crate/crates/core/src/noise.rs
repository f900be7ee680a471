//! Conditionally centered, subexponential output noise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grf::{sample_grf, MaternSpec};
use crate::grid::GridFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    None,
    /// `y + amplitude·ξ` with `ξ` a fresh Gaussian random field.
    AdditiveGrf { spec: MaternSpec, amplitude: f64 },
    /// `y·(1 + ζ)` with `ζ` a centered Laplace scalar of the given scale.
    MultiplicativeLaplace { scale: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::None => Ok(()),
            NoiseModel::AdditiveGrf { spec, amplitude } => {
                spec.validate()?;
                non_negative("amplitude", *amplitude)
            }
            NoiseModel::MultiplicativeLaplace { scale } => non_negative("scale", *scale),
        }
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!("{name} must be >= 0, got {v}")))
    }
}

/// Centered Laplace draw with density `e^{−|x|/s} / 2s`.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    // inverse CDF on the open interval (−1/2, 1/2)
    let v: f64 = rng.sample::<f64, _>(rand::distr::Open01) - 0.5;
    -scale * v.signum() * (1.0 - 2.0 * v.abs()).ln()
}

/// Returns `y + η` with `η` drawn according to `model`.
pub fn corrupt<R: Rng + ?Sized>(
    y: &GridFunction,
    u: &GridFunction,
    model: &NoiseModel,
    rng: &mut R,
) -> Result<GridFunction> {
    if u.p() != y.p() {
        return Err(Error::Dimension {
            expected: y.p(),
            got: u.p(),
        });
    }
    match *model {
        NoiseModel::None => Ok(y.clone()),
        NoiseModel::AdditiveGrf { spec, amplitude } => {
            let xi = sample_grf(&spec, y.p(), rng)?;
            y.linear_combination(1.0, &xi, amplitude)
        }
        NoiseModel::MultiplicativeLaplace { scale } => {
            let zeta = sample_laplace(scale, rng);
            Ok(y.scale(1.0 + zeta))
        }
    }
}
