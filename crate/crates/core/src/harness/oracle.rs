//! Deterministic RKHS approximation sweeps in a discrete setting.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::grf::{sample_grf, MaternSpec};
use crate::grid::GridFunction;
use crate::rkhs::{project_active, rate_sweep, DiscreteSetting, KernelSpectrum, RatePoint};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Parameter fields in the discrete feature measure.
    pub atoms: usize,
    /// Inputs in the discrete input measure.
    pub inputs: usize,
    pub p: usize,
    pub seed: u64,
    pub rs: Vec<f64>,
    pub varthetas: Vec<f64>,
    #[serde(default)]
    pub features: FeatureConfig,
}

impl Default for OracleConfig {
    /// `r ∈ {0.25, 0.5, 1, 2}` against `ϑ ∈ {10⁻¹, ..., 10⁻⁶}`.
    fn default() -> Self {
        Self {
            atoms: 24,
            inputs: 6,
            p: 16,
            seed: 0,
            rs: vec![0.25, 0.5, 1.0, 2.0],
            varthetas: (1..=6).map(|e| 10f64.powi(-e)).collect(),
            features: FeatureConfig::default(),
        }
    }
}

impl OracleConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.atoms == 0 || cfg.inputs == 0 || cfg.rs.is_empty() || cfg.varthetas.is_empty() {
            return Err(Error::Config("oracle needs atoms, inputs, rs and varthetas".into()));
        }
        Ok(cfg)
    }
}

/// The setting: uniform weights over atoms from the default feature measure
/// and inputs from the unit-variance input measure.
pub fn oracle_setting(cfg: &OracleConfig) -> Result<DiscreteSetting> {
    let atoms: Vec<GridFunction> = (0..cfg.atoms)
        .map(|j| {
            sample_grf(
                &MaternSpec::feature_default(),
                cfg.p,
                &mut seed::stream(seed::domain(cfg.seed, "atoms"), j as u64),
            )
        })
        .collect::<Result<_>>()?;
    let inputs: Vec<GridFunction> = (0..cfg.inputs)
        .map(|a| {
            sample_grf(
                &MaternSpec::input_default(),
                cfg.p,
                &mut seed::stream(seed::domain(cfg.seed, "inputs"), a as u64),
            )
        })
        .collect::<Result<_>>()?;
    let weights = vec![1.0 / cfg.atoms as f64; cfg.atoms];
    DiscreteSetting::new(&atoms, &weights, &inputs, &cfg.features)
}

/// A Gaussian vector projected onto the range of the kernel operator.
pub fn oracle_source(cfg: &OracleConfig, spec: &KernelSpectrum) -> Result<Vec<f64>> {
    let mut rng = seed::stream(seed::domain(cfg.seed, "source"), 0);
    let raw: Vec<f64> = (0..spec.dim()).map(|_| rng.sample(StandardNormal)).collect();
    project_active(spec, &raw)
}

/// `(ϑ, r, 𝒜_G(ϑ), bound)` for every pair of the configured grids.
pub fn run_oracle(cfg: &OracleConfig) -> Result<Vec<RatePoint>> {
    let setting = oracle_setting(cfg)?;
    let spec = KernelSpectrum::new(&setting)?;
    let f = oracle_source(cfg, &spec)?;
    rate_sweep(&spec, &f, &cfg.rs, &cfg.varthetas)
}

pub fn write_oracle_csv<W: std::io::Write>(points: &[RatePoint], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["vartheta", "r", "error", "bound", "ratio"])?;
    for pt in points {
        w.write_record([
            pt.vartheta.to_string(),
            pt.r.to_string(),
            pt.error.to_string(),
            pt.bound.to_string(),
            pt.ratio().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_oracle_csv(points: &[RatePoint], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_oracle_csv(points, std::io::BufWriter::new(file)).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sweep_respects_the_bound() {
        let pts = run_oracle(&OracleConfig::default()).unwrap();
        assert_eq!(pts.len(), 24);
        for pt in &pts {
            assert!(pt.error <= pt.bound + 1e-10, "{pt:?}");
        }
        let mut buf = Vec::new();
        write_oracle_csv(&pts, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 25);
    }
}
