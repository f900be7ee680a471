//! Sweep configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::burgers::BurgersConfig;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::grf::MaternSpec;
use crate::grid::check_power_of_two;
use crate::noise::NoiseModel;

/// The size varied across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Number of random features.
    M,
    /// Number of training pairs.
    N,
    /// Grid size `p`.
    #[serde(rename = "resolution")]
    Resolution,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::M => "M",
            SweepAxis::N => "N",
            SweepAxis::Resolution => "resolution",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "M" => Ok(SweepAxis::M),
            "N" => Ok(SweepAxis::N),
            "resolution" => Ok(SweepAxis::Resolution),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?}"))),
        }
    }
}

/// How the ridge parameter follows the sizes of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LambdaRule {
    /// `λ = c/M`.
    COverM { c: f64 },
    /// `λ = c/√N`.
    COverSqrtN { c: f64 },
    Fixed { lambda: f64 },
}

impl LambdaRule {
    pub fn lambda(&self, m: usize, n: usize) -> f64 {
        match *self {
            LambdaRule::COverM { c } => c / m as f64,
            LambdaRule::COverSqrtN { c } => c / (n as f64).sqrt(),
            LambdaRule::Fixed { lambda } => lambda,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            LambdaRule::COverM { c } | LambdaRule::COverSqrtN { c } => c,
            LambdaRule::Fixed { lambda } => lambda,
        };
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("lambda rule constant must be >= 0, got {v}")))
        }
    }
}

/// Sizes held fixed while the other axis is swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedSizes {
    pub m: usize,
    pub n: usize,
}

/// Where training and test pairs come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Time-one Burgers flow map of inputs drawn from `input`.
    Burgers {
        input: MaternSpec,
        #[serde(default = "default_viscosity")]
        viscosity: f64,
        #[serde(default = "default_t_final")]
        t_final: f64,
    },
    /// A data set file; it must hold at least `pool_size + test_size` pairs.
    File { path: PathBuf },
    /// A known random feature model over `atoms` fixed parameter fields,
    /// with features drawn uniformly from those atoms.
    Synthetic { input: MaternSpec, atoms: usize },
}

fn default_viscosity() -> f64 {
    0.1
}

fn default_t_final() -> f64 {
    1.0
}

/// Slope window selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WindowRule {
    /// Longest prefix whose second differences of log error stay below
    /// `threshold`.
    Auto { threshold: f64 },
    /// Points `start..end` of the sweep.
    Manual { start: usize, end: usize },
}

impl Default for WindowRule {
    fn default() -> Self {
        WindowRule::Auto { threshold: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub sweep_axis: SweepAxis,
    pub axis_values: Vec<usize>,
    pub fixed: FixedSizes,
    pub lambda_rule: LambdaRule,
    pub replicates: usize,
    pub test_size: usize,
    /// Grid sizes for M and N sweeps; ignored by resolution sweeps, whose
    /// axis values are the grid sizes.
    #[serde(default = "default_p_values")]
    pub p_values: Vec<usize>,
    pub seed: u64,
    /// Training candidates each replicate subsamples from.
    pub pool_size: usize,
    /// Grid the data is generated on; defaults to the largest grid swept.
    #[serde(default)]
    pub p_data: Option<usize>,
    pub data: DataSource,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default = "MaternSpec::feature_default")]
    pub feature_measure: MaternSpec,
    /// Added to training outputs only; test outputs stay clean.
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub window: WindowRule,
    /// Record wall times; off makes results byte-reproducible.
    #[serde(default = "default_true")]
    pub timing: bool,
}

fn default_p_values() -> Vec<usize> {
    vec![128]
}

fn default_true() -> bool {
    true
}

impl SweepConfig {
    /// M-sweep {16, ..., 512} at N = 256, p = 128, λ = 7e−4/M, 5 replicates,
    /// on Burgers data from [`MaternSpec::benchmark_input`].
    pub fn m_sweep_default() -> Self {
        Self {
            sweep_axis: SweepAxis::M,
            axis_values: vec![16, 32, 64, 128, 256, 512],
            fixed: FixedSizes { m: 512, n: 256 },
            lambda_rule: LambdaRule::COverM { c: 7e-4 },
            replicates: 5,
            test_size: 500,
            p_values: vec![128],
            seed: 7,
            pool_size: 1024,
            p_data: Some(256),
            data: DataSource::Burgers {
                input: MaternSpec::benchmark_input(),
                viscosity: default_viscosity(),
                t_final: default_t_final(),
            },
            features: FeatureConfig::default(),
            feature_measure: MaternSpec::feature_default(),
            noise: NoiseModel::None,
            window: WindowRule::default(),
            timing: true,
        }
    }

    /// N-sweep {32, ..., 512} at M = 512, λ = 3e−6/√N.
    pub fn n_sweep_default() -> Self {
        Self {
            sweep_axis: SweepAxis::N,
            axis_values: vec![32, 64, 128, 256, 512],
            lambda_rule: LambdaRule::COverSqrtN { c: 3e-6 },
            ..Self::m_sweep_default()
        }
    }

    /// Resolution sweep p ∈ {64, 128, 256} at M = N = 256.
    pub fn resolution_sweep_default() -> Self {
        Self {
            sweep_axis: SweepAxis::Resolution,
            axis_values: vec![64, 128, 256],
            fixed: FixedSizes { m: 256, n: 256 },
            lambda_rule: LambdaRule::COverM { c: 7e-4 },
            ..Self::m_sweep_default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Grid sizes visited by the sweep.
    pub fn grids(&self) -> &[usize] {
        match self.sweep_axis {
            SweepAxis::Resolution => &self.axis_values,
            _ => &self.p_values,
        }
    }

    pub fn data_grid(&self) -> usize {
        self.p_data
            .unwrap_or_else(|| self.grids().iter().copied().max().unwrap_or(0))
    }

    /// `(M, N, p)` of the cell at `axis_value` on grid `p`.
    pub fn cell_sizes(&self, axis_value: usize, p: usize) -> (usize, usize, usize) {
        match self.sweep_axis {
            SweepAxis::M => (axis_value, self.fixed.n, p),
            SweepAxis::N => (self.fixed.m, axis_value, p),
            SweepAxis::Resolution => (self.fixed.m, self.fixed.n, axis_value),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |msg: String| Err(Error::Config(msg));
        if self.axis_values.is_empty() {
            return cfg_err("axis_values is empty".into());
        }
        if self.axis_values.windows(2).any(|w| w[0] >= w[1]) {
            return cfg_err("axis_values must be strictly increasing".into());
        }
        if self.axis_values[0] == 0 {
            return cfg_err("axis_values must be positive".into());
        }
        if self.replicates < 1 {
            return cfg_err("replicates must be >= 1".into());
        }
        if self.test_size < 1 {
            return cfg_err("test_size must be >= 1".into());
        }
        if self.grids().is_empty() {
            return cfg_err("p_values is empty".into());
        }
        let p_data = self.data_grid();
        for &p in self.grids().iter().chain(std::iter::once(&p_data)) {
            check_power_of_two(p).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(&p) = self.grids().iter().find(|&&p| p > p_data) {
            return cfg_err(format!("grid {p} exceeds the data grid {p_data}"));
        }
        let max_n = (0..self.axis_values.len())
            .map(|i| self.cell_sizes(self.axis_values[i], p_data).1)
            .max()
            .unwrap_or(0);
        if max_n > self.pool_size {
            return cfg_err(format!(
                "N = {max_n} exceeds the training pool of {}",
                self.pool_size
            ));
        }
        if self.fixed.m == 0 || self.fixed.n == 0 {
            return cfg_err("fixed sizes must be positive".into());
        }
        self.lambda_rule.validate()?;
        self.features.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.feature_measure.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.noise.validate().map_err(|e| Error::Config(e.to_string()))?;
        match &self.data {
            DataSource::Burgers {
                input,
                viscosity,
                t_final,
            } => {
                input.validate().map_err(|e| Error::Config(e.to_string()))?;
                self.burgers(*viscosity, *t_final)?;
            }
            DataSource::Synthetic { input, atoms } => {
                input.validate().map_err(|e| Error::Config(e.to_string()))?;
                if *atoms == 0 {
                    return cfg_err("synthetic truth needs at least one atom".into());
                }
            }
            DataSource::File { .. } => {}
        }
        match self.window {
            WindowRule::Auto { threshold } if !threshold.is_finite() => {
                return cfg_err("window threshold must be finite".into())
            }
            WindowRule::Manual { start, end } if end > self.axis_values.len() || end < start + 3 => {
                return cfg_err(format!("manual window {start}..{end} needs 3 points inside the sweep"))
            }
            _ => {}
        }
        Ok(())
    }

    pub(crate) fn burgers(&self, viscosity: f64, t_final: f64) -> Result<BurgersConfig> {
        let base = BurgersConfig::for_data_grid(self.data_grid())?;
        BurgersConfig::new(viscosity, t_final, base.p_solve, base.dt, base.dealias)
            .map_err(|e| Error::Config(e.to_string()))
    }
}
