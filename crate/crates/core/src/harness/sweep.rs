//! Sweeps over the number of features, the number of samples, or the grid.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::burgers::generate_dataset;
use crate::dataset::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::features::RfModel;
use crate::grf::sample_grf;
use crate::grid::{resample, GridFunction};
use crate::noise::{corrupt, NoiseModel};
use crate::rfrr::{relative_test_error, train_with, TrainOptions};
use crate::seed;

use super::config::{DataSource, SweepAxis, SweepConfig};

/// One trained and evaluated model.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_axis: SweepAxis,
    pub axis_value: usize,
    pub p: usize,
    pub replicate: usize,
    pub m: usize,
    pub n: usize,
    pub lambda: f64,
    /// NaN when the cell failed.
    pub rel_sq_error: f64,
    pub train_residual: f64,
    pub wall_ms: f64,
    /// Master seed of the replicate's generator streams.
    pub seed: u64,
    /// Empty on success.
    pub error_msg: String,
}

impl SweepRow {
    pub fn succeeded(&self) -> bool {
        self.error_msg.is_empty()
    }
}

/// Rows sorted by `(axis value, p, replicate)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Replicate statistics of one `(axis value, p)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub axis_value: usize,
    pub p: usize,
    pub median: f64,
    pub mean: f64,
    /// Sample standard deviation; zero for a single replicate.
    pub std: f64,
    pub succeeded: usize,
    pub failed: usize,
}

impl SweepResult {
    /// Per-cell statistics over the successful replicates, sorted by
    /// `(p, axis value)`. Cells with no successful replicate are skipped.
    pub fn curve(&self) -> Vec<CurvePoint> {
        let mut groups: BTreeMap<(usize, usize), (Vec<f64>, usize)> = BTreeMap::new();
        for row in &self.rows {
            let entry = groups.entry((row.p, row.axis_value)).or_default();
            if row.succeeded() {
                entry.0.push(row.rel_sq_error);
            } else {
                entry.1 += 1;
            }
        }
        groups
            .into_iter()
            .filter(|(_, (ok, _))| !ok.is_empty())
            .map(|((p, axis_value), (mut ok, failed))| {
                ok.sort_by(f64::total_cmp);
                let k = ok.len();
                let mean = ok.iter().sum::<f64>() / k as f64;
                let std = if k > 1 {
                    (ok.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
                } else {
                    0.0
                };
                CurvePoint {
                    axis_value,
                    p,
                    median: median_sorted(&ok),
                    mean,
                    std,
                    succeeded: k,
                    failed,
                }
            })
            .collect()
    }

    /// `(axis value, median error)` pairs on grid `p`.
    pub fn medians(&self, p: usize) -> Vec<(f64, f64)> {
        self.curve()
            .into_iter()
            .filter(|c| c.p == p)
            .map(|c| (c.axis_value as f64, c.median))
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| !r.succeeded())
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Training candidates, test pairs and (for synthetic truths) the discrete
/// feature atoms, all on the data grid.
#[derive(Debug, Clone)]
pub struct Pool {
    pub train: Dataset,
    pub test: Dataset,
    pub atoms: Option<Vec<GridFunction>>,
}

impl Pool {
    pub fn p(&self) -> usize {
        self.train.p()
    }

    fn restrict(&self, p: usize) -> Result<Pool> {
        Ok(Pool {
            train: self.train.resample(p)?,
            test: self.test.resample(p)?,
            atoms: self
                .atoms
                .as_ref()
                .map(|a| a.iter().map(|t| resample(t, p)).collect::<Result<_>>())
                .transpose()?,
        })
    }
}

/// Generates or loads the data a sweep draws from.
pub fn prepare_pool(cfg: &SweepConfig) -> Result<Pool> {
    cfg.validate()?;
    let total = cfg.pool_size + cfg.test_size;
    let p_data = cfg.data_grid();
    let data_seed = seed::domain(cfg.seed, "data");
    let (data, atoms) = match &cfg.data {
        DataSource::Burgers {
            input,
            viscosity,
            t_final,
        } => {
            let burgers = cfg.burgers(*viscosity, *t_final)?;
            (generate_dataset(total, input, &burgers, p_data, data_seed)?, None)
        }
        DataSource::File { path } => {
            let data = Dataset::load(path)?;
            if data.len() < total {
                return Err(Error::Config(format!(
                    "{} holds {} pairs, the sweep needs {total}",
                    path.display(),
                    data.len()
                )));
            }
            if data.p() != p_data {
                return Err(Error::Config(format!(
                    "{} is on a {}-point grid, the sweep expects {p_data}",
                    path.display(),
                    data.p()
                )));
            }
            (data, None)
        }
        DataSource::Synthetic { input, atoms } => {
            let truth = synthetic_truth(cfg, *atoms, p_data, data_seed)?;
            let family = seed::domain(data_seed, "inputs");
            let inputs: Vec<GridFunction> = (0..total)
                .map(|i| sample_grf(input, p_data, &mut seed::stream(family, i as u64)))
                .collect::<Result<_>>()?;
            let outputs = truth.predict_many(&inputs)?;
            let provenance = Provenance {
                seed: data_seed,
                generator: "synthetic".into(),
                input_measure: Some(*input),
                notes: format!("random feature truth with {atoms} atoms"),
                ..Default::default()
            };
            let atoms = truth.thetas().to_vec();
            (Dataset::new(p_data, inputs, outputs, provenance)?, Some(atoms))
        }
    };
    Ok(Pool {
        train: data.slice(0..cfg.pool_size)?,
        test: data.slice(cfg.pool_size..total)?,
        atoms,
    })
}

/// A random feature model over `atoms` parameter fields from the feature
/// measure with standard normal coefficients.
pub fn synthetic_truth(cfg: &SweepConfig, atoms: usize, p: usize, data_seed: u64) -> Result<RfModel> {
    let theta_family = seed::domain(data_seed, "atoms");
    let thetas: Vec<GridFunction> = (0..atoms)
        .map(|j| sample_grf(&cfg.feature_measure, p, &mut seed::stream(theta_family, j as u64)))
        .collect::<Result<_>>()?;
    let mut rng = seed::stream(seed::domain(data_seed, "coefficients"), 0);
    let alpha: Vec<f64> = (0..atoms).map(|_| rng.sample(StandardNormal)).collect();
    RfModel::new(cfg.features, thetas, alpha, 0.0)
}

/// Master seed of replicate `r`; fixed across axis values and grids so that
/// the features and subsamples of a replicate are nested along the sweep.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    seed::stream_seed(seed::domain(master, "replicates"), r as u64)
}

/// Trains and evaluates every `(axis value, p, replicate)` cell.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    let pool = prepare_pool(cfg)?;
    run_sweep_on(cfg, &pool)
}

/// [`run_sweep`] on prepared data. Cell failures are recorded in the rows.
pub fn run_sweep_on(cfg: &SweepConfig, pool: &Pool) -> Result<SweepResult> {
    cfg.validate()?;
    if pool.train.len() < cfg.pool_size || pool.test.len() < cfg.test_size {
        return Err(Error::Config("pool is smaller than the configured sizes".into()));
    }
    let grids = cfg.grids().to_vec();
    if let Some(&p) = grids.iter().find(|&&p| p > pool.p()) {
        return Err(Error::Config(format!("grid {p} exceeds the data grid {}", pool.p())));
    }
    let restricted: BTreeMap<usize, Pool> = grids
        .iter()
        .map(|&p| Ok((p, pool.restrict(p)?)))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize, usize)> = match cfg.sweep_axis {
        SweepAxis::Resolution => cfg
            .axis_values
            .iter()
            .flat_map(|&v| (0..cfg.replicates).map(move |r| (v, v, r)))
            .collect(),
        _ => cfg
            .axis_values
            .iter()
            .flat_map(|&v| grids.iter().flat_map(move |&p| (0..cfg.replicates).map(move |r| (v, p, r))))
            .collect(),
    };
    let mut rows: Vec<SweepRow> = cells
        .into_par_iter()
        .map(|(v, p, r)| run_cell(cfg, &restricted[&p], v, p, r))
        .collect();
    rows.sort_by_key(|row| (row.axis_value, row.p, row.replicate));
    Ok(SweepResult { rows })
}

fn run_cell(cfg: &SweepConfig, pool: &Pool, axis_value: usize, p: usize, replicate: usize) -> SweepRow {
    let (m, n, _) = cfg.cell_sizes(axis_value, p);
    let rep_seed = replicate_seed(cfg.seed, replicate);
    let lambda = cfg.lambda_rule.lambda(m, n);
    let mut row = SweepRow {
        sweep_axis: cfg.sweep_axis,
        axis_value,
        p,
        replicate,
        m,
        n,
        lambda,
        rel_sq_error: f64::NAN,
        train_residual: f64::NAN,
        wall_ms: 0.0,
        seed: rep_seed,
        error_msg: String::new(),
    };
    match fit_cell(cfg, pool, m, n, lambda, rep_seed) {
        Ok((err, residual, wall_ms)) => {
            row.rel_sq_error = err;
            row.train_residual = residual;
            if cfg.timing {
                row.wall_ms = wall_ms;
            }
        }
        Err(e) => row.error_msg = e.to_string(),
    }
    row
}

fn fit_cell(cfg: &SweepConfig, pool: &Pool, m: usize, n: usize, lambda: f64, rep_seed: u64) -> Result<(f64, f64, f64)> {
    let mut order: Vec<usize> = (0..pool.train.len()).collect();
    order.shuffle(&mut seed::stream(seed::domain(rep_seed, "subsample"), 0));
    order.truncate(n);
    let mut train = pool.train.select(&order)?;
    if cfg.noise != NoiseModel::None {
        let family = seed::domain(rep_seed, "noise");
        let noisy = order
            .iter()
            .zip(train.pairs())
            .map(|(&i, (u, y))| corrupt(y, u, &cfg.noise, &mut seed::stream(family, i as u64)))
            .collect::<Result<_>>()?;
        train = train.with_outputs(noisy)?;
    }
    let thetas = draw_features(cfg, pool, m, rep_seed)?;
    let (model, report) = train_with(&train, &thetas, &cfg.features, lambda, TrainOptions::default())?;
    let err = relative_test_error(&model, &pool.test.slice(0..cfg.test_size)?)?;
    Ok((err, report.relative_residual, report.wall_ms))
}

/// Feature `j` of a replicate comes from stream `j`, so a sweep over `M`
/// adds features to a fixed sequence.
fn draw_features(cfg: &SweepConfig, pool: &Pool, m: usize, rep_seed: u64) -> Result<Vec<GridFunction>> {
    let family = seed::domain(rep_seed, "features");
    (0..m)
        .map(|j| {
            let mut rng = seed::stream(family, j as u64);
            match &pool.atoms {
                Some(atoms) => Ok(atoms[rng.random_range(0..atoms.len())].clone()),
                None => sample_grf(&cfg.feature_measure, pool.p(), &mut rng),
            }
        })
        .collect()
}
