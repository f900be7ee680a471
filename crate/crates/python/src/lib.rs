//! Python bindings. Grid functions cross the boundary as lists of floats.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vvrf::burgers::{self, BurgersConfig};
use vvrf::dataset;
use vvrf::features::{self, FeatureConfig};
use vvrf::grf::{self, MaternSpec};
use vvrf::grid::GridFunction;
use vvrf::harness::{self, SweepConfig, VerifyConfig, VerifyScope, WindowRule};
use vvrf::{bounds, rfrr, seed};

create_exception!(vvrf, VvrfError, PyException);

fn py_err(e: vvrf::Error) -> PyErr {
    VvrfError::new_err(e.to_string())
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for vvrf::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn grid(values: Vec<f64>) -> PyResult<GridFunction> {
    GridFunction::new(values).or_py()
}

fn grids(rows: Vec<Vec<f64>>) -> PyResult<Vec<GridFunction>> {
    rows.into_iter().map(grid).collect()
}

fn lists(fs: &[GridFunction]) -> Vec<Vec<f64>> {
    fs.iter().map(|f| f.values().to_vec()).collect()
}

/// Matérn-type Gaussian random field on a `p`-point grid.
#[pyfunction]
#[pyo3(signature = (p, seed, sigma = None, tau = 3.0, gamma = 2.0))]
fn sample_grf(p: usize, seed: u64, sigma: Option<f64>, tau: f64, gamma: f64) -> PyResult<Vec<f64>> {
    let spec = match sigma {
        Some(s) => MaternSpec::new(s, tau, gamma).or_py()?,
        None => MaternSpec::unit_variance(tau, gamma, false),
    };
    let f = grf::sample_grf(&spec, p, &mut seed::stream(seed, 0)).or_py()?;
    Ok(f.into_values())
}

/// Viscous Burgers solution at `t_final` from the initial condition `u0`.
#[pyfunction]
#[pyo3(signature = (u0, viscosity = 0.1, t_final = 1.0))]
fn solve_burgers(u0: Vec<f64>, viscosity: f64, t_final: f64) -> PyResult<Vec<f64>> {
    let u0 = grid(u0)?;
    let cfg = burgers_config(u0.p(), viscosity, t_final)?;
    Ok(burgers::solve_burgers(&u0, &cfg).or_py()?.into_values())
}

fn burgers_config(p: usize, viscosity: f64, t_final: f64) -> PyResult<BurgersConfig> {
    let base = BurgersConfig::for_data_grid(p).or_py()?;
    let cfg = BurgersConfig {
        viscosity,
        t_final,
        ..base
    };
    cfg.validate().or_py()?;
    Ok(cfg)
}

#[pyclass(module = "vvrf")]
struct Dataset {
    inner: dataset::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    fn new(inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> PyResult<Self> {
        let inputs = grids(inputs)?;
        let p = inputs.first().map_or(0, GridFunction::p);
        let inner = dataset::Dataset::new(p, inputs, grids(outputs)?, Default::default()).or_py()?;
        Ok(Self { inner })
    }

    /// `n` Burgers pairs with inputs from the benchmark input measure.
    #[staticmethod]
    #[pyo3(signature = (n, p, seed, viscosity = 0.1, t_final = 1.0))]
    fn burgers(n: usize, p: usize, seed: u64, viscosity: f64, t_final: f64) -> PyResult<Self> {
        let cfg = burgers_config(p, viscosity, t_final)?;
        let inner = burgers::generate_dataset(n, &MaternSpec::benchmark_input(), &cfg, p, seed).or_py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: dataset::Dataset::load(&path).or_py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).or_py()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn inputs(&self) -> Vec<Vec<f64>> {
        lists(self.inner.inputs())
    }

    #[getter]
    fn outputs(&self) -> Vec<Vec<f64>> {
        lists(self.inner.outputs())
    }

    fn slice(&self, start: usize, end: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.slice(start..end).or_py()?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Dataset(len={}, p={})", self.inner.len(), self.inner.p())
    }
}

#[pyclass(module = "vvrf")]
struct RfModel {
    inner: features::RfModel,
}

#[pymethods]
impl RfModel {
    /// Fit `m` random features drawn from the default feature measure.
    #[staticmethod]
    #[pyo3(signature = (data, m, lam, seed = 0))]
    fn train(data: &Dataset, m: usize, lam: f64, seed: u64) -> PyResult<Self> {
        let master = seed::domain(seed, "features");
        let thetas = (0..m)
            .map(|j| grf::sample_grf(&MaternSpec::feature_default(), data.inner.p(), &mut seed::stream(master, j as u64)))
            .collect::<vvrf::Result<Vec<_>>>()
            .or_py()?;
        let inner = rfrr::train(&data.inner, &thetas, &FeatureConfig::default(), lam).or_py()?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: features::RfModel::load(&path).or_py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).or_py()
    }

    fn predict(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.predict(&grid(u)?).or_py()?.into_values())
    }

    /// Mean relative squared test error.
    fn relative_error(&self, data: &Dataset) -> PyResult<f64> {
        rfrr::relative_test_error(&self.inner, &data.inner).or_py()
    }

    fn empirical_risk(&self, data: &Dataset, lam: f64) -> PyResult<f64> {
        rfrr::empirical_risk(&self.inner, &data.inner, lam).or_py()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("RfModel(m={}, p={})", self.inner.m(), self.inner.p())
    }
}

/// `(N, M)` sample sizes above which the population bound applies.
#[pyfunction]
fn sample_gates(lam: f64, delta: f64) -> (u64, u64) {
    bounds::sample_gates(lam, delta)
}

#[pyfunction]
fn approximator_gate(lam: f64, delta: f64) -> u64 {
    bounds::approximator_gate(lam, delta)
}

/// β factor and population bound for a well-specified problem.
#[pyfunction]
fn population_bound(lam: f64, delta: f64, rkhs_norm: f64, psi1_noise: f64, g_inf_sq: f64) -> PyResult<(f64, f64)> {
    let b = bounds::BoundInputs::well_specified(lam, delta, rkhs_norm, psi1_noise, g_inf_sq);
    b.validate().or_py()?;
    Ok((bounds::beta_factor(&b), bounds::theorem31_rhs(&b)))
}

/// `(slope, intercept, r_squared)` of log error against log x; the window
/// is picked automatically when `start`/`end` are omitted.
#[pyfunction]
#[pyo3(signature = (xs, errors, start = None, end = None))]
fn fit_loglog_slope(xs: Vec<f64>, errors: Vec<f64>, start: Option<usize>, end: Option<usize>) -> PyResult<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = xs.into_iter().zip(errors).collect();
    let rule = match (start, end) {
        (None, None) => WindowRule::default(),
        (s, e) => WindowRule::Manual {
            start: s.unwrap_or(0),
            end: e.unwrap_or(pts.len()),
        },
    };
    let fit = harness::fit_with_rule(&pts, rule).or_py()?;
    Ok((fit.slope, fit.intercept, fit.r_squared))
}

/// Run a sweep from TOML text (or a preset name: "m", "n", "resolution")
/// and return one dict per cell.
#[pyfunction]
fn run_sweep<'py>(py: Python<'py>, config: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = match config {
        "m" => SweepConfig::m_sweep_default(),
        "n" => SweepConfig::n_sweep_default(),
        "resolution" => SweepConfig::resolution_sweep_default(),
        text => SweepConfig::from_toml(text).or_py()?,
    };
    let result = harness::run_sweep(&cfg).or_py()?;
    result
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("sweep_axis", r.sweep_axis.as_str())?;
            d.set_item("axis_value", r.axis_value)?;
            d.set_item("p", r.p)?;
            d.set_item("replicate", r.replicate)?;
            d.set_item("m", r.m)?;
            d.set_item("n", r.n)?;
            d.set_item("lambda", r.lambda)?;
            d.set_item("rel_sq_error", r.rel_sq_error)?;
            d.set_item("train_residual", r.train_residual)?;
            d.set_item("seed", r.seed)?;
            d.set_item("error_msg", &r.error_msg)?;
            Ok(d)
        })
        .collect()
}

/// Monte Carlo check of the error bounds at the sample-size gates. Returns
/// `{check: (coverage, max_lhs, rhs)}` and the printable report.
#[pyfunction]
#[pyo3(signature = (lam = 0.05, delta = 0.1, trials = 100, full = true))]
fn verify_theory<'py>(py: Python<'py>, lam: f64, delta: f64, trials: usize, full: bool) -> PyResult<(Bound<'py, PyDict>, String)> {
    let scope = if full { VerifyScope::Full } else { VerifyScope::Approximator };
    let cfg = VerifyConfig::at_gates(lam, delta, trials, scope);
    let report = py.detach(|| harness::verify_theory(&cfg)).or_py()?;
    let d = PyDict::new(py);
    for c in &report.checks {
        d.set_item(c.name, (c.coverage(), c.max_lhs(), c.rhs))?;
    }
    Ok((d, report.to_string()))
}

#[pymodule]
#[pyo3(name = "vvrf")]
fn vvrf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VvrfError", m.py().get_type::<VvrfError>())?;
    m.add_class::<Dataset>()?;
    m.add_class::<RfModel>()?;
    m.add_function(wrap_pyfunction!(sample_grf, m)?)?;
    m.add_function(wrap_pyfunction!(solve_burgers, m)?)?;
    m.add_function(wrap_pyfunction!(sample_gates, m)?)?;
    m.add_function(wrap_pyfunction!(approximator_gate, m)?)?;
    m.add_function(wrap_pyfunction!(population_bound, m)?)?;
    m.add_function(wrap_pyfunction!(fit_loglog_slope, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(verify_theory, m)?)?;
    Ok(())
}
