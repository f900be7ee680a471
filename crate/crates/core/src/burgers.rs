//! Pseudo-spectral solver for viscous Burgers on the torus,
//! `u_t + (u²/2)_x = ν u_xx`, and the flow map `u(·,0) ↦ u(·,T)` it defines.
//!
//! Time stepping is fourth-order Runge–Kutta in the integrating-factor
//! variable `v = e^{νk²t} û`, which removes the diffusive stiffness. The
//! quadratic flux is evaluated pseudo-spectrally with 2/3-rule dealiasing.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::grf::{sample_grf, MaternSpec};
use crate::grid::{
    check_power_of_two, forward_plan, forward_transform, inverse_plan, inverse_transform,
    resample_coeffs, wavenumber, GridFunction,
};
use crate::seed;

/// Velocity scale used for the advective stability check at construction.
pub const REFERENCE_VELOCITY: f64 = 4.0;

/// RK4 stability limit on the imaginary axis.
const RK4_IMAGINARY_LIMIT: f64 = 2.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurgersConfig {
    pub viscosity: f64,
    pub t_final: f64,
    pub p_solve: usize,
    pub dt: f64,
    #[serde(default = "default_true")]
    pub dealias: bool,
}

fn default_true() -> bool {
    true
}

impl Default for BurgersConfig {
    fn default() -> Self {
        Self {
            viscosity: 0.1,
            t_final: 1.0,
            p_solve: 256,
            dt: 1e-3,
            dealias: true,
        }
    }
}

impl BurgersConfig {
    pub fn new(viscosity: f64, t_final: f64, p_solve: usize, dt: f64, dealias: bool) -> Result<Self> {
        let cfg = Self {
            viscosity,
            t_final,
            p_solve,
            dt,
            dealias,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default settings with `p_solve = max(256, 2·p_data)`.
    pub fn for_data_grid(p_data: usize) -> Result<Self> {
        let cfg = Self {
            p_solve: (2 * p_data).max(256),
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_power_of_two(self.p_solve)?;
        for (name, v) in [
            ("viscosity", self.viscosity),
            ("t_final", self.t_final),
            ("dt", self.dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidValue(format!("{name} must be > 0, got {v}")));
            }
        }
        let limit = self.max_stable_dt(REFERENCE_VELOCITY);
        if self.dt > limit {
            return Err(Error::InvalidValue(format!(
                "dt = {} exceeds the advective stability bound {limit:.3e} at p_solve = {}",
                self.dt, self.p_solve
            )));
        }
        Ok(())
    }

    /// Largest dt keeping `dt · u_max · k_max` inside the RK4 stability region.
    pub fn max_stable_dt(&self, u_max: f64) -> f64 {
        RK4_IMAGINARY_LIMIT / (u_max.max(f64::MIN_POSITIVE) * self.highest_active_mode() as f64)
    }

    fn highest_active_mode(&self) -> usize {
        if self.dealias {
            self.p_solve / 3
        } else {
            self.p_solve / 2
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).ceil().max(1.0) as usize
    }
}

struct Stepper {
    p: usize,
    dt: f64,
    half_decay: Vec<f64>,
    full_decay: Vec<f64>,
    /// `−ik/2` with the dealiasing mask folded in.
    flux_factor: Vec<Complex64>,
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    work: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Stepper {
    fn new(cfg: &BurgersConfig, dt: f64) -> Self {
        let p = cfg.p_solve;
        let cutoff = if cfg.dealias { p as i64 / 3 } else { p as i64 / 2 };
        let mut half_decay = vec![0.0; p];
        let mut full_decay = vec![0.0; p];
        let mut flux_factor = vec![Complex64::new(0.0, 0.0); p];
        for idx in 0..p {
            let k = wavenumber(idx, p);
            let kf = k as f64;
            half_decay[idx] = (-cfg.viscosity * kf * kf * dt / 2.0).exp();
            full_decay[idx] = half_decay[idx] * half_decay[idx];
            // the Nyquist mode carries no derivative on a real grid
            if k.abs() <= cutoff && k != -(p as i64 / 2) {
                flux_factor[idx] = Complex64::new(0.0, -0.5 * kf);
            }
        }
        let fwd = forward_plan(p);
        let inv = inverse_plan(p);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Self {
            p,
            dt,
            half_decay,
            full_decay,
            flux_factor,
            fwd,
            inv,
            work: vec![Complex64::new(0.0, 0.0); p],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    /// `dt · N(v)` where `N(v) = −(ik/2) F[(F⁻¹v)²]`.
    fn flux(&mut self, v: &[Complex64], out: &mut [Complex64]) {
        self.work.copy_from_slice(v);
        self.inv.process_with_scratch(&mut self.work, &mut self.scratch);
        for z in &mut self.work {
            *z = Complex64::new(z.re * z.re, 0.0);
        }
        self.fwd.process_with_scratch(&mut self.work, &mut self.scratch);
        let s = self.dt / self.p as f64;
        for ((o, w), f) in out.iter_mut().zip(&self.work).zip(&self.flux_factor) {
            *o = w * f * s;
        }
    }

    fn step(&mut self, v: &mut [Complex64], bufs: &mut [Vec<Complex64>; 5]) {
        let [a, b, c, d, tmp] = bufs;
        self.flux(v, a);
        for i in 0..self.p {
            tmp[i] = self.half_decay[i] * (v[i] + a[i] * 0.5);
        }
        self.flux(tmp, b);
        for i in 0..self.p {
            tmp[i] = self.half_decay[i] * v[i] + b[i] * 0.5;
        }
        self.flux(tmp, c);
        for i in 0..self.p {
            tmp[i] = self.full_decay[i] * v[i] + self.half_decay[i] * c[i];
        }
        self.flux(tmp, d);
        for i in 0..self.p {
            let e = self.half_decay[i];
            let e2 = self.full_decay[i];
            v[i] = e2 * v[i] + (e2 * a[i] + 2.0 * e * (b[i] + c[i]) + d[i]) / 6.0;
        }
    }
}

/// Integrates from `u0` through the sorted `times` and returns the state at
/// each one on `u0`'s grid.
pub fn solve_burgers_snapshots(
    u0: &GridFunction,
    cfg: &BurgersConfig,
    times: &[f64],
) -> Result<Vec<GridFunction>> {
    cfg.validate()?;
    let p = u0.p();
    check_power_of_two(p)?;
    if p > cfg.p_solve {
        return Err(Error::InvalidValue(format!(
            "input grid {p} is finer than the solver grid {}",
            cfg.p_solve
        )));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| *t < 0.0) {
        return Err(Error::InvalidValue("snapshot times must be sorted and >= 0".into()));
    }
    let u_max = u0.max_abs();
    if cfg.dt > cfg.max_stable_dt(u_max) {
        return Err(Error::InvalidValue(format!(
            "dt = {} violates the advective bound {:.3e} for max|u0| = {u_max:.3}",
            cfg.dt,
            cfg.max_stable_dt(u_max)
        )));
    }
    let mut state = resample_coeffs(&forward_transform(u0)?, cfg.p_solve)?;
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut step_index = 0usize;
    let zero = Complex64::new(0.0, 0.0);
    let mut bufs: [Vec<Complex64>; 5] = std::array::from_fn(|_| vec![zero; cfg.p_solve]);
    for &target in times {
        let span = target - t;
        let n = (span / cfg.dt - 1e-9).ceil().max(0.0) as usize;
        if n > 0 {
            let mut stepper = Stepper::new(cfg, span / n as f64);
            let v = state.as_fft_order_mut();
            for j in 1..=n {
                stepper.step(v, &mut bufs);
                step_index += 1;
                if !v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                    return Err(Error::Stability {
                        step: step_index,
                        time: t + span * j as f64 / n as f64,
                    });
                }
            }
        }
        t = target;
        out.push(inverse_transform(&resample_coeffs(&state, p)?));
    }
    Ok(out)
}

/// The flow map at `cfg.t_final`.
pub fn solve_burgers(u0: &GridFunction, cfg: &BurgersConfig) -> Result<GridFunction> {
    let mut v = solve_burgers_snapshots(u0, cfg, &[cfg.t_final])?;
    Ok(v.pop().expect("one snapshot requested"))
}

/// `n` iid pairs `(u_i, G(u_i))` on a `p_data`-point grid.
///
/// Sample `i` draws its input from stream `i` of the `"inputs"` family under
/// `seed`, so the data set is identical however the work is scheduled.
pub fn generate_dataset(
    n: usize,
    nu_spec: &MaternSpec,
    cfg: &BurgersConfig,
    p_data: usize,
    seed_value: u64,
) -> Result<Dataset> {
    nu_spec.validate()?;
    check_power_of_two(p_data)?;
    cfg.validate()?;
    let family = seed::domain(seed_value, "inputs");
    let pairs: Vec<(GridFunction, GridFunction)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::stream(family, i as u64);
            let u = sample_grf(nu_spec, p_data, &mut rng)?;
            let y = solve_burgers(&u, cfg).map_err(|e| Error::Sample {
                index: i,
                source: Box::new(e),
            })?;
            Ok((u, y))
        })
        .collect::<Result<_>>()?;
    let (inputs, outputs) = pairs.into_iter().unzip();
    let provenance = Provenance {
        seed: seed_value,
        generator: "burgers".into(),
        input_measure: Some(*nu_spec),
        burgers: Some(*cfg),
        noise: None,
        notes: String::new(),
    };
    Dataset::new(p_data, inputs, outputs, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{l2_norm_sq, resample};

    fn rel_l2(a: &GridFunction, b: &GridFunction) -> f64 {
        (l2_norm_sq(&a.sub(b).unwrap()) / l2_norm_sq(b)).sqrt()
    }

    fn sample_input(p: usize, i: u64) -> GridFunction {
        sample_grf(&MaternSpec::input_default(), p, &mut seed::stream(31, i)).unwrap()
    }

    #[test]
    fn zero_and_constants_are_steady() {
        let cfg = BurgersConfig::default();
        let z = solve_burgers(&GridFunction::zeros(64), &cfg).unwrap();
        assert!(z.max_abs() == 0.0);
        let c = solve_burgers(&GridFunction::constant(0.7, 64), &cfg).unwrap();
        assert!(c.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn small_amplitude_follows_heat_equation() {
        let cfg = BurgersConfig::default();
        let u0 = GridFunction::from_fn(64, |x| 1e-6 * x.sin()).unwrap();
        let out = solve_burgers(&u0, &cfg).unwrap();
        let exact = GridFunction::from_fn(64, |x| 1e-6 * (-0.1f64).exp() * x.sin()).unwrap();
        assert!(rel_l2(&out, &exact) < 0.01);
    }

    #[test]
    fn conserves_mean_and_dissipates_energy() {
        let cfg = BurgersConfig::default();
        let mut u0 = sample_input(64, 0);
        u0 = u0.add(&GridFunction::constant(0.3, 64)).unwrap();
        let times: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
        let snaps = solve_burgers_snapshots(&u0, &cfg, &times).unwrap();
        let mut last = l2_norm_sq(&u0);
        for s in &snaps {
            assert!((s.mean() - u0.mean()).abs() < 1e-10);
            let e = l2_norm_sq(s);
            assert!(e <= last * (1.0 + 1e-12));
            last = e;
        }
    }

    #[test]
    fn dt_halving_changes_little() {
        let cfg = BurgersConfig::default();
        let u0 = sample_input(64, 1);
        let a = solve_burgers(&u0, &cfg).unwrap();
        let b = solve_burgers(&u0, &BurgersConfig { dt: cfg.dt / 2.0, ..cfg }).unwrap();
        assert!(rel_l2(&a, &b) < 1e-8);
    }

    #[test]
    fn resolution_consistent() {
        // band-limited input: GRF restricted to modes < 16
        let base = resample(&sample_input(32, 2), 64).unwrap();
        let coarse = solve_burgers(&base, &BurgersConfig::for_data_grid(64).unwrap()).unwrap();
        let fine_in = resample(&base, 128).unwrap();
        let fine = solve_burgers(&fine_in, &BurgersConfig::for_data_grid(128).unwrap()).unwrap();
        let fine_restricted = resample(&fine, 64).unwrap();
        let a = forward_transform(&coarse).unwrap();
        let b = forward_transform(&fine_restricted).unwrap();
        for k in -31..32 {
            assert!((a.mode(k) - b.mode(k)).norm() < 1e-6);
        }
    }

    #[test]
    fn rejects_oversized_input_and_bad_dt() {
        let cfg = BurgersConfig {
            p_solve: 64,
            ..BurgersConfig::default()
        };
        assert!(solve_burgers(&GridFunction::zeros(128), &cfg).is_err());
        assert!(BurgersConfig::new(0.1, 1.0, 256, 0.5, true).is_err());
        assert!(BurgersConfig::new(0.0, 1.0, 256, 1e-3, true).is_err());
    }

    #[test]
    fn blow_up_is_reported_with_step() {
        let cfg = BurgersConfig::default();
        let u0 = GridFunction::from_fn(64, |x| 1e3 * x.sin()).unwrap();
        assert!(solve_burgers(&u0, &cfg).is_err());
    }

    #[test]
    fn empty_and_deterministic_datasets() {
        let spec = MaternSpec::input_default();
        let cfg = BurgersConfig::default();
        let empty = generate_dataset(0, &spec, &cfg, 64, 1).unwrap();
        assert_eq!(empty.len(), 0);
        let a = generate_dataset(2, &spec, &cfg, 64, 5).unwrap();
        let b = generate_dataset(2, &spec, &cfg, 64, 5).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }
}
