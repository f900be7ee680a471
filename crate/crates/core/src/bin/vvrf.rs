//! Command-line front end: data generation, training, evaluation, sweeps,
//! bound verification and the RKHS oracle.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use vvrf::dataset::Dataset;
use vvrf::features::RfModel;
use vvrf::grf::sample_grf;
use vvrf::harness::oracle::export_oracle_csv;
use vvrf::harness::{
    export_csv, fit_with_rule, gnuplot_text, prepare_pool, run_oracle, run_sweep, svg_plot, verify_theory,
    OracleConfig, SweepAxis, SweepConfig, VerifyConfig, VerifyScope,
};
use vvrf::rfrr::{empirical_risk, population_risk_estimate, relative_test_error, train_with, TrainOptions};
use vvrf::{seed, Error, Result};

#[derive(Parser)]
#[command(name = "vvrf", version, about = "Random feature ridge regression for operator learning")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Format of sweep results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Svg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    M,
    N,
    Resolution,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scope {
    Approximator,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the training pool and test pairs of a sweep configuration
    /// into `<out>/data.vvrf`.
    GenData {
        #[arg(long, value_enum, default_value_t = Preset::M)]
        preset: Preset,
    },
    /// Train a model on the first N pairs of a data set into
    /// `<out>/model.vvrm`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 256)]
        m: usize,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 7e-4 / 256.0)]
        lambda: f64,
    },
    /// Evaluate a model on a data set.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run a sweep and write `<out>/sweep.csv` or `<out>/sweep.svg`, plus
    /// `<out>/sweep.dat` for gnuplot.
    Sweep {
        /// Used when no configuration file is given.
        #[arg(long, value_enum, default_value_t = Preset::M)]
        preset: Preset,
    },
    /// Check the error bounds by Monte Carlo in a synthetic setting.
    Verify {
        #[arg(long, default_value_t = 0.05)]
        lambda: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = Scope::Full)]
        scope: Scope,
        /// With --data, also report the model's risks on that data.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, requires = "model")]
        data: Option<PathBuf>,
    },
    /// Write `<out>/oracle.csv`: regularized RKHS error against the
    /// source-condition bound.
    Oracle,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    match &cli.command {
        Command::GenData { preset } => gen_data(&cli, sweep_config(&cli, *preset)?),
        Command::Train { data, m, n, lambda } => train(&cli, data, *m, *n, *lambda),
        Command::Eval { model, data } => eval(model, data),
        Command::Sweep { preset } => sweep(&cli, sweep_config(&cli, *preset)?),
        Command::Verify {
            lambda,
            delta,
            trials,
            scope,
            model,
            data,
        } => {
            let scope = match scope {
                Scope::Approximator => VerifyScope::Approximator,
                Scope::Full => VerifyScope::Full,
            };
            let mut cfg = match &cli.config {
                Some(path) => VerifyConfig::from_toml(&read_text(path)?)?,
                None => VerifyConfig::at_gates(*lambda, *delta, *trials, scope),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            print!("{}", verify_theory(&cfg)?);
            if let (Some(model), Some(data)) = (model, data) {
                let model = RfModel::load(model)?;
                let data = Dataset::load(data)?;
                println!(
                    "supplied model: regularized empirical risk {:.4e}  population risk estimate {:.4e}  |alpha|_M^2 {:.4e}",
                    empirical_risk(&model, &data, model.lambda_used)?,
                    population_risk_estimate(&model, &data)?,
                    model.alpha().iter().map(|a| a * a).sum::<f64>() / model.m() as f64
                );
            }
            Ok(())
        }
        Command::Oracle => {
            let mut cfg = match &cli.config {
                Some(path) => OracleConfig::from_toml(&read_text(path)?)?,
                None => OracleConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let points = run_oracle(&cfg)?;
            let path = cli.out.join("oracle.csv");
            export_oracle_csv(&points, &path)?;
            let worst = points.iter().map(|p| p.ratio()).fold(0.0, f64::max);
            println!("{} points, largest error/bound ratio {worst:.4}, wrote {}", points.len(), path.display());
            Ok(())
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn sweep_config(cli: &Cli, preset: Preset) -> Result<SweepConfig> {
    let mut cfg = match &cli.config {
        Some(path) => SweepConfig::load(path)?,
        None => match preset {
            Preset::M => SweepConfig::m_sweep_default(),
            Preset::N => SweepConfig::n_sweep_default(),
            Preset::Resolution => SweepConfig::resolution_sweep_default(),
        },
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn gen_data(cli: &Cli, cfg: SweepConfig) -> Result<()> {
    let pool = prepare_pool(&cfg)?;
    let mut inputs = pool.train.inputs().to_vec();
    inputs.extend_from_slice(pool.test.inputs());
    let mut outputs = pool.train.outputs().to_vec();
    outputs.extend_from_slice(pool.test.outputs());
    let data = Dataset::new(pool.p(), inputs, outputs, pool.train.provenance.clone())?;
    let path = cli.out.join("data.vvrf");
    data.save(&path)?;
    data.write_summary_csv(&cli.out.join("data_summary.csv"))?;
    println!("wrote {} pairs on a {}-point grid to {}", data.len(), data.p(), path.display());
    Ok(())
}

fn train(cli: &Cli, data: &Path, m: usize, n: Option<usize>, lambda: f64) -> Result<()> {
    let data = Dataset::load(data)?;
    let n = n.unwrap_or(data.len());
    if n == 0 || n > data.len() {
        return Err(Error::Config(format!("n = {n} outside 1..={}", data.len())));
    }
    let train = data.slice(0..n)?;
    let master = seed::domain(cli.seed.unwrap_or(0), "features");
    let feature_measure = vvrf::grf::MaternSpec::feature_default();
    let thetas = (0..m)
        .map(|j| sample_grf(&feature_measure, data.p(), &mut seed::stream(master, j as u64)))
        .collect::<Result<Vec<_>>>()?;
    let cfg = match &cli.config {
        Some(path) => SweepConfig::load(path)?.features,
        None => Default::default(),
    };
    let (model, report) = train_with(&train, &thetas, &cfg, lambda, TrainOptions::default())?;
    let path = cli.out.join("model.vvrm");
    model.save(&path)?;
    println!(
        "M = {} N = {} lambda = {:e} residual = {:.2e} train risk = {:.4e} wall = {:.0} ms; wrote {}",
        report.m,
        report.n,
        report.lambda,
        report.relative_residual,
        report.train_risk,
        report.wall_ms,
        path.display()
    );
    Ok(())
}

fn eval(model: &Path, data: &Path) -> Result<()> {
    let model = RfModel::load(model)?;
    let data = Dataset::load(data)?;
    println!(
        "relative squared error {:.6e}  mean squared error {:.6e}  ({} pairs)",
        relative_test_error(&model, &data)?,
        population_risk_estimate(&model, &data)?,
        data.len()
    );
    Ok(())
}

fn sweep(cli: &Cli, cfg: SweepConfig) -> Result<()> {
    let result = run_sweep(&cfg)?;
    let dat = cli.out.join("sweep.dat");
    std::fs::write(&dat, gnuplot_text(&result)).map_err(|e| Error::io(&dat, e))?;
    let path = match cli.format {
        Format::Csv => {
            let path = cli.out.join("sweep.csv");
            export_csv(&result, &path)?;
            path
        }
        Format::Svg => {
            let path = cli.out.join("sweep.svg");
            let title = format!("{} sweep", cfg.sweep_axis.as_str());
            std::fs::write(&path, svg_plot(&result, &title)).map_err(|e| Error::io(&path, e))?;
            path
        }
    };
    for c in result.curve() {
        println!(
            "{:>6} p = {:<4} median {:.4e}  mean {:.4e} ± {:.1e}  ({} ok, {} failed)",
            c.axis_value,
            c.p,
            c.median,
            c.mean,
            2.0 * c.std,
            c.succeeded,
            c.failed
        );
    }
    if cfg.sweep_axis != SweepAxis::Resolution {
        for &p in cfg.grids() {
            match fit_with_rule(&result.medians(p), cfg.window) {
                Ok(fit) => println!(
                    "p = {p}: slope {:.3} over points {:?} (r² = {:.3})",
                    fit.slope, fit.window, fit.r_squared
                ),
                Err(e) => println!("p = {p}: no slope ({e})"),
            }
        }
    }
    let failed = result.failures().count();
    println!("wrote {} and {}", path.display(), dat.display());
    if failed > 0 {
        return Err(Error::CellFailures {
            failed,
            total: result.rows.len(),
        });
    }
    Ok(())
}
