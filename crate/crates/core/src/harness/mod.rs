//! Experiment orchestration: sweeps, slope fits, bound verification and
//! result export.

pub mod config;
pub mod export;
pub mod oracle;
pub mod slope;
pub mod sweep;
pub mod verify;

pub use config::{DataSource, FixedSizes, LambdaRule, SweepAxis, SweepConfig, WindowRule};
pub use export::{export_csv, gnuplot_text, import_csv, svg_plot};
pub use slope::{auto_window, fit_loglog_slope, fit_with_rule, SlopeFit};
pub use sweep::{prepare_pool, run_sweep, run_sweep_on, CurvePoint, Pool, SweepResult, SweepRow};
pub use oracle::{run_oracle, OracleConfig};
pub use verify::{verify_theory, VerifyConfig, VerifyReport, VerifyScope};
