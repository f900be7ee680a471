//! Random feature ridge regression for operators between function spaces on
//! the periodic interval, with the tooling to generate Burgers flow-map data,
//! train and evaluate models, and check the theoretical error bounds
//! empirically.

pub mod bounds;
pub mod burgers;
pub mod dataset;
pub mod error;
pub mod features;
pub mod grf;
pub mod grid;
pub mod harness;
pub mod noise;
pub mod rfrr;
pub mod rkhs;
pub mod seed;

pub use error::{Error, Result};
pub use grid::GridFunction;
