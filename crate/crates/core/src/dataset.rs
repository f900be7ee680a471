//! Input/output pairs of grid functions and the `VVRF` file format.
//!
//! Layout (little-endian): magic `b"VVRF"`, version `u32`, `p` as `u32`,
//! `n` as `u64`, then `n` records of `2p` `f64` values (input samples followed
//! by output samples), then a UTF-8 provenance footer running to end of file.
//! The footer is TOML.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::burgers::BurgersConfig;
use crate::error::{Error, Result};
use crate::grf::MaternSpec;
use crate::grid::{l2_norm_sq, resample, GridFunction};
use crate::noise::NoiseModel;

pub const DATASET_MAGIC: &[u8; 4] = b"VVRF";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub seed: u64,
    pub generator: String,
    pub input_measure: Option<MaternSpec>,
    pub burgers: Option<BurgersConfig>,
    pub noise: Option<NoiseModel>,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    p: usize,
    inputs: Vec<GridFunction>,
    outputs: Vec<GridFunction>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        p: usize,
        inputs: Vec<GridFunction>,
        outputs: Vec<GridFunction>,
        provenance: Provenance,
    ) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::Dimension {
                expected: inputs.len(),
                got: outputs.len(),
            });
        }
        if let Some(f) = inputs.iter().chain(&outputs).find(|f| f.p() != p) {
            return Err(Error::Dimension {
                expected: p,
                got: f.p(),
            });
        }
        Ok(Self {
            p,
            inputs,
            outputs,
            provenance,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[GridFunction] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[GridFunction] {
        &self.outputs
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&GridFunction, &GridFunction)> {
        self.inputs.iter().zip(&self.outputs)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let mut inputs = Vec::with_capacity(indices.len());
        let mut outputs = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidValue(format!(
                    "row {i} out of range for {} rows",
                    self.len()
                )));
            }
            inputs.push(self.inputs[i].clone());
            outputs.push(self.outputs[i].clone());
        }
        Dataset::new(self.p, inputs, outputs, self.provenance.clone())
    }

    /// Contiguous rows `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Dataset> {
        self.select(&range.collect::<Vec<_>>())
    }

    /// Spectral resampling of every field onto `q` points.
    pub fn resample(&self, q: usize) -> Result<Dataset> {
        let inputs = self.inputs.iter().map(|f| resample(f, q)).collect::<Result<_>>()?;
        let outputs = self.outputs.iter().map(|f| resample(f, q)).collect::<Result<_>>()?;
        Dataset::new(q, inputs, outputs, self.provenance.clone())
    }

    pub fn with_outputs(&self, outputs: Vec<GridFunction>) -> Result<Dataset> {
        Dataset::new(self.p, self.inputs.clone(), outputs, self.provenance.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(20 + self.len() * self.p * 16);
        buf.extend_from_slice(DATASET_MAGIC);
        buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.p as u32).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (u, y) in self.pairs() {
            for v in u.values().iter().chain(y.values()) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let footer = toml::to_string(&self.provenance).unwrap_or_default();
        buf.extend_from_slice(footer.as_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Dataset> {
        let bad = |reason: &str| Error::format(path, reason);
        if bytes.len() < 20 || &bytes[..4] != DATASET_MAGIC {
            return Err(bad("missing VVRF header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != DATASET_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let p = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = n
            .checked_mul(2 * p * 8)
            .ok_or_else(|| bad("record count overflows"))?;
        if bytes.len() < 20 + body {
            return Err(bad("truncated records"));
        }
        let mut floats = bytes[20..20 + body]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut inputs = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        for _ in 0..n {
            let u: Vec<f64> = floats.by_ref().take(p).collect();
            let y: Vec<f64> = floats.by_ref().take(p).collect();
            inputs.push(GridFunction::new(u).map_err(|e| bad(&e.to_string()))?);
            outputs.push(GridFunction::new(y).map_err(|e| bad(&e.to_string()))?);
        }
        let footer = std::str::from_utf8(&bytes[20 + body..]).map_err(|_| bad("footer is not UTF-8"))?;
        let provenance = if footer.trim().is_empty() {
            Provenance::default()
        } else {
            toml::from_str(footer).map_err(|e| bad(&format!("provenance: {e}")))?
        };
        Dataset::new(p, inputs, outputs, provenance)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Dataset::from_bytes(&bytes, path)
    }

    /// Per-sample summary: index, input mean, input and output squared norms.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "index,input_mean,input_norm_sq,output_mean,output_norm_sq").map_err(io)?;
        for (i, (u, y)) in self.pairs().enumerate() {
            writeln!(
                w,
                "{i},{},{},{},{}",
                u.mean(),
                l2_norm_sq(u),
                y.mean(),
                l2_norm_sq(y)
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }
}
