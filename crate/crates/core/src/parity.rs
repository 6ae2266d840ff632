//! Cross-implementation parity fixtures.
//!
//! An external trainer exports a weight file together with a JSON fixture of
//! probe patches and the head outputs it computed for them. [`check`] replays
//! the probes through [`LocalModel::forward_patch`] and reports the largest
//! absolute deviation.
//!
//! ```json
//! {
//!   "model_hash": "0123456789abcdef",
//!   "patch_dims": [4, 7, 3],
//!   "probes": [{ "patch": [0.0, 0.5, ...], "params": [0.1, ...] }]
//! }
//! ```
//! Patch values are model inputs (pixel / 255); `params` uses the head's output layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LocalModel;
use crate::nnkernel::Tensor;

/// Tolerance on forward-pass parity between implementations.
pub const PARITY_TOLERANCE: f32 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub patch: Vec<f32>,
    pub params: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityFixture {
    /// Hex FNV-1a-64 of the weight file the fixture was produced with.
    pub model_hash: String,
    pub patch_dims: [usize; 3],
    pub probes: Vec<Probe>,
}

impl ParityFixture {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("parity fixture: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixture serializes")
    }

    /// Records `model`'s own outputs for `patches`.
    pub fn record(model: &LocalModel, patches: &[Tensor]) -> Result<Self> {
        let probes = patches
            .iter()
            .map(|p| {
                Ok(Probe {
                    patch: p.data().to_vec(),
                    params: model.forward_patch(p)?.values().to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model_hash: format!("{:016x}", model.hash()),
            patch_dims: model.patch_dims(),
            probes,
        })
    }
}

/// Largest `|expected - actual|` over every probe output.
pub fn check(model: &LocalModel, fixture: &ParityFixture) -> Result<f32> {
    let hash = u64::from_str_radix(&fixture.model_hash, 16)
        .map_err(|_| Error::Format(format!("bad model hash {:?}", fixture.model_hash)))?;
    if hash != model.hash() {
        return Err(Error::ModelMismatch {
            expected: hash,
            found: model.hash(),
        });
    }
    let mut worst = 0.0f32;
    for (n, probe) in fixture.probes.iter().enumerate() {
        let patch = Tensor::new(fixture.patch_dims.to_vec(), probe.patch.clone())?;
        let got = model.forward_patch(&patch)?;
        if got.values().len() != probe.params.len() {
            return Err(Error::Shape(format!(
                "probe {n}: {} expected outputs, model produced {}",
                probe.params.len(),
                got.values().len()
            )));
        }
        for (a, b) in got.values().iter().zip(&probe.params) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}
