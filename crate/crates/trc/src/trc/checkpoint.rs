//! Corrector checkpoints. A corrector only makes sense on top of the exact
//! backbone it was trained against, so the checkpoint stores that backbone's
//! parameter checksum and loading verifies it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::Backbone;
use crate::error::{Error, Result};
use crate::fsio::{read_json, write_json_atomic};
use crate::nn::matrix::Matrix;
use crate::trc::{CorrectorConfig, TrcCorrector};

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CorrectorCheckpoint {
    version: u32,
    config: CorrectorConfig,
    backbone_checksum: u64,
    params: Vec<Matrix>,
}

pub fn save_corrector(path: &Path, corr: &TrcCorrector, bb: &Backbone) -> Result<()> {
    let ckpt = CorrectorCheckpoint {
        version: FORMAT_VERSION,
        config: *corr.config(),
        backbone_checksum: bb.param_checksum(),
        params: corr.param_values(),
    };
    write_json_atomic(path, &ckpt)
}

/// Load a corrector, verifying it was trained on exactly this backbone.
pub fn load_corrector(path: &Path, bb: &Backbone) -> Result<TrcCorrector> {
    let ckpt: CorrectorCheckpoint = read_json(path)?;
    if ckpt.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {FORMAT_VERSION})",
            ckpt.version
        )));
    }
    if ckpt.backbone_checksum != bb.param_checksum() {
        return Err(Error::Checkpoint(format!(
            "corrector was trained on backbone {:016x}, got {:016x}",
            ckpt.backbone_checksum,
            bb.param_checksum()
        )));
    }
    if ckpt.config.repr_dim != bb.repr_dim() {
        return Err(Error::Checkpoint(format!(
            "corrector expects {}-wide representations, backbone produces {}",
            ckpt.config.repr_dim,
            bb.repr_dim()
        )));
    }
    for m in &ckpt.params {
        if !m.is_consistent() {
            return Err(Error::Checkpoint("corrupt parameter tensor".into()));
        }
    }
    let mut corr = TrcCorrector::new(&ckpt.config)?;
    corr.restore_param_values(&ckpt.params)?;
    Ok(corr)
}
