//! Backbone checkpoints: versioned JSON holding config, schema, fit
//! preprocessor and every parameter tensor. Loading verifies the format
//! version, tensor shapes, and — when the caller supplies the schema it
//! expects — the schema fingerprint, so a checkpoint can never be silently
//! applied to differently-shaped data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, BackboneConfig};
use crate::data::dataset::TaskKind;
use crate::data::preprocess::Preprocessor;
use crate::data::schema::FeatureSchema;
use crate::error::{Error, Result};
use crate::fsio::{read_json, write_json_atomic};
use crate::nn::matrix::Matrix;

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BackboneCheckpoint {
    version: u32,
    config: BackboneConfig,
    task: TaskKind,
    schema: FeatureSchema,
    schema_fingerprint: u64,
    frozen: bool,
    preprocessor: Preprocessor,
    params: Vec<Matrix>,
}

/// Write a backbone plus the preprocessor it was trained behind.
pub fn save_backbone(path: &Path, bb: &Backbone, pre: &Preprocessor) -> Result<()> {
    let ckpt = BackboneCheckpoint {
        version: FORMAT_VERSION,
        config: *bb.config(),
        task: bb.task(),
        schema: bb.schema().clone(),
        schema_fingerprint: bb.schema().fingerprint(),
        frozen: bb.is_frozen(),
        preprocessor: pre.clone(),
        params: bb.param_values(),
    };
    write_json_atomic(path, &ckpt)
}

/// Load a backbone and its preprocessor. When `expected_schema` is given,
/// its fingerprint must match the one stored at save time.
pub fn load_backbone(
    path: &Path,
    expected_schema: Option<&FeatureSchema>,
) -> Result<(Backbone, Preprocessor)> {
    let ckpt: BackboneCheckpoint = read_json(path)?;
    if ckpt.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {FORMAT_VERSION})",
            ckpt.version
        )));
    }
    if ckpt.schema_fingerprint != ckpt.schema.fingerprint() {
        return Err(Error::Checkpoint(
            "stored schema does not match its fingerprint".into(),
        ));
    }
    if let Some(expected) = expected_schema {
        if expected.fingerprint() != ckpt.schema_fingerprint {
            return Err(Error::Checkpoint(format!(
                "schema fingerprint mismatch: checkpoint {:016x}, data {:016x}",
                ckpt.schema_fingerprint,
                expected.fingerprint()
            )));
        }
    }
    for m in &ckpt.params {
        if !m.is_consistent() {
            return Err(Error::Checkpoint("corrupt parameter tensor".into()));
        }
    }

    let mut bb = Backbone::new(&ckpt.config, &ckpt.schema, ckpt.task)?;
    bb.restore_param_values(&ckpt.params)?;
    if ckpt.frozen {
        bb.freeze();
    }
    Ok((bb, ckpt.preprocessor))
}
