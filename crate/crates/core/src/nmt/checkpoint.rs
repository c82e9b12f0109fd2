//! JSON checkpoints: config, vocabularies and every parameter tensor.
//!
//! Tensors are stored row-major under the field names of [`NmtModel`];
//! floats are written in shortest round-trip form, so a save/load cycle is
//! bit-exact.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::model::NmtModel;
use crate::corpus::Vocabulary;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "termnmt-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub layout: String,
    pub source_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
    pub model: NmtModel,
}

impl Checkpoint {
    pub fn new(model: NmtModel, source_vocab: Vocabulary, target_vocab: Vocabulary) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            layout: "row-major".into(),
            source_vocab,
            target_vocab,
            model,
        }
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(reader)?;
        ck.validate()?;
        Ok(ck)
    }

    fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {} v{}",
                self.format, self.version
            )));
        }
        let cfg = &self.model.config;
        cfg.validate()?;
        let expected = NmtModel::zeros(cfg);
        for ((name, want), (_, got)) in expected.tensors().iter().zip(self.model.tensors()) {
            if want.shape() != got.shape() || got.data.len() != got.rows * got.cols {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        if self.model.encoder.len() != cfg.layers || self.model.decoder.len() != cfg.layers {
            return Err(Error::Checkpoint("layer count does not match config".into()));
        }
        if self.source_vocab.len() != cfg.source_vocab || self.target_vocab.len() != cfg.target_vocab {
            return Err(Error::Checkpoint("vocabulary sizes do not match config".into()));
        }
        if !self.model.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(())
    }
}
