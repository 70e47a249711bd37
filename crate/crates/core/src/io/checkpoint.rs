//! Trained SepIt blocks in a binary container.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::container::{read_container, write_container};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sepit::{Dims, SepItConfig, SepItModel};
use crate::CODE_VERSION;

pub const MODEL_MAGIC: &[u8; 8] = b"SCSSMDL1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub code_version: String,
    pub config: SepItConfig,
    pub dims: Dims,
    pub blocks: usize,
    pub params_per_block: usize,
    /// Scalar type the blocks were trained in.
    pub scalar: String,
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, config: &SepItConfig, blocks: &[SepItModel<T>]) -> Result<()> {
    let first = blocks.first().ok_or_else(|| Error::InvalidParameter("no blocks to save".into()))?;
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        code_version: CODE_VERSION.to_string(),
        config: config.clone(),
        dims: first.dims(),
        blocks: blocks.len(),
        params_per_block: first.param_count(),
        scalar: std::any::type_name::<T>().to_string(),
    };
    let payload: Vec<f64> = blocks.iter().flat_map(|b| b.params().iter().map(|p| p.as_f64())).collect();
    write_container(path, MODEL_MAGIC, &header, &payload)
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<(CheckpointHeader, Vec<SepItModel<T>>)> {
    let raw = read_container(path, MODEL_MAGIC)?;
    raw.verify()?;
    let header: CheckpointHeader = raw.header_as().map_err(|e| Error::Corrupt(format!("checkpoint header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Corrupt(format!("checkpoint version {}", header.version)));
    }
    if raw.payload.len() != header.blocks * header.params_per_block {
        return Err(Error::Corrupt("payload size does not match the header".into()));
    }
    let blocks = raw
        .payload
        .chunks_exact(header.params_per_block.max(1))
        .map(|c| SepItModel::from_params(header.dims, c.iter().map(|&x| T::of(x)).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok((header, blocks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_f32_blocks() {
        let cfg = SepItConfig { n: 3, ..Default::default() };
        let blocks: Vec<SepItModel<f32>> = (0..2).map(|i| SepItModel::init(cfg.dims(), 9, i).unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.scssmdl");
        save_checkpoint(&p, &cfg, &blocks).unwrap();
        let (h, back) = load_checkpoint::<f32>(&p).unwrap();
        assert_eq!(h.blocks, 2);
        assert_eq!(h.config, cfg);
        assert_eq!(back, blocks);
    }
}
