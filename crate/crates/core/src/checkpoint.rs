//! Checkpoint format for the miniature scorer.
//!
//! Layout: one JSON header line terminated by `\n`, followed by every
//! parameter as little-endian IEEE-754 f64, concatenated in the order
//! embedding, attn_query, w1, b1, w2, b2 (each row-major). The header records
//! the format name, version, model dimensions, the training config, and the
//! parameter count the blob must contain.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ToyModelParams;
use crate::optim::TrainingConfig;

pub const CHECKPOINT_FORMAT: &str = "toy-scorer-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    vocab_size: usize,
    embed_dim: usize,
    hidden_dim: usize,
    param_count: usize,
    config: TrainingConfig,
}

fn tensors(params: &ToyModelParams) -> [&[f64]; 6] {
    [
        &params.embedding,
        &params.attn_query,
        &params.w1,
        &params.b1,
        &params.w2,
        &params.b2,
    ]
}

/// Writes the header line and parameter blob.
pub fn save_checkpoint<W: Write>(
    mut w: W,
    params: &ToyModelParams,
    config: &TrainingConfig,
) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        vocab_size: params.vocab_size(),
        embed_dim: params.embed_dim(),
        hidden_dim: params.hidden_dim(),
        param_count: params.param_count(),
        config: config.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for tensor in tensors(params) {
        for &v in tensor {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a checkpoint back; validates format, version, dimensions, blob
/// length, and finiteness.
pub fn load_checkpoint<R: BufRead>(mut r: R) -> Result<(ToyModelParams, TrainingConfig)> {
    let mut header_line = String::new();
    r.read_line(&mut header_line)?;
    let header: CheckpointHeader = serde_json::from_str(header_line.trim_end())?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::input(format!(
            "unexpected checkpoint format `{}`",
            header.format
        )));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::input(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }
    let mut params = ToyModelParams::zeros(header.vocab_size, header.embed_dim, header.hidden_dim)?;
    if params.param_count() != header.param_count {
        return Err(Error::input(format!(
            "header claims {} parameters, dimensions imply {}",
            header.param_count,
            params.param_count()
        )));
    }

    let mut blob = Vec::new();
    r.read_to_end(&mut blob)?;
    if blob.len() != header.param_count * 8 {
        return Err(Error::input(format!(
            "parameter blob is {} bytes, expected {}",
            blob.len(),
            header.param_count * 8
        )));
    }
    let mut offset = 0usize;
    for tensor in [
        &mut params.embedding,
        &mut params.attn_query,
        &mut params.w1,
        &mut params.b1,
        &mut params.w2,
        &mut params.b2,
    ] {
        for v in tensor.iter_mut() {
            let bytes: [u8; 8] = blob[offset..offset + 8].try_into().unwrap();
            *v = f64::from_le_bytes(bytes);
            offset += 8;
        }
    }
    if !params.all_finite() {
        return Err(Error::numeric("checkpoint contains non-finite parameters"));
    }
    Ok((params, header.config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let params = ToyModelParams::init(9, 3, 5, 123).unwrap();
        let config = TrainingConfig::default();
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &params, &config).unwrap();
        let (loaded, loaded_cfg) = load_checkpoint(&buf[..]).unwrap();
        assert_eq!(loaded, params);
        assert_eq!(loaded_cfg, config);
    }

    #[test]
    fn save_is_deterministic() {
        let params = ToyModelParams::init(9, 3, 5, 123).unwrap();
        let config = TrainingConfig::default();
        let mut a = Vec::new();
        let mut b = Vec::new();
        save_checkpoint(&mut a, &params, &config).unwrap();
        save_checkpoint(&mut b, &params, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blob_layout_matches_documented_order() {
        // Header line, then embedding, attn_query, w1, b1, w2, b2 as LE f64.
        let mut params = ToyModelParams::zeros(2, 1, 1).unwrap();
        params.embedding = vec![1.0, 2.0];
        params.attn_query = vec![3.0];
        params.w1 = vec![4.0];
        params.b1 = vec![5.0];
        params.w2 = vec![6.0, 7.0];
        params.b2 = vec![8.0, 9.0];
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &params, &TrainingConfig::default()).unwrap();
        let newline = buf.iter().position(|&b| b == b'\n').unwrap();
        let blob = &buf[newline + 1..];
        let values: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(values, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let params = ToyModelParams::init(4, 2, 2, 1).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &params, &TrainingConfig::default()).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(load_checkpoint(&buf[..]).is_err());
    }
}
