//! Binary checkpoint files.
//!
//! Layout (little-endian): `"LNCK"`, version `u32 = 1`, epoch `u32`,
//! learning rate `f64`, validation accuracy `f64`, input dim `u64`, hidden
//! width `u64` (0 for no hidden layer), class count `u64`, activation `u32`
//! (0 tanh, 1 relu), then `f64` row-major: encoder weights (`h x d`),
//! encoder bias (`h`), head weights (`N x h_eff`), head bias (`N`).

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use super::{Activation, Encoder, ModelCheckpoint};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LNCK";
const VERSION: u32 = 1;

/// `epoch_{t:03}.ckpt`
pub fn checkpoint_file_name(epoch: usize) -> String {
    format!("epoch_{epoch:03}.ckpt")
}

pub fn write_checkpoint(c: &ModelCheckpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(c.epoch as u32).to_le_bytes());
    out.extend_from_slice(&c.learning_rate.to_le_bytes());
    out.extend_from_slice(&c.val_accuracy.to_le_bytes());
    out.extend_from_slice(&(c.input_dim() as u64).to_le_bytes());
    let hidden = c.encoder.as_ref().map_or(0, |e| e.weights.nrows());
    out.extend_from_slice(&(hidden as u64).to_le_bytes());
    out.extend_from_slice(&(c.num_classes() as u64).to_le_bytes());
    let act = match c.encoder.as_ref().map(|e| e.activation) {
        None | Some(Activation::Tanh) => 0u32,
        Some(Activation::Relu) => 1,
    };
    out.extend_from_slice(&act.to_le_bytes());
    let mut put = |vals: &mut dyn Iterator<Item = &f64>| {
        for v in vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    if let Some(e) = &c.encoder {
        put(&mut e.weights.iter());
        put(&mut e.bias.iter());
    }
    put(&mut c.head_weights.iter());
    put(&mut c.head_bias.iter());
    out
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<ModelCheckpoint> {
    let mut pos = 0usize;
    let mut take = |len: usize| -> Result<&[u8]> {
        let end = pos
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::format("truncated checkpoint"))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(Error::format("bad checkpoint magic, expected LNCK"));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap());
    let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
    let version = u32_at(take(4)?);
    if version != VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let epoch = u32_at(take(4)?) as usize;
    let learning_rate = f64_at(take(8)?);
    let val_accuracy = f64_at(take(8)?);
    let dims: Vec<usize> = (0..3)
        .map(|_| take(8).map(|s| u64_at(s) as usize))
        .collect::<Result<_>>()?;
    let (d, h, classes) = (dims[0], dims[1], dims[2]);
    let activation = match u32_at(take(4)?) {
        0 => Activation::Tanh,
        1 => Activation::Relu,
        other => return Err(Error::format(format!("unknown activation code {other}"))),
    };
    let mut floats = |count: usize| -> Result<Vec<f64>> {
        let len = count
            .checked_mul(8)
            .ok_or_else(|| Error::format("checkpoint size overflow"))?;
        Ok(take(len)?.chunks_exact(8).map(f64_at).collect())
    };
    let encoder = if h > 0 {
        let w = Array2::from_shape_vec((h, d), floats(h * d)?).expect("sized");
        let b = Array1::from(floats(h)?);
        Some(Encoder {
            weights: w,
            bias: b,
            activation,
        })
    } else {
        None
    };
    let h_eff = if h > 0 { h } else { d };
    let head_weights = Array2::from_shape_vec((classes, h_eff), floats(classes * h_eff)?).expect("sized");
    let head_bias = Array1::from(floats(classes)?);
    if pos != bytes.len() {
        return Err(Error::format("trailing bytes in checkpoint"));
    }
    let ckpt = ModelCheckpoint {
        encoder,
        head_weights,
        head_bias,
        epoch,
        learning_rate,
        val_accuracy,
    };
    let finite = ckpt
        .head_weights
        .iter()
        .chain(ckpt.head_bias.iter())
        .all(|v| v.is_finite())
        && ckpt
            .encoder
            .as_ref()
            .is_none_or(|e| e.weights.iter().chain(e.bias.iter()).all(|v| v.is_finite()));
    if !finite {
        return Err(Error::validation("checkpoint contains non-finite weights"));
    }
    Ok(ckpt)
}

/// Every `epoch_*.ckpt` in `dir`, sorted by epoch.
pub fn load_checkpoint_dir(dir: &Path) -> Result<Vec<ModelCheckpoint>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("epoch_") && n.ends_with(".ckpt"))
        })
        .collect();
    paths.sort();
    let mut out = paths
        .iter()
        .map(|p| read_checkpoint(&std::fs::read(p)?))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|c| c.epoch);
    if out.is_empty() {
        return Err(Error::arg(format!("no checkpoints in {}", dir.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SynthSpec};
    use crate::model::{train, ModelConfig};

    #[test]
    fn round_trip_both_shapes() {
        let d = generate_synthetic(&SynthSpec {
            num_classes: 3,
            dim: 5,
            per_class: 10,
            separation: 2.0,
            std: 1.0,
            seed: 1,
        })
        .unwrap();
        for hidden in [0, 4] {
            let cfg = ModelConfig {
                hidden,
                epochs: 2,
                ..Default::default()
            };
            for c in train(&d, &d, &cfg).unwrap() {
                let bytes = write_checkpoint(&c);
                let back = read_checkpoint(&bytes).unwrap();
                assert_eq!(back, c);
                assert_eq!(write_checkpoint(&back), bytes);
            }
        }
        assert_eq!(checkpoint_file_name(7), "epoch_007.ckpt");
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_checkpoint(b"LNCX"), Err(Error::Format(_))));
        assert!(matches!(read_checkpoint(b"LNCK\x01\0\0\0"), Err(Error::Format(_))));
    }
}
