//! Little-endian binary feature files.
//!
//! Layout: `"LNF1"`, version `u32 = 1`, `n: u64`, `d: u64`, `N: u32`,
//! `flags: u32`, then `n*d` row-major `f32` features, then `n` `u32` labels
//! (flag bit 0), `n` `u32` true labels (flag bit 1) and `n` `u64` ids
//! (flag bit 2). Ids are written only when they are not `0..n`; files without
//! bit 2 load with sequential ids.

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LNF1";
pub const VERSION: u32 = 1;

const FLAG_LABELS: u32 = 1;
const FLAG_TRUE_LABELS: u32 = 1 << 1;
const FLAG_IDS: u32 = 1 << 2;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 4 + 4;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::format(format!("truncated file while reading {what}")))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn read_binary(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format("bad magic, expected LNF1"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let n = usize::try_from(r.u64("n")?).map_err(|_| Error::format("n overflows usize"))?;
    let d = usize::try_from(r.u64("d")?).map_err(|_| Error::format("d overflows usize"))?;
    let num_classes = r.u32("class count")? as usize;
    let flags = r.u32("flags")?;
    if flags & !(FLAG_LABELS | FLAG_TRUE_LABELS | FLAG_IDS) != 0 {
        return Err(Error::format(format!("unknown flag bits {flags:#x}")));
    }
    if flags & FLAG_LABELS == 0 {
        return Err(Error::format("file carries no labels"));
    }

    let cells = n.checked_mul(d).ok_or_else(|| Error::format("n*d overflows"))?;
    let raw = r.take(
        cells.checked_mul(4).ok_or_else(|| Error::format("size overflow"))?,
        "features",
    )?;
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let features = Array2::from_shape_vec((n, d), values).expect("shape checked");

    let mut read_labels = |what: &str| -> Result<Vec<usize>> {
        let raw = r.take(n * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect())
    };
    let labels = read_labels("labels")?;
    let true_labels = if flags & FLAG_TRUE_LABELS != 0 {
        Some(read_labels("true labels")?)
    } else {
        None
    };
    let ids = if flags & FLAG_IDS != 0 {
        let raw = r.take(n * 8, "ids")?;
        raw.chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    } else {
        (0..n as u64).collect()
    };
    if r.pos != bytes.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }
    Dataset::new(features, labels, true_labels, num_classes, ids)
}

pub fn write_binary(d: &Dataset) -> Result<Vec<u8>> {
    let n = d.len();
    let sequential = d.ids().iter().enumerate().all(|(i, &id)| id == i as u64);
    let mut flags = FLAG_LABELS;
    if d.true_labels().is_some() {
        flags |= FLAG_TRUE_LABELS;
    }
    if !sequential {
        flags |= FLAG_IDS;
    }
    let num_classes = u32::try_from(d.num_classes()).map_err(|_| Error::arg("class count exceeds u32"))?;

    let mut out = Vec::with_capacity(HEADER_LEN + n * d.dim() * 4 + n * 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d.dim() as u64).to_le_bytes());
    out.extend_from_slice(&num_classes.to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    for &v in d.features().iter() {
        let single = v as f32;
        if !single.is_finite() {
            return Err(Error::arg(format!("feature value {v} does not fit in f32")));
        }
        out.extend_from_slice(&single.to_le_bytes());
    }
    for &y in d.labels() {
        out.extend_from_slice(&(y as u32).to_le_bytes());
    }
    if let Some(truth) = d.true_labels() {
        for &y in truth {
            out.extend_from_slice(&(y as u32).to_le_bytes());
        }
    }
    if !sequential {
        for &id in d.ids() {
            out.extend_from_slice(&id.to_le_bytes());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(n: u64, d: u64, classes: u32, flags: u32) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&n.to_le_bytes());
        b.extend_from_slice(&d.to_le_bytes());
        b.extend_from_slice(&classes.to_le_bytes());
        b.extend_from_slice(&flags.to_le_bytes());
        b
    }

    #[test]
    fn reads_rows_in_file_order() {
        let mut b = header(2, 3, 2, FLAG_LABELS);
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&0u32.to_le_bytes());
        b.extend_from_slice(&1u32.to_le_bytes());
        let d = read_binary(&b).unwrap();
        assert_eq!(d.features().shape(), &[2, 3]);
        assert_eq!(d.row(0).to_vec(), vec![1.0, 2.0, 3.0]);
        assert_eq!(d.row(1).to_vec(), vec![4.0, 5.0, 6.0]);
        assert_eq!(d.labels(), &[0, 1]);
        assert_eq!(write_binary(&d).unwrap(), b);
    }

    #[test]
    fn bad_magic() {
        let mut b = header(0, 0, 2, FLAG_LABELS);
        b[0] = b'X';
        assert!(matches!(read_binary(&b), Err(Error::Format(_))));
    }

    #[test]
    fn truncated() {
        let b = header(2, 3, 2, FLAG_LABELS);
        assert!(matches!(read_binary(&b), Err(Error::Format(_))));
    }

    #[test]
    fn nan_is_validation_error() {
        let mut b = header(1, 1, 2, FLAG_LABELS);
        b.extend_from_slice(&f32::NAN.to_le_bytes());
        b.extend_from_slice(&0u32.to_le_bytes());
        assert!(matches!(read_binary(&b), Err(Error::Validation(_))));
    }

    #[test]
    fn label_out_of_range_is_validation_error() {
        let mut b = header(1, 1, 2, FLAG_LABELS);
        b.extend_from_slice(&0.5f32.to_le_bytes());
        b.extend_from_slice(&2u32.to_le_bytes());
        assert!(matches!(read_binary(&b), Err(Error::Validation(_))));
    }

    proptest! {
        #[test]
        fn byte_exact_round_trip(
            n in 0usize..12,
            d in 0usize..5,
            classes in 1u32..6,
            with_truth in any::<bool>(),
            with_ids in any::<bool>(),
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = crate::rng::stream(seed, crate::rng::Stream::Synth, 0);
            let mut flags = FLAG_LABELS;
            if with_truth { flags |= FLAG_TRUE_LABELS; }
            // Sequential ids are never written explicitly.
            let with_ids = with_ids && n > 0;
            if with_ids { flags |= FLAG_IDS; }
            let mut b = header(n as u64, d as u64, classes, flags);
            for _ in 0..n * d {
                let v: f32 = rng.random_range(-1e3..1e3);
                b.extend_from_slice(&v.to_le_bytes());
            }
            let label_count = if with_truth { 2 * n } else { n };
            for _ in 0..label_count {
                b.extend_from_slice(&rng.random_range(0..classes).to_le_bytes());
            }
            if with_ids {
                for i in 0..n as u64 {
                    b.extend_from_slice(&(1000 + 3 * i).to_le_bytes());
                }
            }
            let ds = read_binary(&b).unwrap();
            prop_assert_eq!(write_binary(&ds).unwrap(), b);
        }
    }
}
