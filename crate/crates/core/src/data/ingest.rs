//! Converter for matrices exported from an external pipeline.
//!
//! Each file holds one matrix: `u32 rank`, `u64 dims[rank]`, then the
//! values as little-endian `f32`, row-major. The signal file is
//! `[N, channels, T]`; the label file is `[N, 3]` with rows
//! `(subject_id, x_mm, y_mm)`. Any `T` is accepted.

use std::fs;
use std::path::Path;

use super::{DataError, Dataset, Sample, EEG_CHANNELS};
use crate::codec::{write_atomic, Reader};
use crate::error::Result;

fn parse_matrix(bytes: &[u8], what: &str) -> Result<(Vec<usize>, Vec<f32>), DataError> {
    let mut r = Reader::at(bytes, 0);
    let rank = r.u32()? as usize;
    if rank > 8 {
        return Err(DataError::Mismatch(format!("{what}: implausible rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(r.u64()? as usize);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |a, d| a.checked_mul(*d))
        .ok_or_else(|| DataError::Mismatch(format!("{what}: size overflows")))?;
    let raw = r.take(count.saturating_mul(4))?;
    if r.remaining() != 0 {
        return Err(DataError::TrailingBytes(r.remaining()));
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, data))
}

/// Writes a matrix in the converter's input layout.
pub fn write_matrix(path: &Path, dims: &[usize], data: &[f32]) -> Result<()> {
    assert_eq!(dims.iter().product::<usize>(), data.len(), "dims do not match data");
    let mut out = Vec::with_capacity(4 + 8 * dims.len() + 4 * data.len());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(write_atomic(path, &out)?)
}

pub fn ingest_matrix_export(signal_path: &Path, label_path: &Path) -> Result<Dataset> {
    ingest_with_channels(signal_path, label_path, EEG_CHANNELS)
}

pub fn ingest_with_channels(signal_path: &Path, label_path: &Path, channels: usize) -> Result<Dataset> {
    let (sdims, sig) = parse_matrix(&fs::read(signal_path)?, "signals")?;
    let (ldims, lab) = parse_matrix(&fs::read(label_path)?, "labels")?;
    let [n, c, t] = sdims[..] else {
        return Err(DataError::Mismatch(format!("signals must be [N, C, T], got {sdims:?}")).into());
    };
    if c != channels {
        return Err(DataError::ChannelCount {
            expected: channels,
            actual: c,
        }
        .into());
    }
    if ldims != [n, 3] {
        return Err(DataError::Mismatch(format!(
            "labels must be [{n}, 3] to match {n} signal rows, got {ldims:?}"
        ))
        .into());
    }
    let per = c * t;
    let mut samples = Vec::with_capacity(n);
    for row in 0..n {
        let l = &lab[row * 3..row * 3 + 3];
        if !l.iter().all(|v| v.is_finite()) {
            return Err(DataError::NonFinite { row, what: "label" }.into());
        }
        let signal = sig[row * per..(row + 1) * per].to_vec();
        if !signal.iter().all(|v| v.is_finite()) {
            return Err(DataError::NonFinite { row, what: "signal" }.into());
        }
        if l[0] < 0.0 || l[0].fract() != 0.0 || l[0] > u32::MAX as f32 {
            return Err(DataError::Mismatch(format!("row {row}: subject id {} is not a non-negative integer", l[0])).into());
        }
        samples.push(Sample {
            subject: l[0] as u32,
            label: [l[1], l[2]],
            signal,
        });
    }
    Ok(Dataset::new(c, t, samples)?)
}
