//! "EEGDS" version 1.
//!
//! ```text
//! "EEGD" | u32 version | u32 n_samples | u16 channels | u32 timepoints | u8 label_dim (= 2)
//! n_samples × ( u32 subject | f32 x_mm | f32 y_mm | f32 signal[channels · timepoints] )
//! u32 CRC-32 (IEEE) of every byte after the magic
//! ```
//!
//! Little-endian throughout; the signal is channel-major. The file size is
//! `19 + n · (12 + 4 · channels · timepoints) + 4`.

use std::fs;
use std::path::Path;

use super::{DataError, Dataset, Sample};
use crate::codec::{write_atomic, Reader};
use crate::error::Result;

pub const DATASET_MAGIC: &[u8; 4] = b"EEGD";
pub const DATASET_VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 19;
const LABEL_DIM: u8 = 2;

pub(super) fn to_bytes(ds: &Dataset) -> Vec<u8> {
    let per = ds.channels * ds.timepoints;
    let mut out = Vec::with_capacity(HEADER_BYTES + ds.len() * (12 + 4 * per) + 4);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    out.extend_from_slice(&(ds.channels as u16).to_le_bytes());
    out.extend_from_slice(&(ds.timepoints as u32).to_le_bytes());
    out.push(LABEL_DIM);
    for s in &ds.samples {
        out.extend_from_slice(&s.subject.to_le_bytes());
        for v in s.label.iter().chain(&s.signal) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[4..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub(super) fn from_bytes(bytes: &[u8]) -> Result<Dataset, DataError> {
    if bytes.len() < 4 || &bytes[..4] != DATASET_MAGIC {
        return Err(DataError::BadMagic);
    }
    let mut r = Reader::at(bytes, 4);
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(DataError::UnsupportedVersion(version));
    }
    let n = r.u32()? as usize;
    let channels = r.u16()? as usize;
    let timepoints = r.u32()? as usize;
    let label_dim = r.u8()?;
    if label_dim != LABEL_DIM {
        return Err(DataError::Invalid(format!("label_dim {label_dim}, expected 2")));
    }
    let per = channels
        .checked_mul(timepoints)
        .ok_or_else(|| DataError::Invalid("signal size overflows".into()))?;
    let floats = |raw: &[u8]| -> Vec<f32> {
        raw.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let mut samples = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let subject = r.u32()?;
        let label = floats(r.take(8)?);
        let signal = floats(r.take(per.saturating_mul(4))?);
        samples.push(Sample {
            subject,
            label: [label[0], label[1]],
            signal,
        });
    }
    let body_end = r.pos();
    let stored = r.u32()?;
    if r.remaining() != 0 {
        return Err(DataError::TrailingBytes(r.remaining()));
    }
    let computed = crc32fast::hash(&bytes[4..body_end]);
    if stored != computed {
        return Err(DataError::CrcMismatch { stored, computed });
    }
    Dataset::new(channels, timepoints, samples)
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    Ok(write_atomic(path, &to_bytes(ds))?)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    Ok(from_bytes(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> Dataset {
        let samples = (0..3)
            .map(|i| Sample {
                subject: 10 + i,
                label: [i as f32 * 100.5, -0.0],
                signal: (0..4 * 5).map(|j| (i * 100 + j) as f32 * 0.25).collect(),
            })
            .collect();
        Dataset::new(4, 5, samples).unwrap()
    }

    #[test]
    fn size_matches_closed_form() {
        let b = to_bytes(&three());
        // 19-byte header, 3 × (4 + 8 + 4·4·5), 4-byte CRC
        assert_eq!(b.len(), 19 + 3 * (4 + 8 + 80) + 4);
        assert_eq!(b.len(), 299);
    }

    #[test]
    fn round_trip_bitwise() {
        let d = three();
        let back = from_bytes(&to_bytes(&d)).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.samples[0].label[1].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn corruption_kinds() {
        let b = to_bytes(&three());
        let mut m = b.clone();
        m[1] = b'X';
        assert_eq!(from_bytes(&m), Err(DataError::BadMagic));
        assert!(matches!(
            from_bytes(&b[..19 + 92 + 40]),
            Err(DataError::Truncated { .. })
        ));
        let mut c = b.clone();
        c[40] ^= 1;
        assert!(matches!(from_bytes(&c), Err(DataError::CrcMismatch { .. })));
    }
}
