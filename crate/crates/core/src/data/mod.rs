//! EEG samples with gaze labels, their file format, splitting and the
//! synthetic stand-in dataset.

mod format;
mod ingest;
mod split;
mod synthetic;

use std::collections::BTreeSet;
use std::fmt;

use eegvit_tensor::{Element, Tensor};
use sha2::{Digest, Sha256};

pub use format::{read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION, HEADER_BYTES};
pub use ingest::{ingest_matrix_export, ingest_with_channels, write_matrix};
pub use split::split_by_subject;
pub use synthetic::{generate_synthetic, grid_positions, SyntheticSpec};

/// Channel count of the recordings (128 electrodes plus reference).
pub const EEG_CHANNELS: usize = 129;

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    BadMagic,
    UnsupportedVersion(u32),
    Truncated { offset: usize, needed: usize },
    CrcMismatch { stored: u32, computed: u32 },
    TrailingBytes(usize),
    ChannelCount { expected: usize, actual: usize },
    NonFinite { row: usize, what: &'static str },
    /// The two halves of a matrix export disagree or are malformed.
    Mismatch(String),
    Split(String),
    Invalid(String),
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadMagic => write!(f, "not an EEGDS file (bad magic)"),
            Self::UnsupportedVersion(v) => write!(f, "unsupported EEGDS version {v}"),
            Self::Truncated { offset, needed } => {
                write!(f, "truncated: {needed} more bytes expected at offset {offset}")
            }
            Self::CrcMismatch { stored, computed } => {
                write!(f, "CRC mismatch: stored {stored:08x}, computed {computed:08x}")
            }
            Self::TrailingBytes(n) => write!(f, "{n} unexpected bytes before the checksum"),
            Self::ChannelCount { expected, actual } => {
                write!(f, "expected {expected} channels, found {actual}")
            }
            Self::NonFinite { row, what } => write!(f, "non-finite {what} in row {row}"),
            Self::Mismatch(m) => write!(f, "inconsistent export: {m}"),
            Self::Split(m) => write!(f, "cannot split: {m}"),
            Self::Invalid(m) => write!(f, "invalid dataset: {m}"),
        }
    }
}

impl std::error::Error for DataError {}

impl From<crate::codec::Short> for DataError {
    fn from(s: crate::codec::Short) -> Self {
        Self::Truncated {
            offset: s.offset,
            needed: s.needed,
        }
    }
}

/// One trial: a `channels × timepoints` signal (µV, row-major) and the
/// gaze position in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub subject: u32,
    pub label: [f32; 2],
    pub signal: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    channels: usize,
    timepoints: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(channels: usize, timepoints: usize, samples: Vec<Sample>) -> Result<Self, DataError> {
        if samples.is_empty() {
            return Err(DataError::Invalid("no samples".into()));
        }
        if channels == 0 || timepoints == 0 {
            return Err(DataError::Invalid("channels and timepoints must be positive".into()));
        }
        for (row, s) in samples.iter().enumerate() {
            if s.signal.len() != channels * timepoints {
                return Err(DataError::Invalid(format!(
                    "sample {row} has {} values, expected {channels}×{timepoints}",
                    s.signal.len()
                )));
            }
            if !s.label.iter().all(|v| v.is_finite()) {
                return Err(DataError::NonFinite { row, what: "label" });
            }
            if !s.signal.iter().all(|v| v.is_finite()) {
                return Err(DataError::NonFinite { row, what: "signal" });
            }
        }
        Ok(Self {
            channels,
            timepoints,
            samples,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn timepoints(&self) -> usize {
        self.timepoints
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subjects(&self) -> BTreeSet<u32> {
        self.samples.iter().map(|s| s.subject).collect()
    }

    /// Samples whose subject is in `keep`, in original order.
    pub fn filter_subjects(&self, keep: &BTreeSet<u32>) -> Result<Self, DataError> {
        let samples = self
            .samples
            .iter()
            .filter(|s| keep.contains(&s.subject))
            .cloned()
            .collect();
        Self::new(self.channels, self.timepoints, samples)
    }

    /// `[B, C, T]` signals and `[B, 2]` labels for the given sample indices.
    pub fn batch<T: Element>(&self, indices: &[usize]) -> (Tensor<T>, Tensor<T>) {
        let per = self.channels * self.timepoints;
        let mut x = Vec::with_capacity(indices.len() * per);
        let mut y = Vec::with_capacity(indices.len() * 2);
        for &i in indices {
            let s = &self.samples[i];
            x.extend(s.signal.iter().map(|v| T::lit(f64::from(*v))));
            y.extend(s.label.iter().map(|v| T::lit(f64::from(*v))));
        }
        (
            Tensor::from_vec(vec![indices.len(), self.channels, self.timepoints], x).unwrap(),
            Tensor::from_vec(vec![indices.len(), 2], y).unwrap(),
        )
    }

    pub fn labels(&self) -> Vec<[f64; 2]> {
        self.samples
            .iter()
            .map(|s| [f64::from(s.label[0]), f64::from(s.label[1])])
            .collect()
    }

    pub fn label_mean(&self) -> [f64; 2] {
        let n = self.len() as f64;
        let mut m = [0.0; 2];
        for l in self.labels() {
            m[0] += l[0] / n;
            m[1] += l[1] / n;
        }
        m
    }

    /// Hex SHA-256 of the serialized file.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(format::to_bytes(self)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let s = |subject, x: f32| Sample {
            subject,
            label: [x, -x],
            signal: vec![x; 6],
        };
        Dataset::new(2, 3, vec![s(4, 1.0), s(9, 2.0), s(4, 3.0)]).unwrap()
    }

    #[test]
    fn validation() {
        assert!(Dataset::new(2, 3, vec![]).is_err());
        let bad = Sample {
            subject: 0,
            label: [0.0, f32::NAN],
            signal: vec![0.0; 6],
        };
        assert_eq!(
            Dataset::new(2, 3, vec![bad]),
            Err(DataError::NonFinite { row: 0, what: "label" })
        );
    }

    #[test]
    fn batch_layout_and_subjects() {
        let d = tiny();
        let (x, y) = d.batch::<f32>(&[2, 0]);
        assert_eq!(x.shape(), &[2, 2, 3]);
        assert_eq!(y.data(), &[3.0, -3.0, 1.0, -1.0]);
        assert_eq!(d.subjects().into_iter().collect::<Vec<_>>(), vec![4, 9]);
        assert_eq!(d.label_mean(), [2.0, -2.0]);
        let keep = [9].into_iter().collect();
        assert_eq!(d.filter_subjects(&keep).unwrap().len(), 1);
    }
}
