//! Named-tensor archive ("NTAR", version 1).
//!
//! ```text
//! "NTAR" | u32 version | u32 count
//! count × ( u16 name_len | name (UTF-8) | u8 dtype (0 = f32, 1 = f64)
//!           | u8 rank | u64 dims[rank] | data, little-endian )
//! u32 CRC-32 (IEEE) of every byte after the magic
//! ```
//!
//! All integers are little-endian. Reading validates the whole buffer
//! before anything is returned, so a damaged file never yields a partial
//! archive.

use std::fmt;
use std::fs;
use std::path::Path;

use eegvit_tensor::{DType, Element, Tensor};
use indexmap::IndexMap;

use crate::codec::{write_atomic, Reader, Short};
use crate::error::Result;

pub const MAGIC: &[u8; 4] = b"NTAR";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointError {
    BadMagic,
    UnsupportedVersion(u32),
    /// The buffer ended while `needed` more bytes were expected at `offset`.
    Truncated { offset: usize, needed: usize },
    CrcMismatch { stored: u32, computed: u32 },
    BadDtype { name: String, code: u8 },
    BadName { offset: usize },
    DuplicateName(String),
    BadShape { name: String, detail: String },
    TrailingBytes(usize),
    UnknownNames(Vec<String>),
    MissingNames(Vec<String>),
    ShapeMismatch(Vec<String>),
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BadMagic => write!(f, "not an NTAR file (bad magic)"),
            Self::UnsupportedVersion(v) => write!(f, "unsupported NTAR version {v}"),
            Self::Truncated { offset, needed } => {
                write!(f, "truncated: {needed} more bytes expected at offset {offset}")
            }
            Self::CrcMismatch { stored, computed } => {
                write!(f, "CRC mismatch: stored {stored:08x}, computed {computed:08x}")
            }
            Self::BadDtype { name, code } => write!(f, "tensor '{name}': unknown dtype code {code}"),
            Self::BadName { offset } => write!(f, "tensor name at offset {offset} is not UTF-8"),
            Self::DuplicateName(n) => write!(f, "duplicate tensor name '{n}'"),
            Self::BadShape { name, detail } => write!(f, "tensor '{name}': {detail}"),
            Self::TrailingBytes(n) => write!(f, "{n} unexpected bytes before the checksum"),
            Self::UnknownNames(n) => write!(f, "unknown tensor names: {}", n.join(", ")),
            Self::MissingNames(n) => write!(f, "missing tensor names: {}", n.join(", ")),
            Self::ShapeMismatch(n) => write!(f, "shape mismatch for: {}", n.join(", ")),
        }
    }
}

impl std::error::Error for CheckpointError {}

impl From<Short> for CheckpointError {
    fn from(s: Short) -> Self {
        Self::Truncated {
            offset: s.offset,
            needed: s.needed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StoredTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl StoredTensor {
    pub fn shape(&self) -> &[usize] {
        match self {
            Self::F32(t) => t.shape(),
            Self::F64(t) => t.shape(),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            Self::F32(_) => DType::F32,
            Self::F64(_) => DType::F64,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape().iter().product()
    }

    /// Converts to `T`; exact when the stored dtype is `T`.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        match self {
            Self::F32(t) => t.cast(),
            Self::F64(t) => t.cast(),
        }
    }

    fn write_data(&self, out: &mut Vec<u8>) {
        match self {
            Self::F32(t) => f32::write_le(t.data(), out),
            Self::F64(t) => f64::write_le(t.data(), out),
        }
    }
}

pub trait IntoStored {
    fn into_stored(self) -> StoredTensor;
}

impl IntoStored for Tensor<f32> {
    fn into_stored(self) -> StoredTensor {
        StoredTensor::F32(self.with_requires_grad(false))
    }
}

impl IntoStored for Tensor<f64> {
    fn into_stored(self) -> StoredTensor {
        StoredTensor::F64(self.with_requires_grad(false))
    }
}

/// Ordered map from names to tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    tensors: IndexMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: impl IntoStored) {
        self.tensors.insert(name.into(), t.into_stored());
    }

    pub fn get(&self, name: &str) -> Option<&StoredTensor> {
        self.tensors.get(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &StoredTensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.values().map(StoredTensor::numel).sum()
    }

    /// Keeps only tensors whose name starts with `prefix`.
    pub fn retain_prefix(&mut self, prefix: &str) {
        self.tensors.retain(|k, _| k.starts_with(prefix));
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dtype().code());
            out.push(t.shape().len() as u8);
            for d in t.shape() {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            t.write_data(&mut out);
        }
        let crc = crc32fast::hash(&out[4..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut r = Reader::at(bytes, 4);
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let count = r.u32()? as usize;
        let mut tensors = IndexMap::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let at = r.pos();
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CheckpointError::BadName { offset: at })?
                .to_string();
            let code = r.u8()?;
            let dtype = DType::from_code(code).ok_or_else(|| CheckpointError::BadDtype {
                name: name.clone(),
                code,
            })?;
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let bad_shape = |detail: &str| CheckpointError::BadShape {
                name: name.clone(),
                detail: detail.into(),
            };
            if shape.contains(&0) {
                return Err(bad_shape("zero-length axis"));
            }
            let nbytes = shape
                .iter()
                .try_fold(dtype.size_bytes(), |acc, d| acc.checked_mul(*d))
                .ok_or_else(|| bad_shape("size overflows"))?;
            let raw = r.take(nbytes)?;
            let stored = match dtype {
                DType::F32 => StoredTensor::F32(
                    Tensor::from_vec(shape, f32::read_le(raw)).map_err(|e| bad_shape(&e.to_string()))?,
                ),
                DType::F64 => StoredTensor::F64(
                    Tensor::from_vec(shape, f64::read_le(raw)).map_err(|e| bad_shape(&e.to_string()))?,
                ),
            };
            if tensors.insert(name.clone(), stored).is_some() {
                return Err(CheckpointError::DuplicateName(name));
            }
        }
        let body_end = r.pos();
        let stored = r.u32()?;
        if r.remaining() != 0 {
            return Err(CheckpointError::TrailingBytes(r.remaining()));
        }
        let computed = crc32fast::hash(&bytes[4..body_end]);
        if stored != computed {
            return Err(CheckpointError::CrcMismatch { stored, computed });
        }
        Ok(Self { tensors })
    }

    /// Writes through a temporary file and a rename, so readers never see
    /// a half-written archive.
    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(write_atomic(path, &self.to_bytes())?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new();
        c.insert("a.weight", Tensor::from_fn(vec![2, 3], |i| i as f32 * 0.5 - 1.0));
        c.insert("b", Tensor::from_vec(vec![1], vec![f64::MIN_POSITIVE]).unwrap());
        c.insert("s", Tensor::scalar(-0.0f32));
        c
    }

    #[test]
    fn byte_layout_and_size() {
        let c = sample();
        let b = c.to_bytes();
        // header 12, then per tensor 2+name+1+1+8·rank+data, then crc 4
        let expected = 12 + (2 + 8 + 2 + 16 + 24) + (2 + 1 + 2 + 8 + 8) + (2 + 1 + 2 + 4) + 4;
        assert_eq!(b.len(), expected);
        assert_eq!(&b[..4], b"NTAR");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 3);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), c.to_bytes());
        match back.get("s").unwrap() {
            StoredTensor::F32(t) => assert_eq!(t.data()[0].to_bits(), (-0.0f32).to_bits()),
            _ => panic!("dtype changed"),
        }
    }

    #[test]
    fn corruption_is_typed() {
        let b = sample().to_bytes();
        let mut bad = b.clone();
        bad[0] = b'X';
        assert_eq!(Checkpoint::from_bytes(&bad), Err(CheckpointError::BadMagic));

        for cut in [5, 13, 30, b.len() - 5, b.len() - 1] {
            assert!(matches!(
                Checkpoint::from_bytes(&b[..cut]),
                Err(CheckpointError::Truncated { .. })
            ));
        }

        let mut flipped = b.clone();
        let n = flipped.len();
        flipped[n - 6] ^= 0x40; // inside the last tensor's data
        assert!(matches!(
            Checkpoint::from_bytes(&flipped),
            Err(CheckpointError::CrcMismatch { .. })
        ));

        // first name length blown up past the end of the buffer
        let mut long = b.clone();
        long[12] = 0xff;
        long[13] = 0xff;
        assert!(matches!(
            Checkpoint::from_bytes(&long),
            Err(CheckpointError::Truncated { .. })
        ));
    }
}
