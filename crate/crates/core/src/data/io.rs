//! Binary tensor files and named-tensor archives.
//!
//! Tensor file: `"FADT"`, version `u16`, dtype `u8` (0 = f32, 1 = f64,
//! 2 = u8 bytes), rank `u8`, extents as `u64`, then the little-endian payload.
//! Archive: `"FADA"`, entry count `u32`, then per entry the name length
//! `u32`, name bytes and absolute payload offset `u64`, followed by the
//! tensor-file payloads. All integers are little-endian.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

pub const TENSOR_MAGIC: &[u8; 4] = b"FADT";
pub const ARCHIVE_MAGIC: &[u8; 4] = b"FADA";
pub const FORMAT_VERSION: u16 = 1;
const BYTES_CODE: u8 = 2;

/// A stored entry: a float tensor of either width, or raw bytes.
#[derive(Clone, Debug, PartialEq)]
pub enum Stored {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
    Bytes(Vec<u8>),
}

impl Stored {
    fn dtype_name(&self) -> &'static str {
        match self {
            Stored::F32(_) => "f32",
            Stored::F64(_) => "f64",
            Stored::Bytes(_) => "u8",
        }
    }

    /// Float tensor of type `T`; refuses a dtype mismatch rather than converting.
    pub fn into_tensor<T: Scalar>(self) -> Result<Tensor<T>> {
        let name = self.dtype_name();
        let any: Box<dyn std::any::Any> = match self {
            Stored::F32(t) => Box::new(t),
            Stored::F64(t) => Box::new(t),
            Stored::Bytes(_) => Box::new(()),
        };
        any.downcast::<Tensor<T>>().map(|b| *b).map_err(|_| {
            Error::Format(format!("stored dtype {name} does not match requested {:?}", T::DTYPE))
        })
    }

    pub fn into_bytes(self) -> Result<Vec<u8>> {
        match self {
            Stored::Bytes(b) => Ok(b),
            other => Err(Error::Format(format!(
                "expected a byte entry, found {}",
                other.dtype_name()
            ))),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            Stored::F32(t) => encode_tensor(t),
            Stored::F64(t) => encode_tensor(t),
            Stored::Bytes(b) => {
                let mut out = header(BYTES_CODE, &[b.len()]);
                out.extend_from_slice(b);
                out
            }
        }
    }
}

impl From<Tensor<f32>> for Stored {
    fn from(t: Tensor<f32>) -> Self {
        Stored::F32(t)
    }
}

impl From<Tensor<f64>> for Stored {
    fn from(t: Tensor<f64>) -> Self {
        Stored::F64(t)
    }
}

fn header(code: u8, shape: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * shape.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(code);
    out.push(shape.len() as u8);
    for &e in shape {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    out
}

pub fn encode_tensor<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = header(T::DTYPE.code(), t.shape());
    out.extend_from_slice(&t.to_le_bytes());
    out
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or(Error::Length {
        expected: pos.saturating_add(n),
        found: bytes.len(),
    })?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

/// Decodes one tensor file starting at `bytes[0]`; returns the entry and
/// the number of bytes consumed.
pub fn decode_stored(bytes: &[u8]) -> Result<(Stored, usize)> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4)? != TENSOR_MAGIC {
        return Err(Error::Format("bad tensor magic (expected FADT)".into()));
    }
    let version = u16::from_le_bytes(take(bytes, &mut pos, 2)?.try_into().expect("2 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported tensor file version {version}")));
    }
    let code = take(bytes, &mut pos, 1)?[0];
    let rank = take(bytes, &mut pos, 1)?[0] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let e = u64::from_le_bytes(take(bytes, &mut pos, 8)?.try_into().expect("8 bytes"));
        shape.push(usize::try_from(e).map_err(|_| Error::Format(format!("extent {e} too large")))?);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::Format(format!("extents {shape:?} overflow")))?;
    let width = match code {
        0 => 4,
        1 => 8,
        BYTES_CODE => 1,
        other => return Err(Error::Format(format!("unknown dtype code {other}"))),
    };
    let payload = take(bytes, &mut pos, count.checked_mul(width).ok_or(Error::Format("payload size overflows".into()))?)?;
    let stored = match code {
        0 => Stored::F32(Tensor::new(shape, payload.chunks_exact(4).map(f32::read_le).collect())?),
        1 => Stored::F64(Tensor::new(shape, payload.chunks_exact(8).map(f64::read_le).collect())?),
        _ => {
            if rank != 1 {
                return Err(Error::Format(format!("byte entry must be rank 1, got rank {rank}")));
            }
            Stored::Bytes(payload.to_vec())
        }
    };
    Ok((stored, pos))
}

pub fn decode_tensor<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let (stored, used) = decode_stored(bytes)?;
    if used != bytes.len() {
        return Err(Error::Length {
            expected: used,
            found: bytes.len(),
        });
    }
    stored.into_tensor()
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary sibling and renames, so readers never see a partial file.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".part");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save_tensor<T: Scalar>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    write_file(path.as_ref(), &encode_tensor(t))
}

pub fn load_tensor<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    decode_tensor(&read_file(path)?).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Ordered collection of uniquely named entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    entries: Vec<(String, Stored)>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: impl Into<Stored>) {
        self.entries.push((name.into(), value.into()));
    }

    pub fn push_bytes(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.entries.push((name.into(), Stored::Bytes(bytes)));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&Stored> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn take(&mut self, name: &str) -> Option<Stored> {
        let i = self.entries.iter().position(|(n, _)| n == name)?;
        Some(self.entries.remove(i).1)
    }

    pub fn tensor<T: Scalar>(&self, name: &str) -> Result<Tensor<T>> {
        self.get(name)
            .cloned()
            .ok_or_else(|| Error::Format(format!("archive has no entry {name:?}")))?
            .into_tensor()
    }

    pub fn bytes(&self, name: &str) -> Result<Vec<u8>> {
        self.get(name)
            .cloned()
            .ok_or_else(|| Error::Format(format!("archive has no entry {name:?}")))?
            .into_bytes()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut seen = BTreeSet::new();
        for (name, _) in &self.entries {
            if !seen.insert(name.as_str()) {
                return Err(Error::Format(format!("duplicate archive entry {name:?}")));
            }
        }
        let payloads: Vec<Vec<u8>> = self.entries.iter().map(|(_, v)| v.encode()).collect();
        let table: usize = self.entries.iter().map(|(n, _)| 4 + n.len() + 8).sum();
        let mut offset = (4 + 4 + table) as u64;
        let mut out = Vec::new();
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for ((name, _), p) in self.entries.iter().zip(&payloads) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            offset += p.len() as u64;
        }
        for p in payloads {
            out.extend_from_slice(&p);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        if take(bytes, &mut pos, 4)? != ARCHIVE_MAGIC {
            return Err(Error::Format("bad archive magic (expected FADA)".into()));
        }
        let count = u32::from_le_bytes(take(bytes, &mut pos, 4)?.try_into().expect("4 bytes")) as usize;
        let mut table = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let n = u32::from_le_bytes(take(bytes, &mut pos, 4)?.try_into().expect("4 bytes")) as usize;
            let name = std::str::from_utf8(take(bytes, &mut pos, n)?)
                .map_err(|_| Error::Format("archive entry name is not UTF-8".into()))?
                .to_string();
            let off = u64::from_le_bytes(take(bytes, &mut pos, 8)?.try_into().expect("8 bytes"));
            table.push((name, off as usize));
        }
        let mut spans = Vec::with_capacity(count);
        let mut entries = Vec::with_capacity(count);
        let mut seen = BTreeSet::new();
        for (name, off) in table {
            if !seen.insert(name.clone()) {
                return Err(Error::Format(format!("duplicate archive entry {name:?}")));
            }
            if off < pos || off > bytes.len() {
                return Err(Error::Format(format!("entry {name:?} offset {off} outside payload area")));
            }
            let (value, used) = decode_stored(&bytes[off..])?;
            spans.push((off, off + used));
            entries.push((name, value));
        }
        spans.sort_unstable();
        if spans.windows(2).any(|w| w[0].1 > w[1].0) {
            return Err(Error::Format("archive entries overlap".into()));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.encode()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&read_file(path)?).map_err(|e| with_path(e, path))
    }
}
