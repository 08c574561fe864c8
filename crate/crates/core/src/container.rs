//! Versioned binary container for named tensors.
//!
//! Layout: 8-byte magic `LORACMP\0`, `u32` format version, `u64` header
//! length, a JSON header (`kind`, free-form `meta`, tensor names and
//! shapes), then every tensor's data as little-endian `f64` in header order.
//! All integers are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Tensor;

pub const MAGIC: &[u8; 8] = b"LORACMP\0";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Container {
    pub fn new(kind: &str, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.to_string(),
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: &Tensor) {
        self.tensors.push((name.into(), t.clone()));
    }

    /// Removes and returns the named tensor.
    pub fn take(&mut self, name: &str) -> Result<Tensor> {
        let pos = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Parse(format!("{} file has no tensor {name:?}", self.kind)))?;
        Ok(self.tensors.remove(pos).1)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, t)| Entry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let numel: usize = self.tensors.iter().map(|(_, t)| t.numel()).sum();
        let mut out = Vec::with_capacity(20 + header.len() + numel * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = || Error::Parse("file is truncated".into());
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(Error::Parse("not a loracomp tensor file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes.get(8..12).ok_or_else(truncated)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let header_len =
            u64::from_le_bytes(bytes.get(12..20).ok_or_else(truncated)?.try_into().expect("8 bytes")) as usize;
        let header_end = 20usize.checked_add(header_len).ok_or_else(truncated)?;
        let header: Header =
            serde_json::from_slice(bytes.get(20..header_end).ok_or_else(truncated)?)
                .map_err(|e| Error::Parse(format!("bad header: {e}")))?;
        let mut offset = header_end;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let numel = entry
                .shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Parse(format!("tensor {} has an absurd shape", entry.name)))?;
            let end = numel
                .checked_mul(8)
                .and_then(|n| offset.checked_add(n))
                .ok_or_else(truncated)?;
            let raw = bytes.get(offset..end).ok_or_else(truncated)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((entry.name, Tensor::new(entry.shape, data)?));
            offset = end;
        }
        if offset != bytes.len() {
            return Err(Error::Parse(format!(
                "{} trailing bytes after tensor data",
                bytes.len() - offset
            )));
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks the `kind` field.
    pub fn load_kind(path: impl AsRef<Path>, kind: &str) -> Result<Self> {
        let c = Self::load(path)?;
        if c.kind != kind {
            return Err(Error::Parse(format!("expected a {kind} file, found {}", c.kind)));
        }
        Ok(c)
    }
}
