//! Binary weight archives.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "MSSW" version count
//! count × { name_len name[name_len] n c h w f32[n·c·h·w] }
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mssnet_core::autodiff::ParamStore;
use mssnet_core::{Real, Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"MSSW";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a weight archive (bad magic)")]
    BadMagic,
    #[error("unsupported archive version {0}")]
    UnsupportedVersion(u32),
    #[error("archive truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} unexpected bytes after the last entry")]
    TrailingBytes(usize),
    #[error("entry name is not UTF-8")]
    BadName,
    #[error("duplicate entry `{0}`")]
    Duplicate(String),
    #[error("archive has no entry for `{0}`")]
    Missing(String),
    #[error("archive entry `{0}` has no matching variable")]
    Unexpected(String),
    #[error("`{name}`: archive shape {found}, model shape {expected}")]
    ShapeMismatch { name: String, expected: Shape, found: Shape },
}

impl ArchiveError {
    pub fn is_io(&self) -> bool {
        matches!(self, ArchiveError::Io { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub shape: Shape,
    pub data: Vec<f32>,
}

/// A decoded archive, independent of any model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightArchive {
    pub entries: Vec<Entry>,
}

impl WeightArchive {
    /// Snapshot of every variable, in store order.
    pub fn from_store<T: Real>(store: &ParamStore<T>) -> Self {
        let entries = store
            .iter()
            .map(|(_, v)| Entry {
                name: v.name().to_string(),
                shape: v.value().shape(),
                data: v.value().data().iter().map(|&x| Real::to_f64(x) as f32).collect(),
            })
            .collect();
        WeightArchive { entries }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            for d in [e.shape.n, e.shape.c, e.shape.h, e.shape.w] {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ArchiveError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(ArchiveError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(ArchiveError::UnsupportedVersion(version));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| ArchiveError::BadName)?.to_string();
            let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|d| d as usize);
            let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
            let payload = r.take(shape.numel().checked_mul(4).ok_or(ArchiveError::Truncated(r.pos))?)?;
            let data = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            entries.push(Entry { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(ArchiveError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(WeightArchive { entries })
    }

    /// Copies every entry into `store`. Names and shapes are matched one to
    /// one before anything is written.
    pub fn apply<T: Real>(&self, store: &mut ParamStore<T>) -> Result<(), ArchiveError> {
        let mut by_name = BTreeMap::new();
        for e in &self.entries {
            if by_name.insert(e.name.as_str(), e).is_some() {
                return Err(ArchiveError::Duplicate(e.name.clone()));
            }
        }
        let mut plan = Vec::with_capacity(store.len());
        for (id, v) in store.iter() {
            let e = by_name
                .remove(v.name())
                .ok_or_else(|| ArchiveError::Missing(v.name().to_string()))?;
            if e.shape != v.value().shape() {
                return Err(ArchiveError::ShapeMismatch {
                    name: e.name.clone(),
                    expected: v.value().shape(),
                    found: e.shape,
                });
            }
            plan.push((id, e));
        }
        if let Some(name) = by_name.into_keys().next() {
            return Err(ArchiveError::Unexpected(name.to_string()));
        }
        for (id, e) in plan {
            let t = Tensor::new(e.shape, e.data.iter().map(|&x| T::from_f64(x as f64)).collect())
                .expect("shape checked against the payload length");
            *store.value_mut(id) = t;
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArchiveError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(ArchiveError::Truncated(self.bytes.len()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ArchiveError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn save_weights<T: Real>(store: &ParamStore<T>, path: &Path) -> Result<(), ArchiveError> {
    let io = |source| ArchiveError::Io {
        path: path.into(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, WeightArchive::from_store(store).encode()).map_err(io)
}

pub fn load_weights<T: Real>(path: &Path, store: &mut ParamStore<T>) -> Result<(), ArchiveError> {
    let bytes = std::fs::read(path).map_err(|source| ArchiveError::Io {
        path: path.into(),
        source,
    })?;
    WeightArchive::decode(&bytes)?.apply(store)
}
