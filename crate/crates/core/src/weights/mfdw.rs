//! MFDW: a minimal little-endian f32 tensor container.
//!
//! ```text
//! "MFDW"  u32 version = 1  u32 tensor_count
//! directory, per tensor:
//!     u16 name_len, name (UTF-8), u8 dtype (0 = f32), u8 ndim,
//!     ndim x u32 dims, u64 offset (bytes, relative to blob start)
//! zero padding up to a 16-byte boundary (only when tensor_count > 0)
//! blob: packed payloads in directory order
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::{WeightStore, WeightTensor};

pub const MAGIC: &[u8; 4] = b"MFDW";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;
const BLOB_ALIGN: usize = 16;

#[derive(Debug, Error)]
pub enum MfdwError {
    #[error("bad magic {0:?}, expected \"MFDW\"")]
    BadMagic([u8; 4]),
    #[error("unsupported MFDW version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("tensor `{name}` overlaps the previous tensor or is out of order (offset {offset}, previous end {prev_end})")]
    OverlappingExtents {
        name: String,
        offset: u64,
        prev_end: u64,
    },
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("tensor `{name}` uses unsupported dtype {dtype}")]
    UnsupportedDtype { name: String, dtype: u8 },
    #[error("tensor name is not valid UTF-8")]
    InvalidName,
    #[error("cannot encode tensor `{name}`: {reason}")]
    Unencodable { name: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn align_up(v: usize, a: usize) -> usize {
    v.div_ceil(a) * a
}

pub fn to_bytes(w: &WeightStore) -> Result<Vec<u8>, MfdwError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(w.len() as u32).to_le_bytes());

    let mut offset = 0u64;
    for (name, t) in w.iter() {
        let bad = |reason: &str| MfdwError::Unencodable {
            name: name.clone(),
            reason: reason.to_string(),
        };
        if name.len() > u16::MAX as usize {
            return Err(bad("name longer than 65535 bytes"));
        }
        if t.dims.len() > u8::MAX as usize {
            return Err(bad("more than 255 dimensions"));
        }
        if t.data.is_empty() || t.dims.contains(&0) {
            return Err(bad("empty tensor"));
        }
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F32);
        out.push(t.dims.len() as u8);
        for &d in &t.dims {
            let d = u32::try_from(d).map_err(|_| bad("dimension exceeds u32"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += 4 * t.data.len() as u64;
    }
    if !w.is_empty() {
        out.resize(align_up(out.len(), BLOB_ALIGN), 0);
    }
    for (_, t) in w.iter() {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], MfdwError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| MfdwError::Truncated(format!("{what} at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, MfdwError> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16, MfdwError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &str) -> Result<u32, MfdwError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64, MfdwError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<WeightStore, MfdwError> {
    let mut cur = Cursor { buf, pos: 0 };
    let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(MfdwError::BadMagic(magic));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(MfdwError::UnsupportedVersion(version));
    }
    let count = cur.u32("tensor count")? as usize;

    struct Entry {
        name: String,
        dims: Vec<usize>,
        offset: u64,
        bytes: u64,
    }
    let mut entries: Vec<Entry> = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = cur.u16("name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "name")?)
            .map_err(|_| MfdwError::InvalidName)?
            .to_string();
        let dtype = cur.u8("dtype")?;
        if dtype != DTYPE_F32 {
            return Err(MfdwError::UnsupportedDtype { name, dtype });
        }
        let ndim = cur.u8("ndim")? as usize;
        let mut dims = Vec::with_capacity(ndim);
        let mut numel = 1u64;
        for _ in 0..ndim {
            let d = cur.u32("dims")?;
            numel = numel.saturating_mul(d as u64);
            dims.push(d as usize);
        }
        let offset = cur.u64("offset")?;
        entries.push(Entry {
            name,
            dims,
            offset,
            bytes: numel.saturating_mul(4),
        });
    }

    let blob_start = if count > 0 {
        align_up(cur.pos, BLOB_ALIGN)
    } else {
        cur.pos
    };
    if blob_start > buf.len() {
        return Err(MfdwError::Truncated("blob alignment padding".into()));
    }
    let blob = &buf[blob_start..];

    let mut store = WeightStore::new();
    let mut prev_end = 0u64;
    for (i, e) in entries.into_iter().enumerate() {
        if i > 0 && e.offset < prev_end {
            return Err(MfdwError::OverlappingExtents {
                name: e.name,
                offset: e.offset,
                prev_end,
            });
        }
        let end = e.offset.saturating_add(e.bytes);
        if end > blob.len() as u64 {
            return Err(MfdwError::Truncated(format!(
                "tensor `{}` extends to blob byte {end}, blob has {}",
                e.name,
                blob.len()
            )));
        }
        let payload = &blob[e.offset as usize..end as usize];
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if store.contains(&e.name) {
            return Err(MfdwError::DuplicateName(e.name));
        }
        store.insert(e.name, WeightTensor { dims: e.dims, data });
        prev_end = end;
    }
    Ok(store)
}

/// Writes atomically: the file appears only once fully written.
pub fn save(w: &WeightStore, path: impl AsRef<Path>) -> Result<(), MfdwError> {
    let bytes = to_bytes(w)?;
    write_atomic(path.as_ref(), &bytes)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<WeightStore, MfdwError> {
    from_bytes(&fs::read(path)?)
}

/// Writes to a sibling temp file then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res
}
