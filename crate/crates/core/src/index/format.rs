//! Binary embedding matrix file and its companion id list.
//!
//! Layout, little-endian: magic `CIRE`, `u32` version (1), `u32` d, `u64` n,
//! then `n * d` `f32` values row-major. Ids live in a separate UTF-8 file, one
//! per line, in row order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::IndexError;

pub const MATRIX_MAGIC: [u8; 4] = *b"CIRE";
const VERSION: u32 = 1;

/// A matrix as stored on disk, before any normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl RawMatrix {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IndexError + '_ {
    move |source| IndexError::Io { path: path.display().to_string(), source }
}

pub fn read_matrix(path: &Path) -> Result<RawMatrix, IndexError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_matrix_from(BufReader::new(file)).map_err(|e| match e {
        IndexError::Io { source, .. } => IndexError::Io { path: path.display().to_string(), source },
        other => other,
    })
}

pub fn read_matrix_from<R: Read>(mut r: R) -> Result<RawMatrix, IndexError> {
    let wrap = |source| IndexError::Io { path: String::new(), source };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| IndexError::Malformed("file shorter than header".into()))?;
    if magic != MATRIX_MAGIC {
        return Err(IndexError::BadMagic { expected: MATRIX_MAGIC, found: magic });
    }
    let header = (|| -> std::io::Result<(u32, u32, u64)> {
        Ok((r.read_u32::<LittleEndian>()?, r.read_u32::<LittleEndian>()?, r.read_u64::<LittleEndian>()?))
    })();
    let (version, dim, rows) = header.map_err(|_| IndexError::Malformed("truncated header".into()))?;
    if version != VERSION {
        return Err(IndexError::UnsupportedVersion(version));
    }
    let dim = dim as usize;
    let rows = usize::try_from(rows).map_err(|_| IndexError::Malformed("row count overflows".into()))?;
    let len = rows
        .checked_mul(dim)
        .ok_or_else(|| IndexError::Malformed("matrix size overflows".into()))?;
    let mut data = vec![0f32; len];
    r.read_f32_into::<LittleEndian>(&mut data).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            IndexError::Malformed(format!("expected {rows}x{dim} floats, file is truncated"))
        } else {
            wrap(e)
        }
    })?;
    let mut probe = [0u8; 1];
    if r.read(&mut probe).map_err(wrap)? != 0 {
        return Err(IndexError::Malformed("trailing bytes after matrix".into()));
    }
    Ok(RawMatrix { rows, dim, data })
}

pub fn write_matrix(path: &Path, dim: usize, data: &[f32]) -> Result<(), IndexError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_matrix_to(&mut w, dim, data).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn write_matrix_to<W: Write>(w: &mut W, dim: usize, data: &[f32]) -> std::io::Result<()> {
    assert!(data.len().checked_rem(dim) == Some(0), "data length must be a multiple of dim");
    w.write_all(&MATRIX_MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(u32::try_from(dim).expect("dimension fits in u32"))?;
    w.write_u64::<LittleEndian>((data.len() / dim) as u64)?;
    for &x in data {
        w.write_f32::<LittleEndian>(x)?;
    }
    Ok(())
}

pub fn read_ids(path: &Path) -> Result<Vec<String>, IndexError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut ids = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        let id = line.strip_suffix('\r').unwrap_or(&line);
        ids.push(id.to_owned());
    }
    Ok(ids)
}

pub fn write_ids(path: &Path, ids: &[String]) -> Result<(), IndexError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for id in ids {
        writeln!(w, "{id}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
