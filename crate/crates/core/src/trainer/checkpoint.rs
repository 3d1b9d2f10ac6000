//! Head checkpoints (`CIRW`, u32 version, u32 d_out, u32 d_in, then
//! `d_out * d_in` row-major f32, all little-endian) and loss-history CSV.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::{EpochRecord, ProjectionHead, TrainError};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CIRW";
const VERSION: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.display().to_string(), source }
}

pub fn write_checkpoint(path: &Path, head: &ProjectionHead) -> Result<(), TrainError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let dims = |n: usize| u32::try_from(n).map_err(|_| TrainError::Shape("dimension exceeds u32".into()));
    let (d_out, d_in) = (dims(head.d_out())?, dims(head.d_in())?);
    (|| -> std::io::Result<()> {
        w.write_all(&CHECKPOINT_MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u32::<LittleEndian>(d_out)?;
        w.write_u32::<LittleEndian>(d_in)?;
        for &x in head.weights.iter() {
            w.write_f32::<LittleEndian>(x as f32)?;
        }
        w.flush()
    })()
    .map_err(io_err(path))
}

pub fn read_checkpoint(path: &Path) -> Result<ProjectionHead, TrainError> {
    let mut r = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| TrainError::Malformed("file shorter than header".into()))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(TrainError::Malformed(format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&magic), String::from_utf8_lossy(&CHECKPOINT_MAGIC))));
    }
    let header = (|| -> std::io::Result<(u32, u32, u32)> {
        Ok((r.read_u32::<LittleEndian>()?, r.read_u32::<LittleEndian>()?, r.read_u32::<LittleEndian>()?))
    })()
    .map_err(|_| TrainError::Malformed("truncated header".into()))?;
    let (version, d_out, d_in) = header;
    if version != VERSION {
        return Err(TrainError::Malformed(format!("unsupported version {version}")));
    }
    let (d_out, d_in) = (d_out as usize, d_in as usize);
    let mut data = vec![0f32; d_out * d_in];
    r.read_f32_into::<LittleEndian>(&mut data).map_err(|_| TrainError::Malformed("truncated weights".into()))?;
    let weights = Array2::from_shape_vec((d_out, d_in), data.into_iter().map(f64::from).collect())
        .map_err(|e| TrainError::Malformed(e.to_string()))?;
    Ok(ProjectionHead { weights })
}

/// `epoch,lr,mean_loss` rows.
pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<(), TrainError> {
    let to_err = |e: csv::Error| TrainError::Io { path: path.display().to_string(), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    for rec in history {
        w.serialize(rec).map_err(to_err)?;
    }
    w.flush().map_err(io_err(path))
}
