//! Versioned binary dataset files.
//!
//! Layout: magic `PDS1`, then little-endian u32 count, side, frames,
//! channels, then per record a label byte, u32 image id, u32 x, u32 y,
//! and the patch values as little-endian f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{EdgeClass, LabeledPatch, Patch, PatchDataset, PatchGenError, PatchSource};

const MAGIC: &[u8; 4] = b"PDS1";

pub fn save_dataset(dataset: &PatchDataset, path: &Path) -> Result<(), PatchGenError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(dataset.len() as u32)?;
    w.write_u32::<LittleEndian>(dataset.side() as u32)?;
    w.write_u32::<LittleEndian>(dataset.frames() as u32)?;
    w.write_u32::<LittleEndian>(Patch::CHANNELS as u32)?;
    for item in dataset.patches() {
        w.write_u8(item.label.index() as u8)?;
        w.write_u32::<LittleEndian>(item.source.image_id)?;
        w.write_u32::<LittleEndian>(item.source.x)?;
        w.write_u32::<LittleEndian>(item.source.y)?;
        for &v in item.patch.values() {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<PatchDataset, PatchGenError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(PatchGenError::MalformedDataset(format!(
            "bad magic {magic:?}"
        )));
    }
    let count = r.read_u32::<LittleEndian>()? as usize;
    let side = r.read_u32::<LittleEndian>()? as usize;
    let frames = r.read_u32::<LittleEndian>()? as usize;
    let channels = r.read_u32::<LittleEndian>()? as usize;
    if channels != Patch::CHANNELS {
        return Err(PatchGenError::MalformedDataset(format!(
            "expected {} channels, file has {channels}",
            Patch::CHANNELS
        )));
    }
    if side == 0 || frames == 0 {
        return Err(PatchGenError::MalformedDataset(format!(
            "degenerate patch geometry {side}x{frames}"
        )));
    }

    let mut dataset = PatchDataset::new(side, frames);
    let (rows, cols) = dataset.patch_shape();
    let values_len = rows * cols * channels;
    for i in 0..count {
        let label_byte = r.read_u8()?;
        let label = EdgeClass::from_index(label_byte as usize).ok_or_else(|| {
            PatchGenError::MalformedDataset(format!("record {i}: label byte {label_byte}"))
        })?;
        let image_id = r.read_u32::<LittleEndian>()?;
        let x = r.read_u32::<LittleEndian>()?;
        let y = r.read_u32::<LittleEndian>()?;
        let mut values = vec![0.0f32; values_len];
        r.read_f32_into::<LittleEndian>(&mut values)?;
        dataset.push(LabeledPatch {
            patch: Patch::from_values(rows, cols, values),
            label,
            source: PatchSource { image_id, x, y },
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(PatchGenError::MalformedDataset(
            "trailing bytes after last record".into(),
        ));
    }
    Ok(dataset)
}
