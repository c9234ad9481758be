//! Middlebury `.flo` reading and writing.
//!
//! Layout: the float 202021.25 (bytes "PIEH"), i32 width, i32 height, then
//! `height * width` interleaved `(u, v)` f32 pairs in row-major order, all little-endian.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{FlowField, FlowSequence};
use crate::error::{Error, Result};

pub const FLO_MAGIC: f32 = 202021.25;

fn format(field: &'static str, detail: impl Into<String>) -> Error {
    Error::Format {
        field,
        detail: detail.into(),
    }
}

pub fn read_flo(mut r: impl Read) -> Result<FlowField> {
    let magic = r
        .read_f32::<LittleEndian>()
        .map_err(|_| format("magic", "file shorter than tag"))?;
    if magic != FLO_MAGIC {
        return Err(format("magic", format!("tag {magic} is not {FLO_MAGIC}")));
    }
    let width = r
        .read_i32::<LittleEndian>()
        .map_err(|_| format("width", "truncated header"))?;
    let height = r
        .read_i32::<LittleEndian>()
        .map_err(|_| format("height", "truncated header"))?;
    if width <= 0 {
        return Err(format("width", format!("{width} is not positive")));
    }
    if height <= 0 {
        return Err(format("height", format!("{height} is not positive")));
    }
    let (w, h) = (width as usize, height as usize);
    let mut payload = vec![0f32; 2 * w * h];
    r.read_f32_into::<LittleEndian>(&mut payload)
        .map_err(|_| format("payload", format!("expected {} floats for {w}x{h}", 2 * w * h)))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(format("payload", "trailing bytes after flow data"));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for (i, pair) in payload.chunks_exact(2).enumerate() {
        if !pair[0].is_finite() || !pair[1].is_finite() {
            return Err(format(
                "velocity",
                format!("non-finite value at pixel ({}, {})", i % w, i / w),
            ));
        }
        u.push(pair[0] as f64);
        v.push(pair[1] as f64);
    }
    FlowField::new(w, h, u, v)
}

/// Writes `field` as `.flo`. Components are stored as f32.
pub fn write_flo(field: &FlowField, mut w: impl Write) -> Result<()> {
    let width = i32::try_from(field.width()).map_err(|_| Error::Range("width exceeds i32".into()))?;
    let height =
        i32::try_from(field.height()).map_err(|_| Error::Range("height exceeds i32".into()))?;
    w.write_f32::<LittleEndian>(FLO_MAGIC)?;
    w.write_i32::<LittleEndian>(width)?;
    w.write_i32::<LittleEndian>(height)?;
    for (u, v) in field.u().iter().zip(field.v()) {
        w.write_f32::<LittleEndian>(*u as f32)?;
        w.write_f32::<LittleEndian>(*v as f32)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Input {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    read_flo(BufReader::new(file))
}

pub fn save_flo(field: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    write_flo(field, BufWriter::new(File::create(path)?))
}

/// Loads a sequence from a directory (all `*.flo`, sorted by file name) or from a
/// printf-style pattern such as `frames/frame_%05d.flo`, counting up from 0.
pub fn load_sequence(path: impl AsRef<Path>, fps: f64) -> Result<FlowSequence> {
    let path = path.as_ref();
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "flo"))
            .collect();
        files.sort();
        files
    } else if let Some(files) = expand_pattern(path) {
        files
    } else {
        return Err(Error::Input {
            path: path.to_path_buf(),
            detail: "not a directory or frame pattern".into(),
        });
    };
    if files.is_empty() {
        return Err(Error::Input {
            path: path.to_path_buf(),
            detail: "no .flo frames found".into(),
        });
    }
    let frames = files.iter().map(load_flo).collect::<Result<Vec<_>>>()?;
    FlowSequence::new(frames, fps)
}

fn expand_pattern(path: &Path) -> Option<Vec<PathBuf>> {
    let text = path.to_str()?;
    let start = text.find('%')?;
    let rest = &text[start + 1..];
    let end = rest.find('d')?;
    let spec = &rest[..end];
    let width: usize = if spec.is_empty() {
        0
    } else {
        spec.trim_start_matches('0').parse().ok()?
    };
    let (prefix, suffix) = (&text[..start], &rest[end + 1..]);
    let mut files = Vec::new();
    for i in 0.. {
        let candidate = PathBuf::from(format!("{prefix}{i:0width$}{suffix}"));
        if !candidate.is_file() {
            break;
        }
        files.push(candidate);
    }
    Some(files)
}
