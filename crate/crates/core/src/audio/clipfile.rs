//! Clip tensor file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   b"VCLP"
//! version u32 = 1
//! count   u32
//! length  u32 = 9217
//! count x { id_len u32, id utf-8 bytes, length x f32 }
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{AudioClip, AudioError, CLIP_LEN};

pub const CLIP_FILE_MAGIC: [u8; 4] = *b"VCLP";
pub const CLIP_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClipFileError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a clip file (bad magic)")]
    BadMagic,
    #[error("unsupported clip file version {0}")]
    Version(u32),
    #[error("clip length {0} in header, expected {CLIP_LEN}")]
    Length(u32),
    #[error("clip id is not utf-8")]
    BadId,
    #[error("invalid clip `{id}`: {source}")]
    Clip { id: String, source: AudioError },
}

pub fn write_clip_file<W: Write>(clips: &[(String, AudioClip)], mut w: W) -> io::Result<()> {
    w.write_all(&CLIP_FILE_MAGIC)?;
    w.write_all(&CLIP_FILE_VERSION.to_le_bytes())?;
    w.write_all(&(clips.len() as u32).to_le_bytes())?;
    w.write_all(&(CLIP_LEN as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(CLIP_LEN * 4);
    for (id, clip) in clips {
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        buf.clear();
        for &s in clip.samples() {
            buf.extend_from_slice(&(s as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_clip_file<R: Read>(mut r: R) -> Result<Vec<(String, AudioClip)>, ClipFileError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != CLIP_FILE_MAGIC {
        return Err(ClipFileError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != CLIP_FILE_VERSION {
        return Err(ClipFileError::Version(version));
    }
    let count = read_u32(&mut r)? as usize;
    let len = read_u32(&mut r)?;
    if len as usize != CLIP_LEN {
        return Err(ClipFileError::Length(len));
    }
    let mut out = Vec::with_capacity(count);
    let mut raw = vec![0u8; CLIP_LEN * 4];
    for _ in 0..count {
        let id_len = read_u32(&mut r)? as usize;
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id)?;
        let id = String::from_utf8(id).map_err(|_| ClipFileError::BadId)?;
        r.read_exact(&mut raw)?;
        let samples = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let clip = AudioClip::new(samples).map_err(|source| ClipFileError::Clip {
            id: id.clone(),
            source,
        })?;
        out.push((id, clip));
    }
    Ok(out)
}
