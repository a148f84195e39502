//! Binary tensor files.
//!
//! Both formats are little-endian with a 4-byte magic and a `u32` version:
//!
//! ```text
//! VFT (video):  "VFT1" | version=1 | T | H | W | D | T*H*W*D x f32
//! VPE (prompt): "VPE1" | version=1 | D | D x f32
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{element_count, GridShape, PromptEmbedding, VideoFeatures};

pub const VIDEO_MAGIC: &[u8; 4] = b"VFT1";
pub const PROMPT_MAGIC: &[u8; 4] = b"VPE1";
pub const FORMAT_VERSION: u32 = 1;

const VIDEO_HEADER_LEN: usize = 4 + 4 * 5;
const PROMPT_HEADER_LEN: usize = 4 + 4 * 2;

pub fn encode_video(features: &VideoFeatures) -> Vec<u8> {
    let grid = features.grid();
    let mut out = Vec::with_capacity(VIDEO_HEADER_LEN + features.data().len() * 4);
    out.extend_from_slice(VIDEO_MAGIC);
    for v in [
        FORMAT_VERSION,
        to_u32(features.frames()),
        to_u32(grid.h),
        to_u32(grid.w),
        to_u32(features.dim()),
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    push_floats(&mut out, features.data());
    out
}

pub fn decode_video(bytes: &[u8]) -> Result<VideoFeatures> {
    let header = read_header(bytes, VIDEO_MAGIC, 5)?;
    let [frames, h, w, dim] = [header[0], header[1], header[2], header[3]];
    let count = element_count(&[frames, h, w, dim])?;
    let data = read_floats(&bytes[VIDEO_HEADER_LEN..], count)?;
    VideoFeatures::new(frames, GridShape::new(h, w)?, dim, data)
}

pub fn encode_prompt(prompt: &PromptEmbedding) -> Vec<u8> {
    let mut out = Vec::with_capacity(PROMPT_HEADER_LEN + prompt.dim() * 4);
    out.extend_from_slice(PROMPT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(prompt.dim()).to_le_bytes());
    push_floats(&mut out, prompt.data());
    out
}

pub fn decode_prompt(bytes: &[u8]) -> Result<PromptEmbedding> {
    let header = read_header(bytes, PROMPT_MAGIC, 2)?;
    let data = read_floats(&bytes[PROMPT_HEADER_LEN..], header[0])?;
    PromptEmbedding::new(data)
}

pub fn read_video_file(path: impl AsRef<Path>) -> Result<VideoFeatures> {
    decode_video(&fs::read(path)?)
}

pub fn write_video_file(path: impl AsRef<Path>, features: &VideoFeatures) -> Result<()> {
    Ok(fs::write(path, encode_video(features))?)
}

pub fn read_prompt_file(path: impl AsRef<Path>) -> Result<PromptEmbedding> {
    decode_prompt(&fs::read(path)?)
}

pub fn write_prompt_file(path: impl AsRef<Path>, prompt: &PromptEmbedding) -> Result<()> {
    Ok(fs::write(path, encode_prompt(prompt))?)
}

fn to_u32(n: usize) -> u32 {
    u32::try_from(n).expect("tensor dimension exceeds u32")
}

fn push_floats(out: &mut Vec<u8>, data: &[f32]) {
    for x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Checks magic and version, then returns the `fields - 1` dimension words
/// that follow the version.
fn read_header(bytes: &[u8], magic: &[u8; 4], fields: usize) -> Result<Vec<usize>> {
    let header_len = 4 + 4 * fields;
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            expected: header_len,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != magic {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    if bytes.len() < header_len {
        return Err(Error::Truncated {
            expected: header_len,
            found: bytes.len(),
        });
    }
    let words: Vec<u32> = bytes[4..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if words[0] != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(words[0]));
    }
    Ok(words[1..].iter().map(|&w| w as usize).collect())
}

fn read_floats(payload: &[u8], count: usize) -> Result<Vec<f32>> {
    let expected = count
        .checked_mul(4)
        .ok_or_else(|| Error::invalid("declared payload size overflows"))?;
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::SizeMismatch {
            expected,
            found: payload.len(),
        });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(data)
}
