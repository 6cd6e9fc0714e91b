use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

use super::{MelParams, Spectrogram};

pub const SGRAM_MAGIC: &[u8; 4] = b"SGRM";
pub const SGRAM_VERSION: u8 = 1;
pub const SGRAM_HEADER_LEN: usize = 29;

#[derive(Debug, Error)]
pub enum SgramError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("not an SGRAM file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("truncated SGRAM data: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("unsupported SGRAM version {0}")]
    Version(u8),
    #[error("malformed SGRAM data: {0}")]
    Malformed(String),
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn f32_at(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

/// True if `bytes` starts with the SGRAM magic.
pub fn is_sgram(bytes: &[u8]) -> bool {
    bytes.starts_with(SGRAM_MAGIC)
}

pub fn encode_sgram(spec: &Spectrogram) -> Vec<u8> {
    let (h, w) = spec.values.dim();
    let mut out = Vec::with_capacity(SGRAM_HEADER_LEN + 4 * h * w);
    out.extend_from_slice(SGRAM_MAGIC);
    out.push(SGRAM_VERSION);
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&spec.log_lo.to_le_bytes());
    out.extend_from_slice(&spec.log_hi.to_le_bytes());
    out.extend_from_slice(&spec.params.sample_rate.to_le_bytes());
    out.extend_from_slice(&(spec.params.hop as u32).to_le_bytes());
    for v in spec.values.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses an SGRAM image. The file does not record `n_fft` or `eps`; they take
/// their default values, with `n_fft` raised to the next power of two when the
/// height or hop would not fit the default.
pub fn decode_sgram(bytes: &[u8]) -> Result<Spectrogram, SgramError> {
    if bytes.len() < 4 {
        return Err(SgramError::Truncated {
            expected: SGRAM_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if !is_sgram(bytes) {
        return Err(SgramError::BadMagic(bytes[..4].try_into().unwrap()));
    }
    if bytes.len() < SGRAM_HEADER_LEN {
        return Err(SgramError::Truncated {
            expected: SGRAM_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes[4] != SGRAM_VERSION {
        return Err(SgramError::Version(bytes[4]));
    }
    let h = u32_at(bytes, 5) as usize;
    let w = u32_at(bytes, 9) as usize;
    let log_lo = f32_at(bytes, 13);
    let log_hi = f32_at(bytes, 17);
    let sample_rate = u32_at(bytes, 21);
    let hop = u32_at(bytes, 25) as usize;

    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(SGRAM_HEADER_LEN))
        .ok_or_else(|| SgramError::Malformed(format!("dimensions {h}x{w} overflow")))?;
    if bytes.len() < expected {
        return Err(SgramError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(SgramError::Malformed(format!(
            "{} trailing bytes after the data",
            bytes.len() - expected
        )));
    }

    let values: Vec<f32> = bytes[SGRAM_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = Array2::from_shape_vec((h, w), values)
        .map_err(|e| SgramError::Malformed(e.to_string()))?;

    let defaults = MelParams::default();
    let mut n_fft = defaults.n_fft;
    if h > n_fft / 2 + 1 || hop > n_fft {
        n_fft = (2 * h.saturating_sub(1)).max(hop).max(2).next_power_of_two();
    }
    let params = MelParams {
        sample_rate,
        n_fft,
        hop,
        n_mels: h,
        eps: defaults.eps,
        target_frames: w,
    };
    Spectrogram::new(values, params, log_lo, log_hi).map_err(|e| SgramError::Malformed(e.to_string()))
}

pub fn save_sgram(spec: &Spectrogram, path: impl AsRef<Path>) -> Result<(), SgramError> {
    let path = path.as_ref();
    let io = |source| SgramError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io)?;
    file.write_all(&encode_sgram(spec)).map_err(io)?;
    file.flush().map_err(io)
}

pub fn load_sgram(path: impl AsRef<Path>) -> Result<Spectrogram, SgramError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| SgramError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_sgram(&bytes)
}
