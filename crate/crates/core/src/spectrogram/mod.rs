//! Mel spectrograms: STFT magnitude, mel projection, log scaling to `[0, 1]`,
//! the SGRAM file format, and the way back to audio.

mod griffin_lim;
mod mel;
mod sgram;
mod stft;

use ndarray::{s, Array2};
use serde::Serialize;
use thiserror::Error;

use crate::audio::AudioClip;
use crate::Grid;

pub use griffin_lim::{griffin_lim, GriffinLimOutput, PhaseInit};
pub use mel::{hz_to_mel, mel_filterbank, mel_points, mel_to_hz, pseudo_inverse};
pub use sgram::{
    decode_sgram, encode_sgram, is_sgram, load_sgram, save_sgram, SgramError, SGRAM_HEADER_LEN,
};
pub use stft::{hann_window, stft_magnitude, Stft};

/// Below this log range a spectrogram is treated as constant.
const DEGENERATE_RANGE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SpectrogramError {
    #[error("clip is sampled at {clip} Hz but the parameters expect {expected} Hz")]
    RateMismatch { clip: u32, expected: u32 },
    #[error("{n_mels} mel bands cannot be resolved with {bins} frequency bins")]
    TooManyBands { n_mels: usize, bins: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid spectrogram: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MelParams {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub eps: f64,
    pub target_frames: usize,
}

impl Default for MelParams {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            n_fft: 1024,
            hop: 260,
            n_mels: 256,
            eps: 0.001,
            target_frames: 256,
        }
    }
}

impl MelParams {
    pub fn validate(&self) -> Result<(), SpectrogramError> {
        let bad = |m: String| Err(SpectrogramError::InvalidParams(m));
        if self.sample_rate == 0 {
            return bad("sample rate must be positive".into());
        }
        if self.n_fft < 2 || !self.n_fft.is_multiple_of(2) {
            return bad(format!("n_fft must be even and at least 2, got {}", self.n_fft));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return bad(format!("hop must be in 1..={}, got {}", self.n_fft, self.hop));
        }
        if self.n_mels == 0 {
            return bad("n_mels must be positive".into());
        }
        if self.n_mels > self.n_fft / 2 + 1 {
            return Err(SpectrogramError::TooManyBands {
                n_mels: self.n_mels,
                bins: self.n_fft / 2 + 1,
            });
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.target_frames == 0 {
            return bad("target_frames must be positive".into());
        }
        Ok(())
    }

    pub fn filterbank(&self) -> Result<Grid, SpectrogramError> {
        mel_filterbank(self.n_mels, self.n_fft, self.sample_rate)
    }
}

/// A log-mel spectrogram scaled to `[0, 1]`, with the log-domain range needed
/// to undo the scaling. Rows are mel bands (lowest first), columns are frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Array2<f32>,
    pub params: MelParams,
    pub log_lo: f32,
    pub log_hi: f32,
}

impl Spectrogram {
    pub fn new(
        values: Array2<f32>,
        params: MelParams,
        log_lo: f32,
        log_hi: f32,
    ) -> Result<Self, SpectrogramError> {
        let spec = Self {
            values,
            params,
            log_lo,
            log_hi,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a spectrogram from an `f64` grid, e.g. an optimizer output.
    pub fn from_grid(
        grid: &Grid,
        params: MelParams,
        log_lo: f32,
        log_hi: f32,
    ) -> Result<Self, SpectrogramError> {
        Self::new(grid.mapv(|v| v as f32), params, log_lo, log_hi)
    }

    pub fn validate(&self) -> Result<(), SpectrogramError> {
        self.params.validate()?;
        let bad = |m: String| Err(SpectrogramError::Invalid(m));
        if self.values.nrows() != self.params.n_mels {
            return bad(format!(
                "{} rows but {} mel bands",
                self.values.nrows(),
                self.params.n_mels
            ));
        }
        if self.values.ncols() == 0 {
            return bad("no frames".into());
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return bad(format!("value {v} outside [0, 1]"));
        }
        if !(self.log_lo.is_finite() && self.log_hi.is_finite() && self.log_lo <= self.log_hi) {
            return bad(format!("log range [{}, {}]", self.log_lo, self.log_hi));
        }
        Ok(())
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn to_grid(&self) -> Grid {
        self.values.mapv(f64::from)
    }

    /// Mel-domain magnitudes: undoes the `[0, 1]` scaling and the log.
    ///
    /// Results smaller than the precision of the stored `f32` log range are
    /// indistinguishable from zero and returned as zero.
    pub fn mel_magnitudes(&self) -> Grid {
        let lo = f64::from(self.log_lo);
        let hi = f64::from(self.log_hi);
        let range = if hi - lo < DEGENERATE_RANGE { 0.0 } else { hi - lo };
        let resolution = (lo.abs() + range) * f64::from(f32::EPSILON);
        self.values.mapv(|v| {
            let e = (lo + f64::from(v) * range).exp();
            let x = e - self.params.eps;
            if x <= e * resolution {
                0.0
            } else {
                x
            }
        })
    }
}

/// `ln(mel + eps)` min-max scaled to `[0, 1]`, with the log range.
pub fn log_scale(mel: &Grid, eps: f64) -> (Grid, f64, f64) {
    let logs = mel.mapv(|x| (x + eps).ln());
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled = if hi - lo < DEGENERATE_RANGE {
        Grid::zeros(mel.dim())
    } else {
        logs.mapv(|l| ((l - lo) / (hi - lo)).clamp(0.0, 1.0))
    };
    (scaled, lo, hi)
}

/// Center-crops or right-pads with zeros to exactly `frames` columns.
pub fn fit_frames(grid: &Grid, frames: usize) -> Grid {
    let cols = grid.ncols();
    if cols >= frames {
        let start = (cols - frames) / 2;
        grid.slice(s![.., start..start + frames]).to_owned()
    } else {
        let mut out = Grid::zeros((grid.nrows(), frames));
        out.slice_mut(s![.., ..cols]).assign(grid);
        out
    }
}

pub fn mel_spectrogram(clip: &AudioClip, params: &MelParams) -> Result<Spectrogram, SpectrogramError> {
    params.validate()?;
    if clip.sample_rate != params.sample_rate {
        return Err(SpectrogramError::RateMismatch {
            clip: clip.sample_rate,
            expected: params.sample_rate,
        });
    }
    if clip.is_empty() {
        return Err(SpectrogramError::InvalidParams("clip has no samples".into()));
    }
    let mag = stft_magnitude(&clip.samples, params.n_fft, params.hop);
    let mel = params.filterbank()?.dot(&mag);
    let (scaled, lo, hi) = log_scale(&mel, params.eps);
    let values = fit_frames(&scaled, params.target_frames).mapv(|v| v as f32);
    Spectrogram::new(values, params.clone(), lo as f32, hi as f32)
}

/// Linear-frequency magnitudes, `(n_fft/2 + 1) x frames`, via the
/// pseudo-inverse of the mel filterbank.
pub fn invert_mel(spec: &Spectrogram) -> Result<Grid, SpectrogramError> {
    spec.validate()?;
    let pinv = pseudo_inverse(&spec.params.filterbank()?);
    Ok(pinv.dot(&spec.mel_magnitudes()).mapv(|v| v.max(0.0)))
}

/// Audio from a spectrogram: [`invert_mel`] followed by Griffin-Lim.
pub fn reconstruct_audio(
    spec: &Spectrogram,
    iters: usize,
    init: PhaseInit,
) -> Result<AudioClip, SpectrogramError> {
    let mag = invert_mel(spec)?;
    let out = griffin_lim(&mag, spec.params.n_fft, spec.params.hop, iters, init)?;
    AudioClip::new(out.samples, spec.params.sample_rate)
        .map_err(|e| SpectrogramError::InvalidParams(e.to_string()))
}
