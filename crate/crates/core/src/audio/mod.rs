//! Audio decoding, downmixing and resampling.
//!
//! Everything downstream works on a mono [`AudioClip`] at a fixed sample
//! rate. Stereo input is averaged to mono first, then band-limited and
//! resampled to the analysis rate.

mod resample;
mod wav;

use std::path::PathBuf;

use thiserror::Error;

pub use resample::resample;
pub use wav::{load_wav, read_wav, write_wav_pcm16, write_wav_pcm16_to};

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed WAV: {0}")]
    Malformed(String),
    #[error("unsupported WAV encoding: {0}")]
    Unsupported(String),
    #[error("sample rate must be positive")]
    InvalidRate,
}

/// Mono waveform with its sample rate in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidRate);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let energy: f64 = self.samples.iter().map(|s| s * s).sum();
        (energy / self.samples.len() as f64).sqrt()
    }
}

/// Averages channels frame by frame. All channels must have equal length.
///
/// A single channel is returned unchanged, so downmixing is idempotent.
pub fn downmix(channels: &[Vec<f64>]) -> Vec<f64> {
    match channels {
        [] => Vec::new(),
        [mono] => mono.clone(),
        _ => {
            let frames = channels.iter().map(Vec::len).min().unwrap_or(0);
            let count = channels.len() as f64;
            (0..frames)
                .map(|i| channels.iter().map(|c| c[i]).sum::<f64>() / count)
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downmix_identical_channels() {
        let x = vec![0.25, -0.5, 0.125, 1.0];
        assert_eq!(downmix(&[x.clone(), x.clone()]), x);
    }

    #[test]
    fn downmix_is_idempotent() {
        let l = vec![0.1, 0.7, -0.3];
        let r = vec![-0.9, 0.2, 0.4];
        let once = downmix(&[l, r]);
        assert_eq!(downmix(std::slice::from_ref(&once)), once);
    }

    #[test]
    fn zero_rate_rejected() {
        assert!(matches!(
            AudioClip::new(vec![0.0], 0),
            Err(AudioError::InvalidRate)
        ));
    }
}
