//! Perceptual quality measurement for audio spectrograms.
//!
//! The crate covers the whole measurement stack: WAV decoding and
//! resampling, log-mel spectrograms and their Griffin-Lim inversion,
//! the MSE / MS-SSIM / NLPD metrics with hand-derived reverse-mode
//! gradients, a soft differentiable quantizer with entropy accounting,
//! and a small projected-gradient fitting demo that uses any of the
//! metrics as a loss.
//!
//! Grids are `ndarray::Array2<f64>` with rows as the first axis. For
//! spectrograms a row is a mel band (row 0 is the lowest band) and a
//! column is a time frame.

pub mod audio;
pub mod cli;
mod filter;
pub mod fit;
pub mod gradients;
pub mod metrics;
pub mod quantization;
pub mod spectrogram;

/// Two-dimensional grid of reals, rows first.
pub type Grid = ndarray::Array2<f64>;

pub use audio::AudioClip;
pub use fit::{FitConfig, FitResult, LossKind};
pub use metrics::{MetricReport, MsSsimParams, NlpdParams};
pub use quantization::{EntropyInputs, QuantizerSpec};
pub use spectrogram::{MelParams, Spectrogram};
