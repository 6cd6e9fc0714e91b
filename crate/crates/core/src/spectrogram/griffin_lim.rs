use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::stft::Stft;
use super::SpectrogramError;
use crate::Grid;

/// Starting phase for Griffin-Lim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseInit {
    #[default]
    Zero,
    /// Uniform phases drawn from a seeded generator.
    Random(u64),
}

#[derive(Debug, Clone)]
pub struct GriffinLimOutput {
    /// `(frames - 1) * hop` samples.
    pub samples: Vec<f64>,
    /// `|| |STFT(x_k)| - mag ||` for `k = 0..=iters`, where `x_0` is the
    /// inverse of the initial spectrum.
    pub residuals: Vec<f64>,
}

/// Distance between `|spec|` and `mag` over the full two-sided spectrum.
fn consistency_residual(spec: &Array2<Complex64>, mag: &Grid) -> f64 {
    let last = mag.nrows() - 1;
    Zip::indexed(spec)
        .and(mag)
        .fold(0.0, |acc, (k, _), s, a| {
            let weight = if k == 0 || k == last { 1.0 } else { 2.0 };
            acc + weight * (s.norm() - a).powi(2)
        })
        .sqrt()
}

fn replace_magnitude(spec: &Array2<Complex64>, mag: &Grid) -> Array2<Complex64> {
    let mut out = spec.clone();
    out.zip_mut_with(mag, |s, &a| {
        let n = s.norm();
        *s = if n > 0.0 { *s * (a / n) } else { Complex64::new(a, 0.0) };
    });
    out
}

/// Iterative phase reconstruction from an STFT magnitude (`(n_fft/2 + 1) x frames`).
///
/// Each iteration takes the least-squares signal for the current spectrum and
/// replaces the magnitude of its STFT with `mag`. With the least-squares
/// inverse the residual never increases.
pub fn griffin_lim(
    mag: &Grid,
    n_fft: usize,
    hop: usize,
    iters: usize,
    init: PhaseInit,
) -> Result<GriffinLimOutput, SpectrogramError> {
    if n_fft < 2 || !n_fft.is_multiple_of(2) || hop == 0 || hop > n_fft {
        return Err(SpectrogramError::InvalidParams(format!(
            "Griffin-Lim needs an even n_fft and 0 < hop <= n_fft (got {n_fft}, {hop})"
        )));
    }
    let (bins, frames) = mag.dim();
    if bins != n_fft / 2 + 1 {
        return Err(SpectrogramError::InvalidParams(format!(
            "magnitude has {bins} rows, n_fft {n_fft} needs {}",
            n_fft / 2 + 1
        )));
    }
    if frames < 2 {
        return Err(SpectrogramError::InvalidParams(
            "Griffin-Lim needs at least two frames".into(),
        ));
    }
    if mag.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(SpectrogramError::InvalidParams(
            "magnitudes must be finite and non-negative".into(),
        ));
    }

    let stft = Stft::new(n_fft, hop);
    let len = (frames - 1) * hop;
    let mut spec = match init {
        PhaseInit::Zero => mag.mapv(|a| Complex64::new(a, 0.0)),
        PhaseInit::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            mag.mapv(|a| Complex64::from_polar(a, rng.gen_range(0.0..2.0 * PI)))
        }
    };
    let mut samples = stft.inverse(&spec, len);
    let mut residuals = Vec::with_capacity(iters + 1);
    for k in 0..=iters {
        let current = stft.forward(&samples);
        residuals.push(consistency_residual(&current, mag));
        if k == iters {
            break;
        }
        spec = replace_magnitude(&current, mag);
        samples = stft.inverse(&spec, len);
    }
    Ok(GriffinLimOutput { samples, residuals })
}
