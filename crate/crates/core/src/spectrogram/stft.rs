use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::Grid;

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Whole-sample reflection (`c b | a b c d | c b`), repeated as often as needed.
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    (if m >= len as isize { period - m } else { m }) as usize
}

/// Centered short-time Fourier transform with a periodic Hann window.
///
/// The signal is reflect-padded by `n_fft / 2` on both sides, so a signal of
/// length `L` yields `1 + L / hop` frames.
pub struct Stft {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    /// `n_fft` must be even and `hop` positive.
    pub fn new(n_fft: usize, hop: usize) -> Self {
        assert!(n_fft >= 2 && n_fft.is_multiple_of(2), "n_fft must be even");
        assert!(hop > 0, "hop must be positive");
        let mut planner = FftPlanner::new();
        Self {
            n_fft,
            hop,
            window: hann_window(n_fft),
            forward: planner.plan_fft_forward(n_fft),
            inverse: planner.plan_fft_inverse(n_fft),
        }
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frames_for(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    /// One-sided spectrum, `bins x frames`.
    pub fn forward(&self, x: &[f64]) -> Array2<Complex64> {
        assert!(!x.is_empty(), "STFT of an empty signal");
        let frames = self.frames_for(x.len());
        let pad = (self.n_fft / 2) as isize;
        let mut out = Array2::zeros((self.bins(), frames));
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        for t in 0..frames {
            let start = (t * self.hop) as isize - pad;
            for (i, (b, w)) in buf.iter_mut().zip(&self.window).enumerate() {
                *b = Complex64::new(w * x[reflect_index(start + i as isize, x.len())], 0.0);
            }
            self.forward.process(&mut buf);
            for (k, v) in buf[..self.bins()].iter().enumerate() {
                out[[k, t]] = *v;
            }
        }
        out
    }

    pub fn magnitude(&self, x: &[f64]) -> Grid {
        self.forward(x).mapv(|c| c.norm())
    }

    /// Least-squares inverse for a signal of `len` samples.
    ///
    /// Windowed overlap-add, with contributions from the padded margins folded
    /// back onto the samples they were reflected from, divided by the folded
    /// squared-window envelope. This is the exact minimizer of
    /// `|| forward(x) - spec ||` over real `x`.
    pub fn inverse(&self, spec: &Array2<Complex64>, len: usize) -> Vec<f64> {
        assert_eq!(spec.nrows(), self.bins());
        let n = self.n_fft;
        let frames = spec.ncols();
        let padded = (frames - 1) * self.hop + n;
        let mut num = vec![0.0; padded];
        let mut env = vec![0.0; padded];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..frames {
            buf[0] = Complex64::new(spec[[0, t]].re, 0.0);
            buf[n / 2] = Complex64::new(spec[[n / 2, t]].re, 0.0);
            for k in 1..n / 2 {
                buf[k] = spec[[k, t]];
                buf[n - k] = spec[[k, t]].conj();
            }
            self.inverse.process(&mut buf);
            let offset = t * self.hop;
            for (i, (b, w)) in buf.iter().zip(&self.window).enumerate() {
                num[offset + i] += w * b.re / n as f64;
                env[offset + i] += w * w;
            }
        }

        let pad = (n / 2) as isize;
        let mut x_num = vec![0.0; len];
        let mut x_env = vec![0.0; len];
        for p in 0..padded {
            let i = reflect_index(p as isize - pad, len);
            x_num[i] += num[p];
            x_env[i] += env[p];
        }
        x_num
            .iter()
            .zip(&x_env)
            .map(|(v, e)| if *e > 1e-10 { v / e } else { 0.0 })
            .collect()
    }
}

/// `|STFT|` with a periodic Hann window and reflect centering; `(n_fft/2 + 1) x (1 + len/hop)`.
pub fn stft_magnitude(samples: &[f64], n_fft: usize, hop: usize) -> Grid {
    Stft::new(n_fft, hop).magnitude(samples)
}
