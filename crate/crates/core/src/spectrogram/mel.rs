use nalgebra::{DMatrix, SVD};

use super::SpectrogramError;
use crate::Grid;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the `n_mels` filters, equally spaced in mel
/// between 0 Hz and Nyquist. Element `m + 1` is the center of filter `m`;
/// elements `m` and `m + 2` are its edges.
pub fn mel_points(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Integral of the unit-peak triangle (l, c, r) from l up to x.
fn triangle_area_to(x: f64, l: f64, c: f64, r: f64) -> f64 {
    if x <= l {
        0.0
    } else if x <= c {
        (x - l).powi(2) / (2.0 * (c - l))
    } else if x < r {
        (r - l) / 2.0 - (r - x).powi(2) / (2.0 * (r - c))
    } else {
        (r - l) / 2.0
    }
}

/// HTK-scale triangular filterbank, `n_mels x (n_fft/2 + 1)`, unit peak, no
/// area normalization.
///
/// Triangles are sampled at the bin frequencies. A filter narrow enough to
/// fall between two bins is instead given the mean of its triangle over the
/// frequency cell of the nearest bin, so every row has positive weight.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Result<Grid, SpectrogramError> {
    let bins = n_fft / 2 + 1;
    if n_mels == 0 || n_fft < 2 || sample_rate == 0 {
        return Err(SpectrogramError::InvalidParams(format!(
            "filterbank needs n_mels >= 1, n_fft >= 2 and a positive rate (got {n_mels}, {n_fft}, {sample_rate})"
        )));
    }
    if n_mels > bins {
        return Err(SpectrogramError::TooManyBands { n_mels, bins });
    }
    let df = sample_rate as f64 / n_fft as f64;
    let pts = mel_points(n_mels, sample_rate);
    let mut fb = Grid::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (l, c, r) = (pts[m], pts[m + 1], pts[m + 2]);
        let mut row = fb.row_mut(m);
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * df;
            let up = (f - l) / (c - l);
            let down = (r - f) / (r - c);
            *w = up.min(down).max(0.0);
        }
        if row.iter().all(|&w| w == 0.0) {
            let k = ((c / df).round() as usize).min(bins - 1);
            let lo = k as f64 * df - df / 2.0;
            let hi = lo + df;
            let area = triangle_area_to(hi, l, c, r) - triangle_area_to(lo, l, c, r);
            row[k] = area / df;
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(SpectrogramError::TooManyBands { n_mels, bins });
        }
    }
    Ok(fb)
}

/// Moore–Penrose pseudo-inverse, singular values below the usual
/// `max(rows, cols) * eps * sigma_max` cutoff treated as zero.
pub fn pseudo_inverse(m: &Grid) -> Grid {
    let (rows, cols) = m.dim();
    let dm = DMatrix::from_row_iterator(rows, cols, m.iter().copied());
    let svd = SVD::new(dm, true, true);
    let sigma_max = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
    let tol = rows.max(cols) as f64 * f64::EPSILON * sigma_max;
    let pinv = svd
        .pseudo_inverse(tol.max(f64::MIN_POSITIVE))
        .expect("SVD was computed with both factors");
    Grid::from_shape_fn((cols, rows), |(i, j)| pinv[(i, j)])
}
