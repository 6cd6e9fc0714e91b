mod common;

use std::f64::consts::PI;

use common::{random_grid, tone, Grid};
use nalgebra::DMatrix;
use ndarray::Array2;
use spectral_percept::spectrogram::{
    decode_sgram, griffin_lim, invert_mel, load_sgram, log_scale, mel_filterbank, mel_spectrogram,
    mel_to_hz, hz_to_mel, pseudo_inverse, save_sgram, stft_magnitude, PhaseInit, SgramError, Spectrogram,
    SpectrogramError, Stft,
};
use spectral_percept::{AudioClip, MelParams};

fn argmax(col: ndarray::ArrayView1<f64>) -> usize {
    col.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0
}

#[test]
fn tone_peaks_at_its_bin() {
    let clip = tone(1000.0, 16000, 16000, 0.5);
    let mag = stft_magnitude(&clip.samples, 1024, 260);
    assert_eq!(mag.dim(), (513, 1 + 16000 / 260));
    // Frames whose window reaches into the reflected margin see a folded sine.
    let interior = (512usize.div_ceil(260))..=((16000 - 512) / 260);
    for t in interior {
        assert_eq!(argmax(mag.column(t)), 64, "frame {t}");
    }
}

#[test]
fn frame_count_and_silence() {
    let mag = stft_magnitude(&vec![0.0; 67328], 1024, 260);
    assert_eq!(mag.ncols(), 259);
    assert!(mag.iter().all(|&v| v == 0.0));
}

#[test]
fn filterbank_rows_are_positive_contiguous_triangles() {
    for (n_mels, n_fft, rate) in [(256, 1024, 16000), (40, 512, 16000), (128, 2048, 44100), (513, 1024, 16000)] {
        let fb = mel_filterbank(n_mels, n_fft, rate).unwrap();
        assert_eq!(fb.dim(), (n_mels, n_fft / 2 + 1));
        for (m, row) in fb.rows().into_iter().enumerate() {
            assert!(row.sum() > 0.0, "row {m} of {n_mels}");
            let nz: Vec<usize> = row.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(k, _)| k).collect();
            assert_eq!(nz.last().unwrap() - nz[0] + 1, nz.len(), "row {m} support is not contiguous");
            assert!(row.iter().all(|&w| w >= 0.0));
        }
    }
}

#[test]
fn filter_centers_follow_closed_form_mel() {
    let (n_mels, n_fft, rate) = (256, 1024, 16000u32);
    let fb = mel_filterbank(n_mels, n_fft, rate).unwrap();
    let bin_hz = rate as f64 / n_fft as f64;
    let top = 2595.0 * (1.0 + (rate as f64 / 2.0) / 700.0).log10();
    for (m, row) in fb.rows().into_iter().enumerate() {
        let mel = top * (m + 1) as f64 / (n_mels + 1) as f64;
        let center_hz = 700.0 * (10f64.powf(mel / 2595.0) - 1.0);
        let center_bin = center_hz / bin_hz;
        let peak = argmax(row) as f64;
        assert!((peak - center_bin).abs() <= 0.5 + 1e-9, "filter {m}: peak {peak}, center {center_bin}");
    }
    assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
}

#[test]
fn unresolvable_band_count_is_reported() {
    assert!(matches!(
        mel_filterbank(300, 512, 16000),
        Err(SpectrogramError::TooManyBands { n_mels: 300, bins: 257 })
    ));
}

#[test]
fn paper_clip_gives_256_square() {
    let clip = common::music_like(67328, 16000, 4);
    let spec = mel_spectrogram(&clip, &MelParams::default()).unwrap();
    assert_eq!(spec.dim(), (256, 256));
    assert!(spec.values.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(spec.values.iter().any(|&v| v == 0.0));
    assert!(spec.values.iter().any(|&v| v == 1.0) || spec.values.iter().any(|&v| v > 0.99));
}

#[test]
fn crop_takes_the_middle_frames() {
    let clip = common::music_like(67328, 16000, 5);
    let params = MelParams::default();
    let wide = MelParams {
        target_frames: 259,
        ..params.clone()
    };
    let full = mel_spectrogram(&clip, &wide).unwrap();
    let cropped = mel_spectrogram(&clip, &params).unwrap();
    assert_eq!(full.log_lo, cropped.log_lo);
    assert_eq!(full.values.slice(ndarray::s![.., 1..257]), cropped.values);
}

#[test]
fn silent_clip_is_all_zero() {
    let clip = AudioClip::new(vec![0.0; 67328], 16000).unwrap();
    let spec = mel_spectrogram(&clip, &MelParams::default()).unwrap();
    assert_eq!(spec.dim(), (256, 256));
    assert!(spec.values.iter().all(|&v| v == 0.0));
    assert_eq!(spec.log_lo, spec.log_hi);
    assert_eq!(spec.log_lo, (0.001f64).ln() as f32);
}

fn to_matrix(a: &Grid) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_row_iterator(r, c, a.iter().copied())
}

fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn scaled_spectrogram(mel: &Grid, params: &MelParams) -> Spectrogram {
    let (scaled, lo, hi) = log_scale(mel, params.eps);
    Spectrogram::from_grid(&scaled, params.clone(), lo as f32, hi as f32).unwrap()
}

#[test]
fn invert_mel_matches_pseudo_inverse_oracle() {
    let params = MelParams {
        target_frames: 24,
        ..MelParams::default()
    };
    let fb = params.filterbank().unwrap();
    let mag = random_grid(513, 24, 11);
    let mel = fb.dot(&mag);
    let spec = scaled_spectrogram(&mel, &params);
    let got = invert_mel(&spec).unwrap();
    assert!(got.iter().all(|&v| v >= 0.0));

    // Narrow low bands share bins, so the filterbank is rank deficient.
    // Check the four Penrose conditions instead of a closed form.
    let pinv = pseudo_inverse(&fb);
    let (a, p) = (to_matrix(&fb), to_matrix(&pinv));
    let (ap, pa) = (&a * &p, &p * &a);
    assert!(rel_frobenius(&(&ap * &a), &a) < 1e-9);
    assert!(rel_frobenius(&(&pa * &p), &p) < 1e-9);
    assert!(rel_frobenius(&ap.transpose(), &ap) < 1e-9);
    assert!(rel_frobenius(&pa.transpose(), &pa) < 1e-9);

    let oracle = pinv.dot(&spec.mel_magnitudes()).mapv(|v| v.max(0.0));
    let diff = (&got - &oracle).mapv(|v| v * v).sum().sqrt() / oracle.mapv(|v| v * v).sum().sqrt();
    assert!(diff < 1e-6, "implementation vs oracle {diff}");

    let err = (&got - &mag).mapv(|v| v * v).sum().sqrt() / mag.mapv(|v| v * v).sum().sqrt();
    assert!(err < 0.5, "round-trip relative error {err}");
}

#[test]
fn unscaling_recovers_the_mel_grid() {
    let params = MelParams {
        target_frames: 40,
        ..MelParams::default()
    };
    let mel = random_grid(256, 40, 12).mapv(|v| 10f64.powf(4.0 * v - 3.0));
    let spec = scaled_spectrogram(&mel, &params);
    let back = spec.mel_magnitudes();
    let err = (&back - &mel).mapv(|v| v * v).sum().sqrt() / mel.mapv(|v| v * v).sum().sqrt();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn degenerate_spectrogram_inverts_to_zero() {
    let lo = (0.001f64).ln() as f32;
    let spec = Spectrogram::new(Array2::zeros((256, 256)), MelParams::default(), lo, lo).unwrap();
    let mag = invert_mel(&spec).unwrap();
    assert_eq!(mag.dim(), (513, 256));
    assert!(mag.iter().all(|&v| v == 0.0));
}

fn dft_mag(x: &[f64], rate: f64, freq: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (n, v) in x.iter().enumerate() {
        let ph = 2.0 * PI * freq * n as f64 / rate;
        re += v * ph.cos();
        im -= v * ph.sin();
    }
    (re * re + im * im).sqrt()
}

#[test]
fn griffin_lim_recovers_tone_frequency() {
    let clip = tone(500.0, 16000, 16000, 0.5);
    let mag = stft_magnitude(&clip.samples, 1024, 260);
    let fine_peak = |x: &[f64]| {
        (400..=600)
            .map(|f| (f, dft_mag(x, 16000.0, f as f64)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
    };
    for init in [PhaseInit::Zero, PhaseInit::Random(0)] {
        let out = griffin_lim(&mag, 1024, 260, 32, init).unwrap();
        assert_eq!(out.samples.len(), (mag.ncols() - 1) * 260);
        let again = stft_magnitude(&out.samples, 1024, 260);
        let mean = again.mean_axis(ndarray::Axis(1)).unwrap();
        assert_eq!(argmax(mean.view()), 32, "{init:?}");
    }
    // Zero phase restarts every frame, which leaves a comb at the frame rate
    // (16000 / 260 Hz) until enough iterations have passed.
    let slow = griffin_lim(&mag, 1024, 260, 100, PhaseInit::Zero).unwrap();
    assert!((fine_peak(&slow.samples) - 500i32).abs() <= 1);
    let random = griffin_lim(&mag, 1024, 260, 32, PhaseInit::Random(0)).unwrap();
    assert!((fine_peak(&random.samples) - 500i32).abs() <= 1);
}

#[test]
fn griffin_lim_residual_never_increases() {
    let clip = common::music_like(16000, 16000, 6);
    let mag = stft_magnitude(&clip.samples, 1024, 260);
    for init in [PhaseInit::Zero, PhaseInit::Random(3)] {
        let out = griffin_lim(&mag, 1024, 260, 32, init).unwrap();
        for (k, w) in out.residuals.windows(2).enumerate() {
            assert!(w[1] <= w[0] * (1.0 + 1e-10), "{init:?} iteration {k}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn zero_iterations_is_deterministic_and_zero_phase() {
    let clip = tone(700.0, 16000, 4000, 0.3);
    let stft = Stft::new(1024, 260);
    let mag = stft.magnitude(&clip.samples);
    let a = griffin_lim(&mag, 1024, 260, 0, PhaseInit::Zero).unwrap();
    let b = griffin_lim(&mag, 1024, 260, 0, PhaseInit::Zero).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.residuals.len(), 1);
    let zero_phase = mag.mapv(|m| rustfft::num_complex::Complex64::new(m, 0.0));
    assert_eq!(a.samples, stft.inverse(&zero_phase, (mag.ncols() - 1) * 260));
}

#[test]
fn sgram_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.sgram");
    let values = random_grid(256, 256, 13).mapv(|v| v as f32);
    let spec = Spectrogram::new(values, MelParams::default(), -6.907_755, 2.5).unwrap();
    save_sgram(&spec, &path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 29 + 4 * 256 * 256);
    let back = load_sgram(&path).unwrap();
    assert_eq!(back, spec);
    assert!(back
        .values
        .iter()
        .zip(spec.values.iter())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn sgram_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("y.sgram");
    let spec = Spectrogram::new(Array2::zeros((256, 3)), MelParams::default(), 0.0, 0.0).unwrap();
    save_sgram(&spec, &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[1] = b'X';
    assert!(matches!(decode_sgram(&bytes), Err(SgramError::BadMagic(_))));
    bytes[1] = b'G';
    bytes[4] = 9;
    assert!(matches!(decode_sgram(&bytes), Err(SgramError::Version(9))));
    bytes[4] = 1;
    assert!(matches!(
        decode_sgram(&bytes[..bytes.len() - 1]),
        Err(SgramError::Truncated { .. })
    ));
    assert!(matches!(
        load_sgram(dir.path().join("missing.sgram")),
        Err(SgramError::Io { .. })
    ));
}
