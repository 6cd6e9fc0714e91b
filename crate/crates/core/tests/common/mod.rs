#![allow(dead_code)]

use std::f64::consts::PI;

use ndarray::s;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_percept::spectrogram::mel_spectrogram;
use spectral_percept::{AudioClip, MelParams};

pub type Grid = ndarray::Array2<f64>;

pub fn random_grid(h: usize, w: usize, seed: u64) -> Grid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Grid::from_shape_fn((h, w), |_| rng.gen::<f64>())
}

pub fn tone(freq: f64, rate: u32, len: usize, amp: f64) -> AudioClip {
    let samples = (0..len)
        .map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin())
        .collect();
    AudioClip::new(samples, rate).unwrap()
}

/// A few seconds of plucked harmonic notes over quiet noise.
pub fn music_like(len: usize, rate: u32, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..len).map(|_| 0.002 * (rng.gen::<f64>() - 0.5)).collect();
    let note_len = rate as usize / 4;
    let mut start = 0;
    while start < len {
        let f0 = 110.0 * 2f64.powf(rng.gen_range(0..36) as f64 / 12.0);
        for h in 1..=8 {
            let f = f0 * h as f64;
            if f > rate as f64 / 2.0 {
                break;
            }
            let amp = 0.3 / h as f64;
            for (n, v) in x[start..(start + 2 * note_len).min(len)].iter_mut().enumerate() {
                let t = n as f64 / rate as f64;
                *v += amp * (-6.0 * t).exp() * (2.0 * PI * f * t).sin();
            }
        }
        start += note_len;
    }
    AudioClip::new(x, rate).unwrap()
}

/// The default 256x256 spectrogram of a 4.208 s music-like clip.
pub fn music_spectrogram(seed: u64) -> Grid {
    let clip = music_like(67328, 16000, seed);
    mel_spectrogram(&clip, &MelParams::default()).unwrap().to_grid()
}

/// A 64x64 crop from the lower half of the mel axis.
pub fn spectrogram_crop(seed: u64) -> Grid {
    music_spectrogram(seed).slice(s![32..96, 96..160]).to_owned()
}
