use super::{AudioClip, AudioError};

/// Taps contributing to each output sample.
const TAPS: usize = 64;
const HALF: usize = TAPS / 2;
const KAISER_BETA: f64 = 8.0;

/// Resamples with a polyphase Kaiser-windowed sinc filter.
///
/// The rate ratio is reduced to `up / down`; output sample `n` sits at input
/// position `n * down / up`, and each of the `up` fractional offsets gets its
/// own 64-tap phase. The low-pass cutoff is at half the lower of the two
/// rates. Samples outside the clip are treated as zero and the result is not
/// clipped.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    if clip.sample_rate == 0 || target_rate == 0 {
        return Err(AudioError::InvalidRate);
    }
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }

    let g = gcd(u64::from(clip.sample_rate), u64::from(target_rate));
    let up = u64::from(target_rate) / g;
    let down = u64::from(clip.sample_rate) / g;
    let len = clip.samples.len() as u64;
    let out_len = (u128::from(len) * u128::from(up) + u128::from(down) / 2) / u128::from(down);

    let cutoff = (f64::from(target_rate) / f64::from(clip.sample_rate)).min(1.0);
    let phases = PhaseTable::new(up as usize, cutoff);

    let x = &clip.samples;
    let samples = (0..out_len as u64)
        .map(|n| {
            let pos = n * down;
            let base = (pos / up) as i64;
            let taps = phases.phase((pos % up) as usize);
            // taps[j] multiplies input index base - HALF + 1 + j
            let first = base - HALF as i64 + 1;
            taps.iter()
                .enumerate()
                .filter_map(|(j, &w)| {
                    let k = first + j as i64;
                    (k >= 0 && (k as usize) < x.len()).then(|| w * x[k as usize])
                })
                .sum()
        })
        .collect();
    AudioClip::new(samples, target_rate)
}

struct PhaseTable {
    weights: Vec<f64>,
}

impl PhaseTable {
    fn new(up: usize, cutoff: f64) -> Self {
        let bessel_norm = bessel_i0(KAISER_BETA);
        let mut weights = Vec::with_capacity(up * TAPS);
        for phase in 0..up {
            let frac = phase as f64 / up as f64;
            let start = weights.len();
            for j in 0..TAPS {
                // distance from the output position to input sample `first + j`
                let d = frac + (HALF as f64 - 1.0) - j as f64;
                let r = d / HALF as f64;
                let window = if r.abs() >= 1.0 {
                    0.0
                } else {
                    bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / bessel_norm
                };
                weights.push(cutoff * sinc(cutoff * d) * window);
            }
            let sum: f64 = weights[start..].iter().sum();
            for w in &mut weights[start..] {
                *w /= sum;
            }
        }
        Self { weights }
    }

    fn phase(&self, p: usize) -> &[f64] {
        &self.weights[p * TAPS..(p + 1) * TAPS]
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Zeroth-order modified Bessel function of the first kind, power series.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, rate: u32, len: usize) -> AudioClip {
        let samples = (0..len)
            .map(|n| 0.5 * (2.0 * PI * freq * n as f64 / f64::from(rate)).sin())
            .collect();
        AudioClip::new(samples, rate).unwrap()
    }

    #[test]
    fn identity_rate_is_exact_copy() {
        let clip = tone(440.0, 16000, 1000);
        assert_eq!(resample(&clip, 16000).unwrap(), clip);
    }

    #[test]
    fn three_to_one_length() {
        let clip = AudioClip::new(vec![0.0; 201_600], 48000).unwrap();
        let out = resample(&clip, 16000).unwrap();
        assert_eq!(out.sample_rate, 16000);
        assert_eq!(out.len(), 67_200);
    }

    #[test]
    fn non_integer_ratio_length() {
        let clip = AudioClip::new(vec![0.0; 44_101], 44100).unwrap();
        let out = resample(&clip, 16000).unwrap();
        let expected = (44_101.0_f64 * 16000.0 / 44100.0).round() as usize;
        assert!(out.len().abs_diff(expected) <= 1);
    }

    #[test]
    fn dc_gain_is_unity() {
        let clip = AudioClip::new(vec![0.3; 4800], 48000).unwrap();
        let out = resample(&clip, 16000).unwrap();
        for &s in &out.samples[HALF..out.len() - HALF] {
            assert!((s - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn bessel_matches_reference_values() {
        // I0(1) and I0(8) from Abramowitz & Stegun tables
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(8.0) - 427.564_115_721_804_7).abs() < 1e-9);
    }

    #[test]
    fn zero_target_rate_rejected() {
        let clip = tone(440.0, 16000, 10);
        assert!(resample(&clip, 0).is_err());
    }
}
