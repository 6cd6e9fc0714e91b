use std::fs;
use std::io::Write;
use std::path::Path;

use super::{downmix, AudioClip, AudioError};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits: u16,
}

/// Decodes a RIFF/WAVE file into a mono clip.
///
/// Accepts 16- and 24-bit integer PCM and 32-bit IEEE float, mono or
/// stereo. Integer samples are divided by the magnitude of the type's
/// most negative value (32768 or 8388608).
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_wav(&bytes)
}

/// Decodes an in-memory WAV image. See [`load_wav`].
pub fn read_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::Malformed("missing RIFF/WAVE header".into()));
    }

    let mut fmt = None;
    let mut data = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&end| end <= bytes.len());
        match id {
            b"fmt " => {
                let end = body_end
                    .ok_or_else(|| AudioError::Malformed("truncated fmt chunk".into()))?;
                fmt = Some(parse_fmt(&bytes[body_start..end])?);
            }
            b"data" => {
                // Some writers leave the data size unset when streaming; take what is there.
                let end = body_end.unwrap_or(bytes.len());
                data = Some(&bytes[body_start..end]);
            }
            _ => {}
        }
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }

    let fmt = fmt.ok_or_else(|| AudioError::Malformed("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::Malformed("no data chunk".into()))?;

    if fmt.channels == 0 {
        return Err(AudioError::Malformed("zero channels".into()));
    }
    if fmt.channels > 2 {
        return Err(AudioError::Unsupported(format!(
            "{} channels (mono or stereo only)",
            fmt.channels
        )));
    }
    if fmt.sample_rate == 0 {
        return Err(AudioError::Malformed("zero sample rate".into()));
    }
    let decode: fn(&[u8]) -> f64 = match (fmt.format, fmt.bits) {
        (FORMAT_PCM, 16) => |b| f64::from(i16::from_le_bytes([b[0], b[1]])) / 32768.0,
        (FORMAT_PCM, 24) => |b| {
            let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
            f64::from(v) / 8_388_608.0
        },
        (FORMAT_FLOAT, 32) => |b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        (format, bits) => {
            return Err(AudioError::Unsupported(format!(
                "format tag {format} with {bits} bits per sample"
            )))
        }
    };
    let width = usize::from(fmt.bits / 8);
    let channels = usize::from(fmt.channels);
    if usize::from(fmt.block_align) != width * channels {
        return Err(AudioError::Malformed(format!(
            "block align {} does not match {} channels of {} bits",
            fmt.block_align, fmt.channels, fmt.bits
        )));
    }

    let frames = data.len() / usize::from(fmt.block_align);
    if frames == 0 {
        return Err(AudioError::Malformed("data chunk holds no samples".into()));
    }
    let mut per_channel = vec![Vec::with_capacity(frames); channels];
    for (f, frame) in data.chunks_exact(usize::from(fmt.block_align)).enumerate() {
        for (c, raw) in frame.chunks_exact(width).enumerate() {
            let v = decode(raw);
            if !v.is_finite() {
                return Err(AudioError::Malformed(format!(
                    "non-finite sample at frame {f}"
                )));
            }
            per_channel[c].push(v);
        }
    }

    AudioClip::new(downmix(&per_channel), fmt.sample_rate)
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::Malformed("fmt chunk shorter than 16 bytes".into()));
    }
    let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
    let mut format = u16_at(0);
    if format == FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(AudioError::Malformed("truncated WAVE_FORMAT_EXTENSIBLE".into()));
        }
        // First two bytes of the sub-format GUID carry the real tag.
        format = u16_at(24);
    }
    Ok(FmtChunk {
        format,
        channels: u16_at(2),
        sample_rate: u32::from_le_bytes(body[4..8].try_into().unwrap()),
        block_align: u16_at(12),
        bits: u16_at(14),
    })
}

/// Writes a mono 16-bit PCM WAV. Samples are clipped to [-1, 1].
pub fn write_wav_pcm16(path: impl AsRef<Path>, clip: &AudioClip) -> Result<(), AudioError> {
    let path = path.as_ref();
    let io_err = |source| AudioError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    write_wav_pcm16_to(&mut file, clip).map_err(io_err)
}

pub fn write_wav_pcm16_to<W: Write>(out: &mut W, clip: &AudioClip) -> std::io::Result<()> {
    let data_len = (clip.samples.len() * 2) as u32;
    let mut buf = Vec::with_capacity(44 + data_len as usize);
    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&(36 + data_len).to_le_bytes());
    buf.extend_from_slice(b"WAVE");
    buf.extend_from_slice(b"fmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    buf.extend_from_slice(&1u16.to_le_bytes());
    buf.extend_from_slice(&clip.sample_rate.to_le_bytes());
    buf.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    buf.extend_from_slice(&2u16.to_le_bytes());
    buf.extend_from_slice(&16u16.to_le_bytes());
    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&data_len.to_le_bytes());
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(format: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
        let align = channels * bits / 8;
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&format.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&rate.to_le_bytes());
        b.extend_from_slice(&(rate * u32::from(align)).to_le_bytes());
        b.extend_from_slice(&align.to_le_bytes());
        b.extend_from_slice(&bits.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&(data.len() as u32).to_le_bytes());
        b.extend_from_slice(data);
        b
    }

    #[test]
    fn pcm16_scaling() {
        let data: Vec<u8> = [0i16, 16384, -16384, 32767]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let clip = read_wav(&header(1, 1, 16000, 16, &data)).unwrap();
        assert_eq!(clip.sample_rate, 16000);
        assert_eq!(&clip.samples[..3], &[0.0, 0.5, -0.5]);
        assert!((clip.samples[3] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn pcm24_sign_extension() {
        let data = [0x00, 0x00, 0x80, 0xff, 0xff, 0x7f];
        let clip = read_wav(&header(1, 1, 8000, 24, &data)).unwrap();
        assert_eq!(clip.samples, vec![-1.0, 8_388_607.0 / 8_388_608.0]);
    }

    #[test]
    fn stereo_float_is_averaged() {
        let data: Vec<u8> = [0.5f32, -0.25, 1.0, 0.0]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let clip = read_wav(&header(3, 2, 48000, 32, &data)).unwrap();
        assert_eq!(clip.samples, vec![0.125, 0.5]);
    }

    #[test]
    fn errors_are_distinct() {
        assert!(matches!(
            load_wav("/nonexistent/clip.wav"),
            Err(AudioError::Io { .. })
        ));
        assert!(matches!(
            read_wav(b"RIFX0000WAVE"),
            Err(AudioError::Malformed(_))
        ));
        assert!(matches!(
            read_wav(&header(1, 1, 16000, 8, &[1, 2])),
            Err(AudioError::Unsupported(_))
        ));
        assert!(matches!(
            read_wav(&header(1, 6, 16000, 16, &[0; 12])),
            Err(AudioError::Unsupported(_))
        ));
        assert!(matches!(
            read_wav(&header(3, 1, 16000, 32, &f32::NAN.to_le_bytes())),
            Err(AudioError::Malformed(_))
        ));
    }

    #[test]
    fn pcm16_write_read_round_trip() {
        let clip = AudioClip::new(vec![0.0, 0.5, -0.5, -1.0, 2.0], 16000).unwrap();
        let mut buf = Vec::new();
        write_wav_pcm16_to(&mut buf, &clip).unwrap();
        let back = read_wav(&buf).unwrap();
        assert_eq!(back.samples, vec![0.0, 0.5, -0.5, -1.0, 32767.0 / 32768.0]);
    }
}
