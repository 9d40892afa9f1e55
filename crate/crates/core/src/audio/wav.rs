use std::io::Cursor;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioBuffer, AudioError};

/// Decodes a RIFF/WAVE byte stream (PCM16, PCM24 or float32; mono or stereo).
///
/// Integer samples are scaled by `1 / 2^(bits-1)`; stereo stays interleaved.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, AudioError> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(AudioError::UnsupportedChannels(spec.channels));
    }
    if spec.sample_rate == 0 {
        return Err(AudioError::MalformedContainer("zero sample rate".into()));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) | (SampleFormat::Int, 24) => {
            let scale = 1.0 / (1u32 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(map_hound)?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "{fmt:?} {bits}-bit"
            )))
        }
    };
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(AudioError::MalformedContainer("non-finite sample".into()));
    }
    Ok(AudioBuffer {
        samples,
        sample_rate: spec.sample_rate,
        channels: spec.channels,
    })
}

/// Encodes a buffer as 16-bit PCM, clamping to `[-1, 1)`.
pub fn encode_wav_pcm16(buffer: &AudioBuffer) -> Vec<u8> {
    let spec = WavSpec {
        channels: buffer.channels.max(1),
        sample_rate: buffer.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut out = Cursor::new(Vec::new());
    {
        let mut writer = WavWriter::new(&mut out, spec).expect("in-memory writer");
        for &s in &buffer.samples {
            let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(v).expect("in-memory write");
        }
        writer.finalize().expect("in-memory finalize");
    }
    out.into_inner()
}

fn map_hound(e: hound::Error) -> AudioError {
    match e {
        hound::Error::Unsupported => AudioError::UnsupportedEncoding("compressed or unknown format".into()),
        hound::Error::FormatError(msg) => AudioError::MalformedContainer(msg.to_string()),
        hound::Error::TooWide => AudioError::UnsupportedEncoding("sample too wide".into()),
        hound::Error::UnfinishedSample => AudioError::MalformedContainer("truncated sample".into()),
        hound::Error::InvalidSampleFormat => AudioError::UnsupportedEncoding("invalid sample format".into()),
        hound::Error::IoError(err) => AudioError::MalformedContainer(err.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcm16_bytes(values: &[i16], channels: u16, rate: u32) -> Vec<u8> {
        let spec = WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut out = Cursor::new(Vec::new());
        let mut w = WavWriter::new(&mut out, spec).unwrap();
        for &v in values {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        out.into_inner()
    }

    #[test]
    fn pcm16_scaling() {
        let b = decode_wav(&pcm16_bytes(&[32767, 0, -32768], 1, 22050)).unwrap();
        assert_eq!(b.samples, vec![32767.0 / 32768.0, 0.0, -1.0]);
        assert_eq!(b.sample_rate, 22050);
    }

    #[test]
    fn stereo_header_readback() {
        let vals = vec![0i16; 44100 * 2];
        let b = decode_wav(&pcm16_bytes(&vals, 2, 44100)).unwrap();
        assert_eq!(b.frames(), 44100);
        assert_eq!(b.channels, 2);
        assert_eq!(b.sample_rate, 44100);
    }

    #[test]
    fn pcm24_and_float() {
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let mut out = Cursor::new(Vec::new());
        let mut w = WavWriter::new(&mut out, spec).unwrap();
        w.write_sample(1i32 << 22).unwrap();
        w.write_sample(-(1i32 << 23)).unwrap();
        w.finalize().unwrap();
        let b = decode_wav(&out.into_inner()).unwrap();
        assert_eq!(b.samples, vec![0.5, -1.0]);

        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut out = Cursor::new(Vec::new());
        let mut w = WavWriter::new(&mut out, spec).unwrap();
        w.write_sample(0.25f32).unwrap();
        w.finalize().unwrap();
        assert_eq!(decode_wav(&out.into_inner()).unwrap().samples, vec![0.25]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            decode_wav(b"RIFX\0\0\0\0junk"),
            Err(AudioError::MalformedContainer(_))
        ));
    }

    #[test]
    fn rejects_compressed() {
        // Minimal RIFF with a fmt chunk declaring format tag 0x55 (MP3).
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&36u32.to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&0x55u16.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&8000u32.to_le_bytes());
        b.extend_from_slice(&16000u32.to_le_bytes());
        b.extend_from_slice(&2u16.to_le_bytes());
        b.extend_from_slice(&16u16.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            decode_wav(&b),
            Err(AudioError::UnsupportedEncoding(_))
        ));
    }

    #[test]
    fn pcm16_round_trip() {
        let vals: Vec<i16> = (-300..300).map(|v| (v * 97) as i16).collect();
        let decoded = decode_wav(&pcm16_bytes(&vals, 1, 16000)).unwrap();
        let again = decode_wav(&encode_wav_pcm16(&decoded)).unwrap();
        assert_eq!(decoded, again);
    }
}
