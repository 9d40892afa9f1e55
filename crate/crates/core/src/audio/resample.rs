use std::f64::consts::PI;

use super::AudioBuffer;

/// Kaiser window shape parameter.
pub const KAISER_BETA: f64 = 8.6;
/// Taps per output sample.
pub const SINC_TAPS: usize = 64;

/// Band-limited resampling to `target_rate`. Channels are resampled
/// independently; equal rates return the input untouched.
pub fn resample(buffer: &AudioBuffer, target_rate: u32) -> AudioBuffer {
    assert!(target_rate > 0, "target rate must be positive");
    if buffer.sample_rate == target_rate {
        return buffer.clone();
    }
    let frames = buffer.frames();
    let out_frames =
        (frames as f64 * target_rate as f64 / buffer.sample_rate as f64).round() as usize;
    let ch = buffer.channels.max(1) as usize;
    let mut out = vec![0.0; out_frames * ch];
    for c in 0..ch {
        let chan: Vec<f64> = buffer.samples.iter().skip(c).step_by(ch).copied().collect();
        for (j, v) in resample_to_len(&chan, out_frames).into_iter().enumerate() {
            out[j * ch + c] = v;
        }
    }
    AudioBuffer {
        samples: out,
        sample_rate: target_rate,
        channels: buffer.channels,
    }
}

/// Resamples a single channel to exactly `out_len` samples, treating the
/// ratio `out_len / input.len()` as the rate change.
pub fn resample_to_len(input: &[f64], out_len: usize) -> Vec<f64> {
    if input.is_empty() || out_len == 0 {
        return vec![0.0; out_len];
    }
    if out_len == input.len() {
        return input.to_vec();
    }
    let step = input.len() as f64 / out_len as f64;
    let cutoff = (1.0 / step).min(1.0);
    let half = (SINC_TAPS / 2) as isize;
    (0..out_len)
        .map(|j| {
            let t = j as f64 * step;
            let base = t.floor() as isize;
            let mut acc = 0.0;
            let mut norm = 0.0;
            for i in (base - half + 1)..=(base + half) {
                let w = kaiser_sinc_kernel(t - i as f64, cutoff);
                norm += w;
                if i >= 0 && (i as usize) < input.len() {
                    acc += w * input[i as usize];
                }
            }
            if norm.abs() > 1e-12 {
                acc / norm
            } else {
                acc
            }
        })
        .collect()
}

/// Kaiser-windowed sinc evaluated at `offset` input samples from the
/// output instant, for a normalized `cutoff` in `(0, 1]`.
pub fn kaiser_sinc_kernel(offset: f64, cutoff: f64) -> f64 {
    let half = (SINC_TAPS / 2) as f64;
    let x = offset / half;
    if x.abs() > 1.0 {
        return 0.0;
    }
    let window = bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / bessel_i0(KAISER_BETA);
    cutoff * sinc(cutoff * offset) * window
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}
