use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{DspError, SpectrogramParams};

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Index into a signal of length `len` under repeated reflection about the
/// end samples (edge samples are not duplicated).
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// STFT with the framing taken from `params`.
pub fn stft(samples: &[f64], params: &SpectrogramParams) -> Result<Array2<Complex64>, DspError> {
    stft_frames(samples, params.n_fft, params.hop)
}

/// Hann-windowed, reflect-centered STFT.
///
/// Frame `t` is centered on sample `t * hop`; the result has shape
/// `[n_fft/2 + 1, len/hop + 1]`.
pub fn stft_frames(samples: &[f64], n_fft: usize, hop: usize) -> Result<Array2<Complex64>, DspError> {
    if samples.is_empty() {
        return Err(DspError::EmptySignal);
    }
    let n_bins = n_fft / 2 + 1;
    let n_frames = samples.len() / hop + 1;
    let half = (n_fft / 2) as isize;
    let window = hann_window(n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut out = Array2::<Complex64>::zeros((n_bins, n_frames));
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for t in 0..n_frames {
        let start = (t * hop) as isize - half;
        for (j, b) in buf.iter_mut().enumerate() {
            let idx = reflect_index(start + j as isize, samples.len());
            *b = Complex64::new(samples[idx] * window[j], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for k in 0..n_bins {
            out[[k, t]] = buf[k];
        }
    }
    Ok(out)
}

/// Inverse of [`stft_frames`] by weighted overlap-add, trimmed to `length`.
pub fn istft(spec: &Array2<Complex64>, n_fft: usize, hop: usize, length: usize) -> Vec<f64> {
    let (n_bins, n_frames) = spec.dim();
    assert_eq!(n_bins, n_fft / 2 + 1, "bin count does not match n_fft");
    let half = n_fft / 2;
    let window = hann_window(n_fft);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n_fft);
    let total = n_fft + hop * n_frames.saturating_sub(1);
    let mut acc = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    for t in 0..n_frames {
        for k in 0..n_bins {
            buf[k] = spec[[k, t]];
        }
        // Hermitian completion; DC and Nyquist must be real.
        buf[0].im = 0.0;
        if n_fft % 2 == 0 {
            buf[half].im = 0.0;
        }
        for k in 1..(n_fft - n_bins + 1) {
            buf[n_fft - k] = buf[k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let off = t * hop;
        for j in 0..n_fft {
            acc[off + j] += buf[j].re / n_fft as f64 * window[j];
            norm[off + j] += window[j] * window[j];
        }
    }
    (0..length)
        .map(|i| {
            let p = i + half;
            if p < total && norm[p] > 1e-10 {
                acc[p] / norm[p]
            } else {
                0.0
            }
        })
        .collect()
}
