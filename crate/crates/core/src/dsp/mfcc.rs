use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::mel::{log_amplitude, mel_spectrogram};
use super::{DspError, SpectrogramParams};

/// Orthonormal DCT-II computed through a length-N FFT of the even/odd
/// reordered input.
pub fn dct2_ortho(x: &[f64]) -> Vec<f64> {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(x.len());
    dct2_with(&*fft, x)
}

fn dct2_with(fft: &dyn Fft<f64>, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n.div_ceil(2) {
        v[i].re = x[2 * i];
    }
    for i in 0..n / 2 {
        v[n - 1 - i].re = x[2 * i + 1];
    }
    fft.process(&mut v);
    let s0 = (1.0 / n as f64).sqrt();
    let sk = (2.0 / n as f64).sqrt();
    (0..n)
        .map(|k| {
            let w = Complex64::from_polar(1.0, -PI * k as f64 / (2 * n) as f64);
            (v[k] * w).re * if k == 0 { s0 } else { sk }
        })
        .collect()
}

/// Inverse of [`dct2_ortho`] (orthonormal DCT-III), by the same reordering.
pub fn idct2_ortho(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    if n == 0 {
        return Vec::new();
    }
    let s0 = (1.0 / n as f64).sqrt();
    let sk = (2.0 / n as f64).sqrt();
    let raw = |k: usize| c[k] / if k == 0 { s0 } else { sk };
    let mut v: Vec<Complex64> = (0..n)
        .map(|k| {
            let ck = raw(k);
            let cnk = if k == 0 { 0.0 } else { raw(n - k) };
            Complex64::new(ck, -cnk) * Complex64::from_polar(1.0, PI * k as f64 / (2 * n) as f64)
        })
        .collect();
    FftPlanner::<f64>::new().plan_fft_inverse(n).process(&mut v);
    let mut x = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        x[2 * i] = v[i].re / n as f64;
    }
    for i in 0..n / 2 {
        x[2 * i + 1] = v[n - 1 - i].re / n as f64;
    }
    x
}

/// MFCCs of an already dB-scaled mel matrix. Keeps coefficients `1..=n_mfcc`,
/// or `0..n_mfcc` when `include_c0`.
pub fn mfcc_from_db(db: &Array2<f64>, n_mfcc: usize, include_c0: bool) -> Array2<f64> {
    let (n_mels, n_frames) = db.dim();
    let first = usize::from(!include_c0);
    assert!(first + n_mfcc <= n_mels, "n_mfcc exceeds available coefficients");
    let fft: Arc<dyn Fft<f64>> = FftPlanner::<f64>::new().plan_fft_forward(n_mels);
    let mut out = Array2::<f64>::zeros((n_mfcc, n_frames));
    for (t, col) in db.columns().into_iter().enumerate() {
        let frame: Vec<f64> = col.to_vec();
        let coeffs = dct2_with(&*fft, &frame);
        for i in 0..n_mfcc {
            out[[i, t]] = coeffs[first + i];
        }
    }
    out
}

/// `[n_mfcc, n_frames]` cepstral coefficients of the dB mel spectrogram.
pub fn mfcc(
    samples: &[f64],
    n_mfcc: usize,
    params: &SpectrogramParams,
    include_c0: bool,
) -> Result<Array2<f64>, DspError> {
    if n_mfcc + usize::from(!include_c0) > params.n_mels {
        return Err(DspError::InvalidParams(format!(
            "{n_mfcc} coefficients requested from {} mel bands",
            params.n_mels
        )));
    }
    let mel = mel_spectrogram(samples, params)?;
    Ok(mfcc_from_db(&log_amplitude(&mel.power), n_mfcc, include_c0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dct(x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        (0..x.len())
            .map(|k| {
                let s = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                s * x
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                    .sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn matches_naive_for_odd_and_even_lengths() {
        for n in [1, 2, 5, 30, 31] {
            let x: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 17) as f64 - 8.0).collect();
            let fast = dct2_ortho(&x);
            for (a, b) in fast.iter().zip(naive_dct(&x)) {
                assert!((a - b).abs() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        for n in [1, 4, 7, 30] {
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).sin() * 40.0 - 20.0).collect();
            let back = idct2_ortho(&dct2_ortho(&x));
            for (a, b) in x.iter().zip(back) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_frame_has_only_c0() {
        let db = Array2::from_elem((30, 3), -17.5);
        let m = mfcc_from_db(&db, 15, false);
        assert!(m.iter().all(|v| v.abs() < 1e-9));
        let with_c0 = mfcc_from_db(&db, 15, true);
        assert!((with_c0[[0, 0]] - (-17.5 * 30f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn too_many_coefficients() {
        let p = SpectrogramParams::default();
        assert!(mfcc(&[0.0; 4096], 30, &p, false).is_err());
        assert!(mfcc(&[0.0; 4096], 30, &p, true).is_ok());
    }
}
