use ndarray::Array2;

use super::stft::stft;
use super::{DspError, SpectrogramParams};

/// Lower clamp of the dB scale, relative to the per-clip reference.
pub const DB_FLOOR: f64 = -80.0;
const AMIN: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    /// `[n_mels, n_frames]`, nonnegative.
    pub power: Array2<f64>,
    pub params: SpectrogramParams,
}

/// Triangular, area-normalized mel filters, shape `[n_mels, n_fft/2 + 1]`.
pub fn mel_filterbank(params: &SpectrogramParams) -> Result<Array2<f64>, DspError> {
    params.validate()?;
    let n_bins = params.n_bins();
    let bin_hz = params.sample_rate as f64 / params.n_fft as f64;
    let in_band = (0..n_bins)
        .filter(|&k| {
            let f = k as f64 * bin_hz;
            f >= params.fmin && f <= params.fmax
        })
        .count();
    if in_band < params.n_mels + 2 {
        return Err(DspError::DegenerateBand(format!(
            "{in_band} FFT bins in [{}, {}] Hz for {} mel bands",
            params.fmin, params.fmax, params.n_mels
        )));
    }
    let (mlo, mhi) = (hz_to_mel(params.fmin), hz_to_mel(params.fmax));
    let edges: Vec<f64> = (0..params.n_mels + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (params.n_mels + 1) as f64))
        .collect();
    let mut fb = Array2::<f64>::zeros((params.n_mels, n_bins));
    for m in 0..params.n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        let mut any = false;
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = ((f - lo) / (center - lo)).min((hi - f) / (hi - center));
            if w > 0.0 {
                fb[[m, k]] = w * norm;
                any = true;
            }
        }
        if !any {
            return Err(DspError::DegenerateBand(format!(
                "mel band {m} ({lo:.1}-{hi:.1} Hz) falls between FFT bins"
            )));
        }
    }
    Ok(fb)
}

/// Center frequencies (Hz) of the filters built by [`mel_filterbank`].
pub fn mel_centers(params: &SpectrogramParams) -> Vec<f64> {
    let (mlo, mhi) = (hz_to_mel(params.fmin), hz_to_mel(params.fmax));
    (1..=params.n_mels)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (params.n_mels + 1) as f64))
        .collect()
}

pub fn mel_spectrogram(samples: &[f64], params: &SpectrogramParams) -> Result<MelSpectrogram, DspError> {
    let fb = mel_filterbank(params)?;
    let spec = stft(samples, params)?;
    let power = spec.mapv(|c| c.norm_sqr());
    Ok(MelSpectrogram {
        power: fb.dot(&power),
        params: *params,
    })
}

/// Power to dB relative to the matrix maximum, floored at [`DB_FLOOR`].
///
/// An all-zero matrix maps to the floor everywhere.
pub fn log_amplitude(power: &Array2<f64>) -> Array2<f64> {
    let reference = power.iter().copied().fold(0.0, f64::max);
    log_amplitude_with_ref(power, reference)
}

pub(crate) fn log_amplitude_with_ref(power: &Array2<f64>, reference: f64) -> Array2<f64> {
    if reference <= 0.0 {
        return Array2::from_elem(power.dim(), DB_FLOOR);
    }
    let ref_db = 10.0 * reference.max(AMIN).log10();
    power.mapv(|p| (10.0 * p.max(AMIN).log10() - ref_db).clamp(DB_FLOOR, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mel_scale_anchor() {
        assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.1);
        assert!((mel_to_hz(hz_to_mel(3210.0)) - 3210.0).abs() < 1e-9);
    }

    #[test]
    fn rows_nonnegative_contiguous_increasing() {
        let p = SpectrogramParams::default();
        let fb = mel_filterbank(&p).unwrap();
        assert_eq!(fb.dim(), (30, 1025));
        let mut last_peak = 0;
        for row in fb.rows() {
            assert!(row.iter().all(|&w| w >= 0.0));
            let nz: Vec<usize> = (0..row.len()).filter(|&k| row[k] > 0.0).collect();
            assert!(!nz.is_empty());
            assert_eq!(nz.last().unwrap() - nz[0] + 1, nz.len(), "support not contiguous");
            let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert!(peak > last_peak);
            last_peak = peak;
        }
        let c = mel_centers(&p);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert!(c[0] > p.fmin && *c.last().unwrap() < p.fmax);
    }

    #[test]
    fn no_gaps_inside_band() {
        let p = SpectrogramParams::default();
        let fb = mel_filterbank(&p).unwrap();
        let bin_hz = p.sample_rate as f64 / p.n_fft as f64;
        for k in 0..fb.ncols() {
            let f = k as f64 * bin_hz;
            if f > p.fmin && f < p.fmax {
                assert!(fb.column(k).sum() > 0.0, "column {k} ({f} Hz) empty");
            }
        }
    }

    #[test]
    fn degenerate_band() {
        let p = SpectrogramParams {
            n_fft: 64,
            hop: 16,
            n_mels: 30,
            ..Default::default()
        };
        assert!(matches!(mel_filterbank(&p), Err(DspError::DegenerateBand(_))));
    }

    #[test]
    fn db_reference_and_floor() {
        let db = log_amplitude(&array![[1.0, 0.1], [0.0, 1e-12]]);
        assert_eq!(db[[0, 0]], 0.0);
        assert!((db[[0, 1]] + 10.0).abs() < 1e-12);
        assert_eq!(db[[1, 0]], DB_FLOOR);
        assert_eq!(db[[1, 1]], DB_FLOOR);
        assert!(log_amplitude(&Array2::zeros((2, 2))).iter().all(|&v| v == DB_FLOOR));
    }
}
