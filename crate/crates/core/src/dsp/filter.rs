use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Normalized biquad coefficients (`a0 = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Direct form II transposed pass with initial state `z`.
    fn run(&self, x: &[f64], mut z: [f64; 2]) -> Vec<f64> {
        x.iter()
            .map(|&v| {
                let y = self.b[0] * v + z[0];
                z[0] = self.b[1] * v - self.a[0] * y + z[1];
                z[1] = self.b[2] * v - self.a[1] * y;
                y
            })
            .collect()
    }

    /// State that makes a constant unit input produce its steady-state output.
    fn steady_state(&self) -> [f64; 2] {
        let gain = self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1]);
        [gain - self.b[0], self.b[2] - self.a[1] * gain]
    }

    /// Zero-phase forward-backward filtering with odd-extension padding.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = 9.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let zi = self.steady_state();
        let scale = |z: [f64; 2], s: f64| [z[0] * s, z[1] * s];
        let mut fwd = self.run(&ext, scale(zi, ext[0]));
        fwd.reverse();
        let mut back = self.run(&fwd, scale(zi, fwd[0]));
        back.reverse();
        back[pad..pad + n].to_vec()
    }
}

/// Second-order Butterworth high-pass via the bilinear transform.
pub fn butterworth_highpass_coeffs(cutoff: f64, sample_rate: f64) -> Biquad {
    let w0 = 2.0 * PI * cutoff / sample_rate;
    let alpha = w0.sin() / (2.0 * FRAC_1_SQRT_2);
    let cos = w0.cos();
    let a0 = 1.0 + alpha;
    Biquad {
        b: [(1.0 + cos) / 2.0 / a0, -(1.0 + cos) / a0, (1.0 + cos) / 2.0 / a0],
        a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
    }
}

/// Zero-phase 2nd-order Butterworth high-pass. Length is preserved.
pub fn high_pass_filter(samples: &[f64], sample_rate: u32, cutoff: f64) -> Vec<f64> {
    assert!(
        cutoff > 0.0 && cutoff < sample_rate as f64 / 2.0,
        "cutoff must lie in (0, nyquist)"
    );
    butterworth_highpass_coeffs(cutoff, sample_rate as f64).filtfilt(samples)
}
