use ndarray::Array2;

use super::mel::{log_amplitude, log_amplitude_with_ref, MelSpectrogram, DB_FLOOR};

pub const IMAGE_SIZE: usize = 64;

/// A 64×64 grayscale rendering of a mel spectrogram, row-major with the
/// highest mel band in row 0 and time running left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipImage {
    pub pixels: Vec<f64>,
    pub source_clip: String,
}

impl ClipImage {
    pub fn new(pixels: Vec<f64>, source_clip: impl Into<String>) -> Self {
        assert_eq!(pixels.len(), IMAGE_SIZE * IMAGE_SIZE, "image must be 64x64");
        Self {
            pixels,
            source_clip: source_clip.into(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * IMAGE_SIZE + col]
    }

    /// Binary PGM (P5), 8 bits per pixel.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{IMAGE_SIZE} {IMAGE_SIZE}\n255\n").into_bytes();
        out.extend(
            self.pixels
                .iter()
                .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }

    /// Parses a 64×64 8-bit P5 image as written by [`ClipImage::to_pgm`].
    pub fn from_pgm(bytes: &[u8], source_clip: impl Into<String>) -> Option<Self> {
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return None;
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
        }
        let dims_ok = fields[0] == "P5"
            && fields[1].parse() == Ok(IMAGE_SIZE)
            && fields[2].parse() == Ok(IMAGE_SIZE)
            && fields[3] == "255";
        let data = bytes.get(pos + 1..)?;
        if !dims_ok || data.len() != IMAGE_SIZE * IMAGE_SIZE {
            return None;
        }
        Some(Self::new(
            data.iter().map(|&b| b as f64 / 255.0).collect(),
            source_clip,
        ))
    }
}

/// Renders with the clip's own maximum as the 0 dB reference.
pub fn render_image(spec: &MelSpectrogram) -> ClipImage {
    resize_db(&log_amplitude(&spec.power))
}

/// Renders against a fixed power reference.
pub fn render_image_with_ref(spec: &MelSpectrogram, reference: f64) -> ClipImage {
    resize_db(&log_amplitude_with_ref(&spec.power, reference))
}

fn resize_db(db: &Array2<f64>) -> ClipImage {
    let (rows, cols) = db.dim();
    assert!(rows > 0 && cols > 0, "empty spectrogram");
    let unit = db.mapv(|v| (v - DB_FLOOR) / -DB_FLOOR);
    let coord = |i: usize, n: usize| {
        if n == 1 {
            0.0
        } else {
            i as f64 * (n - 1) as f64 / (IMAGE_SIZE - 1) as f64
        }
    };
    let mut pixels = vec![0.0; IMAGE_SIZE * IMAGE_SIZE];
    for r in 0..IMAGE_SIZE {
        let y = coord(IMAGE_SIZE - 1 - r, rows);
        let (y0, fy) = (y.floor() as usize, y.fract());
        let y1 = (y0 + 1).min(rows - 1);
        for c in 0..IMAGE_SIZE {
            let x = coord(c, cols);
            let (x0, fx) = (x.floor() as usize, x.fract());
            let x1 = (x0 + 1).min(cols - 1);
            let top = unit[[y0, x0]] * (1.0 - fx) + unit[[y0, x1]] * fx;
            let bottom = unit[[y1, x0]] * (1.0 - fx) + unit[[y1, x1]] * fx;
            pixels[r * IMAGE_SIZE + c] = (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0);
        }
    }
    ClipImage::new(pixels, "")
}

pub fn pixel_std(image: &ClipImage) -> f64 {
    let n = image.pixels.len() as f64;
    let mean = image.pixels.iter().sum::<f64>() / n;
    (image.pixels.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Drops near-uniform images (pixel standard deviation below `min_std`).
pub fn filter_low_feature(images: Vec<ClipImage>, min_std: f64) -> Vec<ClipImage> {
    images
        .into_iter()
        .filter(|im| pixel_std(im) >= min_std)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SpectrogramParams;

    fn spec(power: Array2<f64>) -> MelSpectrogram {
        MelSpectrogram {
            power,
            params: SpectrogramParams::default(),
        }
    }

    #[test]
    fn uniform_and_zero() {
        let im = render_image(&spec(Array2::from_elem((30, 87), 3.0)));
        assert!(im.pixels.iter().all(|&p| p == 1.0));
        let im = render_image(&spec(Array2::zeros((30, 87))));
        assert!(im.pixels.iter().all(|&p| p == 0.0));
        assert_eq!(im.pixels.len(), 64 * 64);
    }

    #[test]
    fn low_frequencies_at_bottom() {
        let mut p = Array2::from_elem((30, 10), 1e-9);
        p.row_mut(0).fill(1.0);
        let im = render_image(&spec(p));
        assert_eq!(im.get(63, 5), 1.0);
        assert!(im.get(0, 5) < 0.1);
    }

    #[test]
    fn single_frame_spectrogram() {
        let im = render_image(&spec(Array2::from_elem((30, 1), 1.0)));
        assert!(im.pixels.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn pgm_round_trip() {
        let pixels: Vec<f64> = (0..4096).map(|i| (i % 256) as f64 / 255.0).collect();
        let im = ClipImage::new(pixels, "x");
        let back = ClipImage::from_pgm(&im.to_pgm(), "x").unwrap();
        assert_eq!(back, im);
        assert!(ClipImage::from_pgm(b"P5\n32 32\n255\n", "x").is_none());
    }

    #[test]
    fn low_feature_filter() {
        let flat = ClipImage::new(vec![0.4; 4096], "flat");
        let checker = ClipImage::new(
            (0..4096).map(|i| ((i / 64 + i % 64) % 2) as f64).collect(),
            "checker",
        );
        assert!((pixel_std(&checker) - 0.5).abs() < 1e-12);
        let kept = filter_low_feature(vec![flat, checker], 0.02);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].source_clip, "checker");
    }
}
