use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{AugmentError, ClipRecord, Transform};

/// Adds white Gaussian noise with variance `mean(x^2) / 10^(snr_db/10)`.
pub fn add_gaussian_noise(clip: &ClipRecord, snr_db: f64, seed: u64) -> Result<ClipRecord, AugmentError> {
    let x = &clip.audio.samples;
    let power = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    if power <= 0.0 {
        return Err(AugmentError::SilentClip);
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = x
        .iter()
        .map(|v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            v + sigma * n
        })
        .collect();
    Ok(clip.with_audio(noisy, Transform::Gaussian { snr_db }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{AudioBuffer, Category};
    use crate::augment::{Branch, ClipSource};

    fn clip(samples: Vec<f64>) -> ClipRecord {
        ClipRecord {
            source: ClipSource {
                id: "n".into(),
                label: "A".into(),
                category: Category::Other,
            },
            start_s: 0.0,
            end_s: 1.0,
            branch: Branch::Variant,
            augmentations: vec![],
            audio: AudioBuffer::mono(samples, 22050),
        }
    }

    #[test]
    fn silent_rejected() {
        assert!(matches!(
            add_gaussian_noise(&clip(vec![0.0; 10]), 20.0, 1),
            Err(AugmentError::SilentClip)
        ));
    }

    #[test]
    fn seeded_and_tagged() {
        let c = clip(vec![1.0, -1.0, 1.0, -1.0]);
        let a = add_gaussian_noise(&c, 20.0, 9).unwrap();
        let b = add_gaussian_noise(&c, 20.0, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.augmentations, vec![Transform::Gaussian { snr_db: 20.0 }]);
        assert_ne!(a.audio.samples, add_gaussian_noise(&c, 20.0, 10).unwrap().audio.samples);
    }
}
