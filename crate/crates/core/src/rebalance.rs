//! Class rebalancing: random downsampling, SMOTE followed by Tomek-link
//! cleaning, and a mixed strategy that trims majority classes and
//! oversamples minority ones.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RebalanceError {
    #[error("class {class} has {count} sample(s); SMOTE needs at least 2")]
    TooFewSamples { class: usize, count: usize },
    #[error("invalid targets: low {low} > high {high}")]
    InvalidTargets { low: usize, high: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledItem<T> {
    pub value: T,
    pub label: usize,
    /// True for items synthesized by oversampling.
    pub synthetic: bool,
}

/// Items with class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    pub items: Vec<LabeledItem<T>>,
}

impl<T> LabeledSet<T> {
    pub fn new(pairs: impl IntoIterator<Item = (T, usize)>) -> Self {
        Self {
            items: pairs
                .into_iter()
                .map(|(value, label)| LabeledItem {
                    value,
                    label,
                    synthetic: false,
                })
                .collect(),
        }
    }

    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for it in &self.items {
            *m.entry(it.label).or_insert(0) += 1;
        }
        m
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn indices_by_class(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, it) in self.items.iter().enumerate() {
            m.entry(it.label).or_default().push(i);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    None,
    Downsample,
    SmoteTomek,
    Custom,
}

/// `rebalance.*` configuration keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RebalanceConfig {
    pub strategy: Strategy,
    /// Downsample target, and the lower bound of the custom strategy.
    pub low: usize,
    /// Upper bound of the custom strategy.
    pub high: usize,
    pub k: usize,
}

impl Default for RebalanceConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::None,
            low: 10,
            high: 50,
            k: 5,
        }
    }
}

/// Reduces every class above `target` to exactly `target` items, sampled
/// uniformly without replacement. Relative order is preserved.
pub fn random_downsample<T: Clone>(set: &LabeledSet<T>, target: usize, rng: &mut ChaCha8Rng) -> LabeledSet<T> {
    assert!(target >= 1, "downsample target must be at least 1");
    let mut keep = vec![true; set.items.len()];
    for (_, idx) in set.indices_by_class() {
        if idx.len() > target {
            let mut chosen = vec![false; idx.len()];
            for j in sample(rng, idx.len(), target) {
                chosen[j] = true;
            }
            for (j, &i) in idx.iter().enumerate() {
                keep[i] = chosen[j];
            }
        }
    }
    LabeledSet {
        items: set
            .items
            .iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(it, _)| it.clone())
            .collect(),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices (into `pool`) of the `k` points nearest to `pool[at]`, excluding
/// itself; distance ties go to the lower index.
fn nearest_in(points: &[&[f64]], at: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != at)
        .map(|(j, p)| (sq_dist(points[at], p), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Adds `target - count` SMOTE samples to each class below `target`.
fn smote_to<T>(set: &LabeledSet<T>, target: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<LabeledSet<T>, RebalanceError>
where
    T: AsRef<[f64]> + From<Vec<f64>> + Clone,
{
    let mut out = set.clone();
    for (class, idx) in set.indices_by_class() {
        if idx.len() >= target {
            continue;
        }
        if idx.len() < 2 {
            return Err(RebalanceError::TooFewSamples {
                class,
                count: idx.len(),
            });
        }
        let k = k.clamp(1, idx.len() - 1);
        let members: Vec<&[f64]> = idx.iter().map(|&i| set.items[i].value.as_ref()).collect();
        let neighbours: Vec<Vec<usize>> = par::map_range(members.len(), |m| nearest_in(&members, m, k));
        for _ in 0..target - idx.len() {
            let m = rng.random_range(0..members.len());
            let nn = neighbours[m][rng.random_range(0..neighbours[m].len())];
            let lambda: f64 = rng.random();
            let (x, y) = (members[m], members[nn]);
            let synth: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + lambda * (b - a)).collect();
            out.items.push(LabeledItem {
                value: T::from(synth),
                label: class,
                synthetic: true,
            });
        }
    }
    Ok(out)
}

/// SMOTE phase only: every class is brought up to the largest class count.
pub fn smote<T>(set: &LabeledSet<T>, k: usize, rng: &mut ChaCha8Rng) -> Result<LabeledSet<T>, RebalanceError>
where
    T: AsRef<[f64]> + From<Vec<f64>> + Clone,
{
    let max = set.class_counts().values().copied().max().unwrap_or(0);
    smote_to(set, max, k, rng)
}

/// Index pairs `(i, j)`, `i < j`, of opposite-class mutual nearest neighbours.
pub fn tomek_links<T: AsRef<[f64]> + Sync>(set: &LabeledSet<T>) -> Vec<(usize, usize)> {
    let points: Vec<&[f64]> = set.items.iter().map(|it| it.value.as_ref()).collect();
    if points.len() < 2 {
        return Vec::new();
    }
    let nn: Vec<usize> = par::map_range(points.len(), |i| nearest_in(&points, i, 1)[0]);
    (0..points.len())
        .filter_map(|i| {
            let j = nn[i];
            (i < j && nn[j] == i && set.items[i].label != set.items[j].label).then_some((i, j))
        })
        .collect()
}

fn drop_indices<T: Clone>(set: &LabeledSet<T>, drop: &[usize]) -> LabeledSet<T> {
    let mut keep = vec![true; set.items.len()];
    for &i in drop {
        keep[i] = false;
    }
    LabeledSet {
        items: set
            .items
            .iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(it, _)| it.clone())
            .collect(),
    }
}

/// Result of [`smote_tomek`] with the intermediate SMOTE-only set.
#[derive(Debug, Clone)]
pub struct SmoteTomekOutput<T> {
    pub oversampled: LabeledSet<T>,
    pub cleaned: LabeledSet<T>,
    pub removed_links: Vec<(usize, usize)>,
}

/// SMOTE up to the majority count, then remove both members of every Tomek link.
pub fn smote_tomek<T>(set: &LabeledSet<T>, k: usize, rng: &mut ChaCha8Rng) -> Result<SmoteTomekOutput<T>, RebalanceError>
where
    T: AsRef<[f64]> + From<Vec<f64>> + Clone + Sync,
{
    let oversampled = smote(set, k, rng)?;
    let removed_links = tomek_links(&oversampled);
    let drop: Vec<usize> = removed_links.iter().flat_map(|&(i, j)| [i, j]).collect();
    let cleaned = drop_indices(&oversampled, &drop);
    Ok(SmoteTomekOutput {
        oversampled,
        cleaned,
        removed_links,
    })
}

/// Classes above `high` are downsampled to `high`; classes below `low` are
/// SMOTE-oversampled to `low`.
pub fn custom_rebalance<T>(
    set: &LabeledSet<T>,
    low: usize,
    high: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledSet<T>, RebalanceError>
where
    T: AsRef<[f64]> + From<Vec<f64>> + Clone,
{
    if low > high {
        return Err(RebalanceError::InvalidTargets { low, high });
    }
    let trimmed = random_downsample(set, high.max(1), rng);
    smote_to(&trimmed, low, k, rng)
}

/// Image-path oversampling: duplicates random members of each class below
/// `target` (duplicates are flagged `synthetic`).
pub fn duplicate_oversample<T: Clone>(set: &LabeledSet<T>, target: usize, rng: &mut ChaCha8Rng) -> LabeledSet<T> {
    let mut out = set.clone();
    for (class, idx) in set.indices_by_class() {
        for _ in idx.len()..target {
            let i = idx[rng.random_range(0..idx.len())];
            out.items.push(LabeledItem {
                value: set.items[i].value.clone(),
                label: class,
                synthetic: true,
            });
        }
    }
    out
}

/// Applies the configured strategy to numeric feature rows.
pub fn rebalance_features(
    set: &LabeledSet<Vec<f64>>,
    cfg: &RebalanceConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledSet<Vec<f64>>, RebalanceError> {
    match cfg.strategy {
        Strategy::None => Ok(set.clone()),
        Strategy::Downsample => Ok(random_downsample(set, cfg.low.max(1), rng)),
        Strategy::SmoteTomek => Ok(smote_tomek(set, cfg.k, rng)?.cleaned),
        Strategy::Custom => custom_rebalance(set, cfg.low, cfg.high, cfg.k, rng),
    }
}

/// Applies the configured strategy to opaque items (clip references), using
/// duplication wherever SMOTE would synthesize.
pub fn rebalance_items<T: Clone>(set: &LabeledSet<T>, cfg: &RebalanceConfig, rng: &mut ChaCha8Rng) -> LabeledSet<T> {
    match cfg.strategy {
        Strategy::None => set.clone(),
        Strategy::Downsample => random_downsample(set, cfg.low.max(1), rng),
        Strategy::SmoteTomek => {
            let max = set.class_counts().values().copied().max().unwrap_or(0);
            duplicate_oversample(set, max, rng)
        }
        Strategy::Custom => {
            let trimmed = random_downsample(set, cfg.high.max(1), rng);
            duplicate_oversample(&trimmed, cfg.low, rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;

    fn counts_set(counts: &[(usize, usize)]) -> LabeledSet<Vec<f64>> {
        let mut pairs = Vec::new();
        for &(class, n) in counts {
            for i in 0..n {
                pairs.push((vec![class as f64 * 100.0 + i as f64, (i * i) as f64], class));
            }
        }
        LabeledSet::new(pairs)
    }

    fn counts(set: &LabeledSet<Vec<f64>>) -> Vec<(usize, usize)> {
        set.class_counts().into_iter().collect()
    }

    #[test]
    fn downsample_to_target() {
        let s = counts_set(&[(0, 10), (1, 4)]);
        let d = random_downsample(&s, 4, &mut rng(1));
        assert_eq!(counts(&d), vec![(0, 4), (1, 4)]);
        let s = counts_set(&[(0, 3)]);
        assert_eq!(random_downsample(&s, 5, &mut rng(1)), s);
    }

    #[test]
    fn downsample_deterministic_subset() {
        let s = counts_set(&[(0, 50), (1, 7)]);
        let a = random_downsample(&s, 7, &mut rng(5));
        let b = random_downsample(&s, 7, &mut rng(5));
        assert_eq!(a, b);
        assert!(a.items.iter().all(|it| s.items.contains(it)));
    }

    #[test]
    fn smote_counts_before_tomek() {
        let s = counts_set(&[(0, 10), (1, 4)]);
        let out = smote_tomek(&s, 5, &mut rng(2)).unwrap();
        assert_eq!(counts(&out.oversampled), vec![(0, 10), (1, 10)]);
    }

    #[test]
    fn smote_on_segment_k1() {
        let s = LabeledSet::new(vec![
            (vec![0.0, 0.0], 1),
            (vec![1.0, 1.0], 1),
            (vec![50.0, 0.0], 0),
            (vec![51.0, 0.0], 0),
            (vec![52.0, 0.0], 0),
            (vec![53.0, 0.0], 0),
        ]);
        let out = smote(&s, 1, &mut rng(3)).unwrap();
        for it in out.items.iter().filter(|it| it.synthetic) {
            assert_eq!(it.label, 1);
            assert_eq!(it.value[0], it.value[1]);
            assert!((0.0..=1.0).contains(&it.value[0]));
        }
        assert_eq!(out.items.iter().filter(|it| it.synthetic).count(), 2);
    }

    #[test]
    fn too_few_samples() {
        let s = counts_set(&[(0, 5), (1, 1)]);
        assert_eq!(
            smote(&s, 5, &mut rng(1)).unwrap_err(),
            RebalanceError::TooFewSamples { class: 1, count: 1 }
        );
    }

    #[test]
    fn tomek_pair_detected() {
        let s = LabeledSet::new(vec![
            (vec![0.0], 0),
            (vec![0.1], 1),
            (vec![5.0], 0),
            (vec![5.2], 0),
        ]);
        assert_eq!(tomek_links(&s), vec![(0, 1)]);
    }

    #[test]
    fn custom_rule() {
        let s = counts_set(&[(0, 100), (1, 20), (2, 5)]);
        let out = custom_rebalance(&s, 10, 50, 5, &mut rng(4)).unwrap();
        assert_eq!(counts(&out), vec![(0, 50), (1, 20), (2, 10)]);

        let s = counts_set(&[(0, 12), (1, 20)]);
        assert_eq!(custom_rebalance(&s, 10, 50, 5, &mut rng(4)).unwrap(), s);

        let s = counts_set(&[(0, 30), (1, 4)]);
        let out = custom_rebalance(&s, 8, 8, 5, &mut rng(4)).unwrap();
        assert_eq!(counts(&out), vec![(0, 8), (1, 8)]);

        assert!(custom_rebalance(&s, 9, 8, 5, &mut rng(4)).is_err());
    }

    #[test]
    fn duplication_path() {
        let s = LabeledSet::new(vec![("a", 0), ("b", 0), ("c", 0), ("d", 1)]);
        let cfg = RebalanceConfig {
            strategy: Strategy::SmoteTomek,
            ..Default::default()
        };
        let out = rebalance_items(&s, &cfg, &mut rng(1));
        assert_eq!(out.class_counts().into_iter().collect::<Vec<_>>(), vec![(0, 3), (1, 3)]);
        assert!(out.items.iter().filter(|it| it.synthetic).all(|it| it.value == "d"));
    }
}
