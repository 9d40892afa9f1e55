use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::audio::DatasetManifest;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub group_by_recording: bool,
    /// Set from the pipeline's top-level seed, never read from config.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            group_by_recording: true,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn ratios(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let r = self.ratios();
        if r.iter().any(|&v| !(v >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(EvalError::InvalidRatios(r));
        }
        Ok(())
    }
}

/// Index lists for the three partitions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// A class with fewer groups than non-empty partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTooSmall {
    pub class: String,
    pub groups: usize,
}

/// Largest-remainder apportionment of `n` over `ratios`. Equal remainders
/// favour earlier partitions, so a tiny class fills train first.
pub fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for i in 0..3 {
        counts[i] = (exact[i] + 1e-9).floor() as usize;
    }
    let mut left = n.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..3).filter(|&i| ratios[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - counts[a] as f64;
        let fb = exact[b] - counts[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Stratified split of items into train/val/test.
///
/// Items sharing a group key always land in the same partition, and the
/// ratios apply to group counts within each class. Without groups every item
/// is its own group. A group's class is the label of its first item.
pub fn split_indices<L: AsRef<str>, G: AsRef<str>>(
    labels: &[L],
    groups: Option<&[G]>,
    spec: &SplitSpec,
) -> Result<(Partition, Vec<ClassTooSmall>), EvalError> {
    spec.validate()?;
    let group_of = |i: usize| -> String {
        match groups {
            Some(g) => g[i].as_ref().to_string(),
            None => i.to_string(),
        }
    };
    // group key -> member indices, in first-appearance order
    let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut first_seen: Vec<String> = Vec::new();
    for i in 0..labels.len() {
        let g = group_of(i);
        let e = members.entry(g.clone()).or_default();
        if e.is_empty() {
            first_seen.push(g);
        }
        e.push(i);
    }
    let mut by_class: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for g in first_seen {
        let label = labels[members[&g][0]].as_ref().to_string();
        by_class.entry(label).or_default().push(g);
    }

    let ratios = spec.ratios();
    let needed = ratios.iter().filter(|&&r| r > 0.0).count();
    let mut rng = seed::derived_rng(spec.seed, &["split"]);
    let mut part = Partition::default();
    let mut warnings = Vec::new();
    for (class, mut gs) in by_class {
        if gs.len() < needed {
            warnings.push(ClassTooSmall {
                class: class.clone(),
                groups: gs.len(),
            });
        }
        gs.shuffle(&mut rng);
        let [n_train, n_val, _] = apportion(gs.len(), &ratios);
        for (rank, g) in gs.iter().enumerate() {
            let dest = if rank < n_train {
                &mut part.train
            } else if rank < n_train + n_val {
                &mut part.val
            } else {
                &mut part.test
            };
            dest.extend(&members[g]);
        }
    }
    part.train.sort_unstable();
    part.val.sort_unstable();
    part.test.sort_unstable();
    Ok((part, warnings))
}

#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub train: DatasetManifest,
    pub val: DatasetManifest,
    pub test: DatasetManifest,
    pub warnings: Vec<ClassTooSmall>,
}

/// Splits recordings (each manifest entry is one group).
pub fn split_dataset(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<DatasetSplit, EvalError> {
    let labels: Vec<&str> = manifest.entries.iter().map(|e| e.species_label.as_str()).collect();
    let ids: Vec<&str> = manifest.entries.iter().map(|e| e.id.as_str()).collect();
    let (p, warnings) = split_indices(&labels, Some(&ids), spec)?;
    let pick = |idx: &[usize]| {
        let keep: std::collections::HashSet<&str> = idx.iter().map(|&i| ids[i]).collect();
        manifest.subset(|e| keep.contains(e.id.as_str()))
    };
    Ok(DatasetSplit {
        train: pick(&p.train),
        val: pick(&p.val),
        test: pick(&p.test),
        warnings,
    })
}

/// Stratified k-fold over items, keeping each group inside one fold.
///
/// When every item is its own group the items are dealt round-robin in
/// class order, which makes fold sizes differ by at most one. Otherwise
/// groups (largest first) go to the fold with the fewest items of their
/// class, then the fewest items overall, then the lowest index.
pub fn kfold<G: AsRef<str>>(
    labels: &[usize],
    groups: Option<&[G]>,
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>, EvalError> {
    let n = labels.len();
    let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let key = groups.map(|g| g[i].as_ref().to_string()).unwrap_or_else(|| i.to_string());
        members.entry(key).or_default().push(i);
    }
    if k < 2 || k > members.len() {
        return Err(EvalError::TooFewItems { k, n: members.len() });
    }
    let mut rng = seed::derived_rng(seed, &["cv"]);
    let mut group_list: Vec<Vec<usize>> = members.into_values().collect();
    group_list.shuffle(&mut rng);
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut fold_of_group = vec![0usize; group_list.len()];
    if group_list.iter().all(|g| g.len() == 1) {
        let mut order: Vec<usize> = (0..group_list.len()).collect();
        order.sort_by_key(|&g| labels[group_list[g][0]]);
        for (pos, &g) in order.iter().enumerate() {
            fold_of_group[g] = pos % k;
        }
    } else {
        let mut order: Vec<usize> = (0..group_list.len()).collect();
        order.sort_by_key(|&g| std::cmp::Reverse(group_list[g].len()));
        let mut class_counts = vec![vec![0usize; n_classes]; k];
        let mut totals = vec![0usize; k];
        for g in order {
            let c = labels[group_list[g][0]];
            let f = (0..k)
                .min_by_key(|&f| (class_counts[f][c], totals[f], f))
                .expect("k >= 2");
            fold_of_group[g] = f;
            class_counts[f][c] += group_list[g].len();
            totals[f] += group_list[g].len();
        }
    }
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let mut test: Vec<usize> = Vec::new();
        let mut train: Vec<usize> = Vec::new();
        for (g, members) in group_list.iter().enumerate() {
            if fold_of_group[g] == f {
                test.extend(members);
            } else {
                train.extend(members);
            }
        }
        test.sort_unstable();
        train.sort_unstable();
        folds.push((train, test));
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_ratios() {
        let labels = vec!["a"; 10];
        let (p, w) = split_indices::<_, &str>(&labels, None, &SplitSpec::default()).unwrap();
        assert_eq!((p.train.len(), p.val.len(), p.test.len()), (8, 1, 1));
        assert!(w.is_empty());
    }

    #[test]
    fn everything_in_train() {
        let labels = vec!["a", "b", "a"];
        let spec = SplitSpec {
            train: 1.0,
            val: 0.0,
            test: 0.0,
            ..Default::default()
        };
        let (p, w) = split_indices::<_, &str>(&labels, None, &spec).unwrap();
        assert_eq!(p.train, vec![0, 1, 2]);
        assert!(w.is_empty());
    }

    #[test]
    fn grouped_clips_stay_together() {
        let labels = vec!["a"; 40];
        let groups = vec!["rec1"; 40];
        let (p, _) = split_indices(&labels, Some(&groups), &SplitSpec::default()).unwrap();
        let sizes = [p.train.len(), p.val.len(), p.test.len()];
        assert!(sizes.contains(&40));
    }

    #[test]
    fn small_class_goes_to_train() {
        let labels = vec!["a", "b", "b"];
        let (p, w) = split_indices::<_, &str>(&labels, None, &SplitSpec::default()).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(p.train, vec![0, 1, 2]);
    }

    #[test]
    fn bad_ratios() {
        let spec = SplitSpec {
            train: 0.5,
            ..Default::default()
        };
        assert!(matches!(
            split_indices::<_, &str>(&["a"], None, &spec),
            Err(EvalError::InvalidRatios(_))
        ));
    }

    #[test]
    fn apportion_rounding() {
        assert_eq!(apportion(10, &[0.8, 0.1, 0.1]), [8, 1, 1]);
        assert_eq!(apportion(7, &[0.8, 0.1, 0.1]), [5, 1, 1]);
        assert_eq!(apportion(2, &[0.8, 0.1, 0.1]), [2, 0, 0]);
        assert_eq!(apportion(40, &[0.8, 0.1, 0.1]), [32, 4, 4]);
    }

    #[test]
    fn five_folds_of_two() {
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let folds = kfold::<&str>(&labels, None, 5, 1).unwrap();
        assert_eq!(folds.len(), 5);
        assert!(folds.iter().all(|(_, t)| t.len() == 2));
    }

    #[test]
    fn leave_one_out() {
        let labels = vec![0, 1, 0, 1];
        let folds = kfold::<&str>(&labels, None, 4, 1).unwrap();
        assert!(folds.iter().all(|(tr, t)| t.len() == 1 && tr.len() == 3));
        assert_eq!(
            kfold::<&str>(&labels, None, 5, 1),
            Err(EvalError::TooFewItems { k: 5, n: 4 })
        );
    }
}
