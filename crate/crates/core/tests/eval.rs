use std::collections::{HashMap, HashSet};

use birdsong_core::classify::argmax;
use birdsong_core::eval::*;
use birdsong_core::seed;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn one_hot(c: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| if i == c { 1.0 } else { 0.0 }).collect()
}

#[test]
fn seven_sample_confusion_by_hand() {
    // Rows: true class, columns: predicted class.
    //   [[2, 1, 0],
    //    [0, 2, 0],
    //    [1, 0, 1]]
    let pairs = [(0, 0), (0, 0), (0, 1), (1, 1), (1, 1), (2, 0), (2, 2)];
    let labels: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let probs: Vec<Vec<f64>> = pairs.iter().map(|p| one_hot(p.1, 3)).collect();
    let m = compute_metrics(&probs, &labels, 3, &[1, 2, 3]).unwrap();
    assert_eq!(m.confusion, vec![vec![2, 1, 0], vec![0, 2, 0], vec![1, 0, 1]]);
    assert!((m.accuracy - 5.0 / 7.0).abs() < 1e-12);
    let precision = [2.0 / 3.0, 2.0 / 3.0, 1.0];
    let recall = [2.0 / 3.0, 1.0, 0.5];
    for c in 0..3 {
        assert!((m.precision[c] - precision[c]).abs() < 1e-12);
        assert!((m.recall[c] - recall[c]).abs() < 1e-12);
        let f1 = 2.0 * precision[c] * recall[c] / (precision[c] + recall[c]);
        assert!((m.f1[c] - f1).abs() < 1e-12);
    }
    assert_eq!(m.support, vec![3, 2, 2]);
    assert!((m.macro_precision - (2.0 / 3.0 + 2.0 / 3.0 + 1.0) / 3.0).abs() < 1e-12);
    assert!((m.weighted_recall - (3.0 * 2.0 / 3.0 + 2.0 * 1.0 + 2.0 * 0.5) / 7.0).abs() < 1e-12);
    assert_eq!(m.top_k_accuracy[&3], 1.0);
}

fn prob_rows() -> impl Strategy<Value = (usize, Vec<(Vec<f64>, usize)>)> {
    (2usize..7).prop_flat_map(|n| {
        let row = (prop::collection::vec(0.0f64..1.0, n), 0..n);
        (Just(n), prop::collection::vec(row, 1..40))
    })
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s == 0.0 {
        vec![1.0 / v.len() as f64; v.len()]
    } else {
        v.iter().map(|x| x / s).collect()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn top_k_monotone_and_metrics_bounded((n, rows) in prob_rows()) {
        let probs: Vec<Vec<f64>> = rows.iter().map(|r| normalized(&r.0)).collect();
        let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let ks: Vec<usize> = (1..=n).collect();
        let m = compute_metrics(&probs, &labels, n, &ks).unwrap();
        for w in ks.windows(2) {
            prop_assert!(m.top_k_accuracy[&w[0]] <= m.top_k_accuracy[&w[1]]);
        }
        prop_assert_eq!(m.top_k_accuracy[&n], 1.0);
        prop_assert_eq!(m.top_k_accuracy[&1], m.accuracy);
        let lo = m.f1.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = m.f1.iter().copied().fold(0.0, f64::max);
        prop_assert!(lo - 1e-12 <= m.macro_f1 && m.macro_f1 <= hi + 1e-12);
        for (c, row) in m.confusion.iter().enumerate() {
            prop_assert_eq!(row.iter().sum::<usize>(), m.support[c]);
        }
        for v in m.precision.iter().chain(&m.recall).chain(&m.f1) {
            prop_assert!((0.0..=1.0).contains(v));
        }
        let trace: usize = (0..n).map(|c| m.confusion[c][c]).sum();
        prop_assert!((m.accuracy - trace as f64 / labels.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn voting_ignores_clip_order((n, rows) in prob_rows(), s in any::<u64>(), probability in any::<bool>()) {
        let mode = if probability { VoteMode::Probability } else { VoteMode::Majority };
        let clips: Vec<Vec<f64>> = rows.iter().map(|r| normalized(&r.0)).collect();
        let mut shuffled = clips.clone();
        shuffled.shuffle(&mut seed::rng(s));
        let (a, sa) = vote(&clips, mode).unwrap();
        let (b, sb) = vote(&shuffled, mode).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(sa, sb);
        prop_assert!(a < n);
    }

    #[test]
    fn single_clip_vote_is_argmax((_n, rows) in prob_rows(), probability in any::<bool>()) {
        let mode = if probability { VoteMode::Probability } else { VoteMode::Majority };
        let ids: Vec<String> = (0..rows.len()).map(|i| format!("rec{i}")).collect();
        let probs: Vec<Vec<f64>> = rows.iter().map(|r| normalized(&r.0)).collect();
        let verdicts = vote_audio(&group_by_recording(&ids, &probs), mode).unwrap();
        for (v, p) in verdicts.iter().zip(&probs) {
            prop_assert_eq!(v.class, argmax(p));
        }
    }

    #[test]
    fn grouped_split_keeps_recordings_whole(
        recs in prop::collection::vec((0usize..4, 1usize..6), 1..40),
        s in any::<u64>(),
    ) {
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for (r, &(class, clips)) in recs.iter().enumerate() {
            for _ in 0..clips {
                labels.push(format!("c{class}"));
                groups.push(format!("r{r}"));
            }
        }
        let spec = SplitSpec { seed: s, ..SplitSpec::default() };
        let (p, _) = split_indices(&labels, Some(groups.as_slice()), &spec).unwrap();
        let mut all: Vec<usize> = p.train.iter().chain(&p.val).chain(&p.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        let mut home: HashMap<&str, usize> = HashMap::new();
        for (part, idx) in [&p.train, &p.val, &p.test].into_iter().enumerate() {
            for &i in idx {
                prop_assert_eq!(*home.entry(groups[i].as_str()).or_insert(part), part);
            }
        }
    }

    #[test]
    fn grouped_folds_partition_items(
        recs in prop::collection::vec((0usize..3, 1usize..5), 5..30),
        k in 2usize..6,
        s in any::<u64>(),
    ) {
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for (r, &(class, clips)) in recs.iter().enumerate() {
            for _ in 0..clips {
                labels.push(class);
                groups.push(format!("r{r}"));
            }
        }
        let folds = kfold(&labels, Some(groups.as_slice()), k, s).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = HashSet::new();
        for (train, test) in &folds {
            prop_assert_eq!(train.len() + test.len(), labels.len());
            let test_groups: HashSet<&str> = test.iter().map(|&i| groups[i].as_str()).collect();
            for &i in train {
                prop_assert!(!test_groups.contains(groups[i].as_str()));
            }
            for &i in test {
                prop_assert!(seen.insert(i));
            }
        }
        prop_assert_eq!(seen.len(), labels.len());
    }
}
