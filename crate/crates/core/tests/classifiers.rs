use birdsong_core::classify::cnn::layers::*;
use birdsong_core::classify::*;
use birdsong_core::seed;
use rand::Rng;

const H: f64 = 1e-4;
const TOL: f64 = 1e-3;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

/// Central differences of `f` at `x`, compared against `analytic`.
fn max_fd_error(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + H;
        let up = f(&xp);
        xp[i] = x[i] - H;
        let down = f(&xp);
        xp[i] = x[i];
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * H)));
    }
    worst
}

fn random(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn conv_layer_gradients() {
    let (c_in, h, w, c_out, k) = (2, 6, 5, 3, 3);
    let x = random(c_in * h * w, 1);
    let wt = random(c_out * c_in * k * k, 2);
    let b = random(c_out, 3);
    let r = random(c_out * (h - 2) * (w - 2), 4);
    let g = conv2d_backward(&x, c_in, h, w, &wt, c_out, k, &r, true);
    let obj_x = |v: &[f64]| dot(&conv2d_forward(v, c_in, h, w, &wt, &b, c_out, k), &r);
    let obj_w = |v: &[f64]| dot(&conv2d_forward(&x, c_in, h, w, v, &b, c_out, k), &r);
    let obj_b = |v: &[f64]| dot(&conv2d_forward(&x, c_in, h, w, &wt, v, c_out, k), &r);
    assert!(max_fd_error(obj_x, &x, g.input.as_ref().unwrap()) < TOL);
    assert!(max_fd_error(obj_w, &wt, &g.weight) < TOL);
    assert!(max_fd_error(obj_b, &b, &g.bias) < TOL);
}

#[test]
fn relu_layer_gradients() {
    // Keep inputs away from the kink.
    let x: Vec<f64> = random(40, 5).into_iter().map(|v| if v.abs() < 0.05 { 0.5 } else { v }).collect();
    let r = random(40, 6);
    let mut y = x.clone();
    relu(&mut y);
    let mut g = r.clone();
    relu_backward(&mut g, &y);
    let obj = |v: &[f64]| {
        let mut a = v.to_vec();
        relu(&mut a);
        dot(&a, &r)
    };
    assert!(max_fd_error(obj, &x, &g) < TOL);
}

#[test]
fn maxpool_layer_gradients() {
    let (c, h, w) = (2, 6, 7);
    let x = random(c * h * w, 7);
    let (y, idx) = maxpool2_forward(&x, c, h, w);
    let r = random(y.len(), 8);
    let g = maxpool2_backward(&r, &idx, x.len());
    let obj = |v: &[f64]| dot(&maxpool2_forward(v, c, h, w).0, &r);
    assert!(max_fd_error(obj, &x, &g) < TOL);
}

#[test]
fn dense_layer_gradients() {
    let (batch, n_in, n_out) = (3, 5, 4);
    let x = random(batch * n_in, 9);
    let wt = random(n_out * n_in, 10);
    let b = random(n_out, 11);
    let r = random(batch * n_out, 12);
    let (gw, gb, gx) = dense_backward(&x, batch, n_in, &wt, n_out, &r);
    assert!(max_fd_error(|v| dot(&dense_forward(v, batch, n_in, &wt, &b, n_out), &r), &x, &gx) < TOL);
    assert!(max_fd_error(|v| dot(&dense_forward(&x, batch, n_in, v, &b, n_out), &r), &wt, &gw) < TOL);
    assert!(max_fd_error(|v| dot(&dense_forward(&x, batch, n_in, &wt, v, n_out), &r), &b, &gb) < TOL);
}

#[test]
fn output_loss_gradients() {
    let logits = random(12, 13);
    let labels = [0, 2, 1];
    let (_, g) = softmax_cross_entropy(&logits, &labels, 4);
    assert!(max_fd_error(|v| softmax_cross_entropy(v, &labels, 4).0, &logits, &g) < TOL);
    let (_, g) = sigmoid_bce(&logits, &labels, 4);
    assert!(max_fd_error(|v| sigmoid_bce(v, &labels, 4).0, &logits, &g) < TOL);
}

fn miniature(act: FinalActivation) -> CnnArchitecture {
    CnnArchitecture {
        input_size: 10,
        conv1_filters: 3,
        conv2_filters: 4,
        dense_units: 5,
        n_classes: 3,
        final_activation: act,
    }
}

#[test]
fn composed_network_gradients() {
    for act in [FinalActivation::Softmax, FinalActivation::Sigmoid] {
        let model = CnnModel::new(miniature(act), 21).unwrap();
        let imgs: Vec<Vec<f64>> = (0..3).map(|i| random(100, 30 + i).iter().map(|v| v.abs()).collect()).collect();
        let refs: Vec<&[f64]> = imgs.iter().map(|v| v.as_slice()).collect();
        let labels = [0, 1, 2];
        let (_, grads) = model.loss_and_gradients(&refs, &labels).unwrap();
        for t in 0..grads.len() {
            let obj = |v: &[f64]| {
                let mut m = model.clone();
                m.params[t] = v.to_vec();
                m.loss(&refs, &labels).unwrap()
            };
            let err = max_fd_error(obj, &model.params[t], &grads[t]);
            assert!(err < TOL, "{act:?} tensor {t}: relative error {err}");
        }
    }
}

#[test]
fn repeated_steps_reduce_loss() {
    let mut model = CnnModel::new(miniature(FinalActivation::Softmax), 4).unwrap();
    let imgs: Vec<Vec<f64>> = (0..6).map(|i| random(100, 50 + i).iter().map(|v| v.abs()).collect()).collect();
    let refs: Vec<&[f64]> = imgs.iter().map(|v| v.as_slice()).collect();
    let labels = [0, 1, 2, 0, 1, 2];
    let losses: Vec<f64> = (0..50).map(|_| model.train_step(&refs, &labels, 1e-2).unwrap()).collect();
    let increases = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(increases <= 5, "{increases} increases: {losses:?}");
    assert!(losses[49] < losses[0]);
}

#[test]
fn knn_matches_brute_force() {
    let mut rng = seed::rng(77);
    let x: Vec<Vec<f64>> = (0..200).map(|_| (0..16).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    let y: Vec<usize> = (0..200).map(|_| rng.random_range(0..4)).collect();
    let k = 7;
    let model = knn_fit(&x, &y, 4, k).unwrap();
    // Independent normalization and all-pairs search.
    let n = x.len() as f64;
    let mean: Vec<f64> = (0..16).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..16)
        .map(|j| (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    let z = |r: &[f64]| -> Vec<f64> { (0..16).map(|j| (r[j] - mean[j]) / sd[j]).collect() };
    for _ in 0..20 {
        let q: Vec<f64> = (0..16).map(|_| rng.random_range(-3.0..3.0)).collect();
        let qz = z(&q);
        let mut d: Vec<(f64, usize)> = x
            .iter()
            .enumerate()
            .map(|(i, r)| (z(r).iter().zip(&qz).map(|(a, b)| (a - b).powi(2)).sum(), i))
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expect = vec![0.0; 4];
        for &(_, i) in &d[..k] {
            expect[y[i]] += 1.0 / k as f64;
        }
        let got = model.predict_proba(&q);
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }
}

#[test]
fn single_tree_matches_hand_trace() {
    // Two features; class 1 iff x0 > 1.5 and x1 > 0.5.
    let x = vec![
        vec![1.0, 0.0],
        vec![2.0, 0.0],
        vec![1.0, 1.0],
        vec![2.0, 1.0],
        vec![3.0, 1.0],
        vec![3.0, 0.0],
    ];
    let y = vec![0, 0, 0, 1, 1, 0];
    let params = ForestParams {
        n_trees: 1,
        max_features: Some(2),
        seed: 12,
    };
    let forest = forest_fit(&x, &y, 2, &params).unwrap();
    let tree = &forest.trees[0];
    // Walk the stored tree by hand for every training point.
    for row in &x {
        let mut i = 0;
        let counts = loop {
            match &tree.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature as usize] <= *threshold { *left } else { *right } as usize,
                Node::Leaf { counts } => break counts.clone(),
            }
        };
        let total: u32 = counts.iter().sum();
        let expect: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        assert_eq!(forest.predict_proba(row), expect);
    }
    // The bootstrap reported for tree 0 is the one the leaves were built from.
    let boot = bootstrap_indices(12, 0, x.len());
    let leaf_total: u32 = tree
        .nodes
        .iter()
        .map(|n| match n {
            Node::Leaf { counts } => counts.iter().sum(),
            _ => 0,
        })
        .sum();
    assert_eq!(leaf_total as usize, boot.len());
    for (c, want) in [0usize, 1].iter().zip([0u32, 1]) {
        let in_boot = boot.iter().filter(|&&i| y[i] == *c).count() as u32;
        let in_leaves: u32 = tree
            .nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { counts } => counts[want as usize],
                _ => 0,
            })
            .sum();
        assert_eq!(in_boot, in_leaves);
    }
}

#[test]
fn forest_beats_its_trees_out_of_bag() {
    let mut rng = seed::rng(5);
    let x: Vec<Vec<f64>> = (0..120).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let y: Vec<usize> = x.iter().map(|r| usize::from(r[0] + r[1] > 0.0)).collect();
    let params = ForestParams {
        n_trees: 15,
        max_features: None,
        seed: 8,
    };
    let forest = forest_fit(&x, &y, 2, &params).unwrap();
    let train_acc = x.iter().zip(&y).filter(|(r, &c)| argmax(&forest.predict_proba(r)) == c).count() as f64 / 120.0;
    for (t, tree) in forest.trees.iter().enumerate() {
        let boot = bootstrap_indices(8, t, x.len());
        let oob: Vec<usize> = (0..x.len()).filter(|i| !boot.contains(i)).collect();
        let ok = oob.iter().filter(|&&i| argmax(&tree.predict_proba(&x[i])) == y[i]).count();
        assert!(train_acc >= ok as f64 / oob.len() as f64);
    }
}

#[test]
fn loaded_models_predict_identically() {
    let mut rng = seed::rng(3);
    let x: Vec<Vec<f64>> = (0..60).map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<usize> = (0..60).map(|i| i % 3).collect();
    let classes: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
    let models = [
        Model::Knn(knn_fit(&x, &y, 3, 5).unwrap()),
        Model::Forest(
            forest_fit(
                &x,
                &y,
                3,
                &ForestParams {
                    n_trees: 10,
                    max_features: None,
                    seed: 1,
                },
            )
            .unwrap(),
        ),
    ];
    let queries: Vec<Vec<f64>> = (0..100).map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    for model in models {
        let a = ModelArtifact {
            class_table: classes.clone(),
            features: FeatureSettings::default(),
            model,
        };
        let b = load_model(&save_model(&a)).unwrap();
        assert_eq!(a.predict_proba(&queries).unwrap(), b.predict_proba(&queries).unwrap());
    }
    let cnn = ModelArtifact {
        class_table: classes,
        features: FeatureSettings::default(),
        model: Model::Cnn(CnnModel::new(miniature(FinalActivation::Softmax), 2).unwrap()),
    };
    let imgs: Vec<Vec<f64>> = (0..100).map(|i| random(100, 900 + i).iter().map(|v| v.abs()).collect()).collect();
    let back = load_model(&save_model(&cnn)).unwrap();
    assert_eq!(cnn.predict_proba(&imgs).unwrap(), back.predict_proba(&imgs).unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let mut rng = seed::rng(9);
    let x: Vec<Vec<f64>> = (0..80).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<usize> = x.iter().map(|r| usize::from(r[0] > r[1])).collect();
    let params = ForestParams {
        n_trees: 12,
        max_features: None,
        seed: 4,
    };
    let pooled = forest_fit(&x, &y, 2, &params).unwrap();
    let single = birdsong_core::par::with_threads(1, || forest_fit(&x, &y, 2, &params).unwrap());
    assert_eq!(pooled, single);

    let model = CnnModel::new(miniature(FinalActivation::Softmax), 6).unwrap();
    let imgs: Vec<Vec<f64>> = (0..5).map(|i| random(100, 60 + i)).collect();
    let refs: Vec<&[f64]> = imgs.iter().map(|v| v.as_slice()).collect();
    let labels = [0, 1, 2, 0, 1];
    let pooled = model.loss_and_gradients(&refs, &labels).unwrap();
    let single = birdsong_core::par::with_threads(1, || model.loss_and_gradients(&refs, &labels).unwrap());
    assert_eq!(pooled, single);
}
