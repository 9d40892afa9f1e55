use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::par;

/// k-nearest-neighbour classifier over z-scored features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub n_classes: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Zero-variance columns, excluded from distances.
    pub constant: Vec<bool>,
    /// Normalized training points, row-major `[n, dim]`.
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

pub fn knn_fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, k: usize) -> Result<KnnModel, ModelError> {
    if x.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if x.len() != y.len() {
        return Err(ModelError::ShapeMismatch(format!("{} rows, {} labels", x.len(), y.len())));
    }
    if k == 0 || k > x.len() {
        return Err(ModelError::InvalidK { k, n: x.len() });
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(ModelError::ShapeMismatch("ragged feature rows".into()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(ModelError::ShapeMismatch(format!("label {bad} >= {n_classes} classes")));
    }
    let n = x.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..dim)
        .map(|j| (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    let constant: Vec<bool> = std.iter().map(|&s| !(s > 1e-12)).collect();
    let mut model = KnnModel {
        k,
        n_classes,
        mean,
        std,
        constant,
        points: Vec::new(),
        labels: y.to_vec(),
    };
    model.points = x.iter().map(|r| model.normalize(r)).collect();
    Ok(model)
}

impl KnnModel {
    /// z-scores `x`; constant columns become 0.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.constant[j] {
                    0.0
                } else {
                    (v - self.mean[j]) / self.std[j]
                }
            })
            .collect()
    }

    /// Training indices of the `k` nearest points; equal distances resolve
    /// to the lower training index.
    pub fn neighbours(&self, x: &[f64]) -> Vec<usize> {
        let q = self.normalize(x);
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(self.k);
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// Class frequencies among the `k` nearest neighbours.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for i in self.neighbours(x) {
            p[self.labels[i]] += 1.0;
        }
        p.iter_mut().for_each(|v| *v /= self.k as f64);
        p
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        par::map(xs, |x| self.predict_proba(x))
    }
}
