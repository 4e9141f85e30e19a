use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub weighted: bool,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

pub fn train_knn(x: &[Vec<f64>], y: &[usize], k: usize, weighted: bool) -> Result<KnnModel> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if k > x.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds {} training rows",
            x.len()
        )));
    }
    Ok(KnnModel {
        k,
        weighted,
        x: x.to_vec(),
        y: y.to_vec(),
    })
}

impl KnnModel {
    /// Euclidean neighbours, distance ties by row index; vote ties by smaller label.
    pub fn predict(&self, q: &[f64]) -> usize {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let d2: f64 = r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2.sqrt(), i)
            })
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes: Vec<(usize, f64)> = Vec::new();
        for &(d, i) in dist.iter().take(self.k) {
            let w = if self.weighted { 1.0 / (d + 1e-12) } else { 1.0 };
            match votes.iter_mut().find(|v| v.0 == self.y[i]) {
                Some(v) => v.1 += w,
                None => votes.push((self.y[i], w)),
            }
        }
        votes.sort_by_key(|v| v.0);
        let mut best = votes[0];
        for &v in &votes[1..] {
            if v.1 > best.1 {
                best = v;
            }
        }
        best.0
    }
}
