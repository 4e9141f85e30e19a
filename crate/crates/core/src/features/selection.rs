use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.7;

/// Pearson coefficients between candidate features.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    names: Vec<String>,
    /// Row-major, `names.len()` squared.
    values: Vec<f64>,
    constant: Vec<bool>,
}

impl CorrelationMatrix {
    /// Build from explicit coefficients. `values` is row-major.
    pub fn from_parts(names: Vec<String>, values: Vec<f64>, constant: Vec<bool>) -> Result<Self> {
        let n = names.len();
        if values.len() != n * n || constant.len() != n {
            return Err(Error::Input("correlation matrix shape mismatch".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let r = values[i * n + j];
                if !(-1.0..=1.0).contains(&r) || r != values[j * n + i] {
                    return Err(Error::Input(format!(
                        "entry ({i},{j}) = {r} is out of range or asymmetric"
                    )));
                }
            }
        }
        Ok(CorrelationMatrix {
            names,
            values,
            constant,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.names.len() + j]
    }

    pub fn is_constant(&self, i: usize) -> bool {
        self.constant[i]
    }

    pub fn max_abs_off_diagonal(&self, subset: &[usize]) -> f64 {
        let mut worst = 0.0f64;
        for (a, &i) in subset.iter().enumerate() {
            for &j in &subset[a + 1..] {
                worst = worst.max(self.get(i, j).abs());
            }
        }
        worst
    }
}

/// Pearson matrix over `rows` (one row per sample, columns named by `names`).
/// Zero-variance columns are flagged constant and correlate 0 with everything.
pub fn pearson_matrix(names: &[String], rows: &[Vec<f64>]) -> Result<CorrelationMatrix> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "pearson matrix needs at least 2 samples, got {}",
            rows.len()
        )));
    }
    let d = names.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::Input(format!(
            "row has {} values, expected {d}",
            bad.len()
        )));
    }
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let centered: Vec<Vec<f64>> = (0..d)
        .map(|j| rows.iter().map(|r| r[j] - means[j]).collect())
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let constant: Vec<bool> = (0..d)
        .map(|j| {
            let scale = rows.iter().map(|r| r[j].abs()).fold(1.0, f64::max);
            norms[j] <= 1e-12 * scale * n.sqrt()
        })
        .collect();

    let mut values = vec![0.0; d * d];
    for i in 0..d {
        if constant[i] {
            continue;
        }
        values[i * d + i] = 1.0;
        for j in i + 1..d {
            if constant[j] {
                continue;
            }
            let dot: f64 = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .sum();
            let r = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            values[i * d + j] = r;
            values[j * d + i] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: names.to_vec(),
        values,
        constant,
    })
}

/// Greedy scan in column order: constants are dropped, and a feature is kept
/// iff `|r| <= threshold` against every feature kept before it.
pub fn prune_correlated(m: &CorrelationMatrix, threshold: f64) -> Vec<String> {
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..m.len() {
        if m.is_constant(i) {
            continue;
        }
        if kept.iter().all(|&k| m.get(i, k).abs() <= threshold) {
            kept.push(i);
        }
    }
    kept.into_iter().map(|i| m.names[i].clone()).collect()
}

/// A scaled feature vector; components lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Per-feature training range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_scaler(names: &[String], rows: &[Vec<f64>]) -> Result<ScalingParams> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("scaler needs at least one vector".into()));
    }
    let d = names.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Input("scaler rows have inconsistent width".into()));
    }
    let min = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let max = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(ScalingParams {
        names: names.to_vec(),
        min,
        max,
    })
}

/// `(x - min) / (max - min)` clamped to `[0, 1]`; a constant feature maps to 0.
pub fn apply_scaler(params: &ScalingParams, raw: &[f64]) -> Result<FeatureVector> {
    if raw.len() != params.names.len() {
        return Err(Error::Input(format!(
            "expected {} features, got {}",
            params.names.len(),
            raw.len()
        )));
    }
    Ok(FeatureVector(
        raw.iter()
            .zip(params.min.iter().zip(&params.max))
            .map(|(&x, (&lo, &hi))| {
                let span = hi - lo;
                if span > 0.0 {
                    ((x - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect(),
    ))
}
