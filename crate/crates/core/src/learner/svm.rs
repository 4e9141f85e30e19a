//! C-SVC trained by SMO, one machine per label pair.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SMO_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Quadratic,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub kernel: Kernel,
    pub gamma: f64,
    pub coef0: f64,
}

impl KernelParams {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kernel {
            Kernel::Linear => dot(a, b),
            Kernel::Quadratic => (self.gamma * dot(a, b) + self.coef0).powi(2),
            Kernel::Gaussian => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-self.gamma * d2).exp()
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solution of one binary dual problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
}

/// Iteration cap for an SMO problem with `rows` samples.
pub fn max_iterations(rows: usize) -> usize {
    (100 * rows).max(100_000)
}

/// Solve `min ½αᵀQα − Σα` s.t. `yᵀα = 0`, `0 ≤ α ≤ c`, with `Q_ij = y_i y_j K_ij`.
///
/// Working set: the maximal violating pair, ties by index.
pub fn smo(kernel: &[Vec<f64>], y: &[f64], c: f64, max_iter: usize) -> Result<BinarySolution> {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i][j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let lower = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if upper(alpha[t], y[t]) && v > g_max {
                g_max = v;
                i = t;
            }
            if lower(alpha[t], y[t]) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < SMO_TOLERANCE {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::Convergence { iterations });
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(1e-12);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(1e-12);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    // Offset: mean of y·G over free variables, else the midpoint of the bounds.
    let (mut ub, mut lb, mut sum, mut free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok(BinarySolution {
        alpha,
        rho,
        iterations,
    })
}

/// One binary machine: `f(x) = Σ coef_i K(sv_i, x) − rho`; positive votes `positive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub positive: usize,
    pub negative: usize,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i · y_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
}

impl BinaryMachine {
    pub fn decision(&self, k: &KernelParams, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coef)
            .map(|(sv, c)| c * k.eval(sv, x))
            .sum::<f64>()
            - self.rho
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: KernelParams,
    pub c: f64,
    pub labels: Vec<usize>,
    pub machines: Vec<BinaryMachine>,
}

/// One-vs-one training. Rows must already be in canonical order.
pub fn train_svm(x: &[Vec<f64>], y: &[usize], kernel: KernelParams, c: f64) -> Result<SvmModel> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("penalty C must be > 0, got {c}")));
    }
    let mut labels: Vec<usize> = y.to_vec();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() < 2 {
        return Err(Error::DegenerateDataset(format!(
            "need at least two labels, got {}",
            labels.len()
        )));
    }
    let pairs: Vec<(usize, usize)> = labels
        .iter()
        .enumerate()
        .flat_map(|(a, &la)| labels[a + 1..].iter().map(move |&lb| (la, lb)))
        .collect();
    let machines = pairs
        .par_iter()
        .map(|&(pos, neg)| {
            let idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == pos || y[i] == neg).collect();
            let sub_y: Vec<f64> = idx.iter().map(|&i| if y[i] == pos { 1.0 } else { -1.0 }).collect();
            let gram: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| idx.iter().map(|&j| kernel.eval(&x[i], &x[j])).collect())
                .collect();
            let rows = idx.len();
            let sol = smo(&gram, &sub_y, c, max_iterations(rows))?;
            let mut support_vectors = Vec::new();
            let mut coef = Vec::new();
            for (k, &i) in idx.iter().enumerate() {
                if sol.alpha[k] > 0.0 {
                    support_vectors.push(x[i].clone());
                    coef.push(sol.alpha[k] * sub_y[k]);
                }
            }
            Ok(BinaryMachine {
                positive: pos,
                negative: neg,
                support_vectors,
                coef,
                rho: sol.rho,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmModel {
        kernel,
        c,
        labels,
        machines,
    })
}

impl SvmModel {
    /// Majority vote; ties go to the smaller label.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.labels.len()];
        for m in &self.machines {
            let winner = if m.decision(&self.kernel, x) > 0.0 {
                m.positive
            } else {
                m.negative
            };
            let pos = self.labels.binary_search(&winner).expect("machine label is known");
            votes[pos] += 1;
        }
        let mut best = 0;
        for (i, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = i;
            }
        }
        self.labels[best]
    }
}
