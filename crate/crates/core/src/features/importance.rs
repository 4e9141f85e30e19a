use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

pub const VARIANCE_CUTOFF: f64 = 0.95;
pub const VARIMAX_TOLERANCE: f64 = 1e-6;
pub const VARIMAX_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct VarimaxResult {
    pub rotated: DMatrix<f64>,
    pub rotation: DMatrix<f64>,
    /// Criterion of the Kaiser-normalised loadings before the first sweep and
    /// after each sweep.
    pub criterion_trace: Vec<f64>,
}

/// Sum over columns of the variance of squared loadings.
pub fn varimax_criterion(l: &DMatrix<f64>) -> f64 {
    let p = l.nrows() as f64;
    l.column_iter()
        .map(|col| {
            let sq: f64 = col.iter().map(|x| x * x).sum::<f64>() / p;
            let quad: f64 = col.iter().map(|x| x.powi(4)).sum::<f64>() / p;
            quad - sq * sq
        })
        .sum()
}

/// Kaiser-normalised Varimax by successive planar rotations. Each planar step
/// maximises the criterion over its pair of columns, so the trace never drops.
pub fn varimax(loadings: &DMatrix<f64>, max_sweeps: usize, tolerance: f64) -> VarimaxResult {
    let (p, k) = loadings.shape();
    let communality: Vec<f64> = loadings
        .row_iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut l = loadings.clone();
    for (j, &h) in communality.iter().enumerate() {
        if h > 0.0 {
            l.row_mut(j).scale_mut(1.0 / h);
        }
    }
    let mut rotation = DMatrix::<f64>::identity(k, k);
    let mut trace = vec![varimax_criterion(&l)];
    let pf = p as f64;

    for _ in 0..max_sweeps {
        let mut largest_angle = 0.0f64;
        for a in 0..k {
            for b in a + 1..k {
                let (mut sa, mut sb, mut sc, mut sd) = (0.0, 0.0, 0.0, 0.0);
                for j in 0..p {
                    let (x, y) = (l[(j, a)], l[(j, b)]);
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    sa += u;
                    sb += v;
                    sc += u * u - v * v;
                    sd += 2.0 * u * v;
                }
                let num = sd - 2.0 * sa * sb / pf;
                let den = sc - (sa * sa - sb * sb) / pf;
                let phi = num.atan2(den) / 4.0;
                if phi.abs() <= f64::EPSILON {
                    continue;
                }
                largest_angle = largest_angle.max(phi.abs());
                let (s, c) = phi.sin_cos();
                rotate_columns(&mut l, a, b, c, s);
                rotate_columns(&mut rotation, a, b, c, s);
            }
        }
        trace.push(varimax_criterion(&l));
        if largest_angle < tolerance {
            break;
        }
    }

    for (j, &h) in communality.iter().enumerate() {
        if h > 0.0 {
            l.row_mut(j).scale_mut(h);
        }
    }
    VarimaxResult {
        rotated: l,
        rotation,
        criterion_trace: trace,
    }
}

fn rotate_columns(m: &mut DMatrix<f64>, a: usize, b: usize, c: f64, s: f64) {
    for j in 0..m.nrows() {
        let (x, y) = (m[(j, a)], m[(j, b)]);
        m[(j, a)] = x * c + y * s;
        m[(j, b)] = -x * s + y * c;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Importance {
    /// Features by descending loading variance.
    pub ranking: Vec<(String, f64)>,
    pub components: usize,
    pub explained_variance: f64,
    pub rotated: bool,
    /// Fewer than two non-zero singular values; the ranking is unrotated.
    pub rank_deficient: bool,
    #[serde(skip)]
    pub loadings: DMatrix<f64>,
    pub criterion_trace: Vec<f64>,
}

/// PCA on the centred `rows`, keeping components up to 95% of the variance,
/// then Varimax on the retained eigenvector block. A feature's importance is
/// `sum_c var_c · L[j,c]^2`, with `var_c` the variance carried by rotated
/// component `c`.
pub fn feature_importance(names: &[String], rows: &[Vec<f64>]) -> Result<Importance> {
    let d = names.len();
    if d < 2 || rows.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "importance needs >= 2 features and >= 3 samples, got {d} and {}",
            rows.len()
        )));
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Input("importance rows have inconsistent width".into()));
    }
    let n = rows.len();
    let mut x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let cov = (x.transpose() * &x) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let mut vectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    for mut col in vectors.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }

    let total: f64 = values.iter().sum();
    let nonzero = values
        .iter()
        .filter(|&&v| v > 1e-12 * values[0].max(f64::MIN_POSITIVE))
        .count();
    let mut components = 0;
    let mut explained = 0.0;
    if total > 0.0 {
        while components < nonzero {
            explained += values[components];
            components += 1;
            if explained / total >= VARIANCE_CUTOFF {
                break;
            }
        }
    }
    let kept = vectors.columns(0, components).into_owned();
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&values[..components]));

    let rank_deficient = nonzero < 2;
    let (loadings, rotation, trace, rotated) = if components >= 2 {
        let vr = varimax(&kept, VARIMAX_MAX_SWEEPS, VARIMAX_TOLERANCE);
        (vr.rotated, vr.rotation, vr.criterion_trace, true)
    } else {
        (kept, DMatrix::identity(components, components), Vec::new(), false)
    };
    let component_var = (rotation.transpose() * &lambda * &rotation).diagonal();

    let mut ranking: Vec<(usize, f64)> = (0..d)
        .map(|j| {
            let score = (0..components)
                .map(|c| component_var[c] * loadings[(j, c)].powi(2))
                .sum();
            (j, score)
        })
        .collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    Ok(Importance {
        ranking: ranking
            .into_iter()
            .map(|(j, s)| (names[j].clone(), s))
            .collect(),
        components,
        explained_variance: if total > 0.0 { explained / total } else { 0.0 },
        rotated,
        rank_deficient,
        loadings,
        criterion_trace: trace,
    })
}
