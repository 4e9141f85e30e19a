//! Classifiers from scaled feature vectors to merged label ids.

pub mod knn;
pub mod svm;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{apply_scaler, FeatureVector, ScalingParams};
use crate::labeling::SampleMeta;
use crate::simulator::StreamConfig;

pub use knn::{train_knn, KnnModel};
pub use svm::{train_svm, Kernel, KernelParams, SvmModel};
pub use tree::{train_tree, TreeModel};

pub const MODEL_VERSION: &str = "1";
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LearnerKind {
    #[serde(rename = "svm-quad")]
    SvmQuadratic,
    #[serde(rename = "svm-lin")]
    SvmLinear,
    #[serde(rename = "svm-rbf")]
    SvmGaussian,
    #[serde(rename = "knn")]
    Knn,
    #[serde(rename = "wknn")]
    WeightedKnn,
    #[serde(rename = "tree")]
    Tree,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 6] = [
        LearnerKind::SvmQuadratic,
        LearnerKind::SvmLinear,
        LearnerKind::SvmGaussian,
        LearnerKind::Knn,
        LearnerKind::WeightedKnn,
        LearnerKind::Tree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::SvmQuadratic => "svm-quad",
            LearnerKind::SvmLinear => "svm-lin",
            LearnerKind::SvmGaussian => "svm-rbf",
            LearnerKind::Knn => "knn",
            LearnerKind::WeightedKnn => "wknn",
            LearnerKind::Tree => "tree",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LearnerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown learner `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub kind: LearnerKind,
    pub c: f64,
    pub gamma: f64,
    pub coef0: f64,
    pub knn_k: usize,
    pub tree_max_depth: usize,
    pub tree_min_leaf: usize,
}

impl Hyperparams {
    pub fn new(kind: LearnerKind) -> Self {
        Hyperparams {
            kind,
            c: 10.0,
            gamma: 1.0,
            coef0: 1.0,
            knn_k: 3,
            tree_max_depth: 8,
            tree_min_leaf: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("C must be > 0, got {}", self.c));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.coef0 >= 0.0 && self.coef0.is_finite()) {
            return bad(format!("coef0 must be >= 0, got {}", self.coef0));
        }
        if !(1..=10).contains(&self.knn_k) {
            return bad(format!("k must be in 1..=10, got {}", self.knn_k));
        }
        if self.tree_min_leaf < 1 {
            return bad("tree_min_leaf must be >= 1".into());
        }
        Ok(())
    }

    fn kernel(&self) -> KernelParams {
        let kernel = match self.kind {
            LearnerKind::SvmLinear => Kernel::Linear,
            LearnerKind::SvmGaussian => Kernel::Gaussian,
            _ => Kernel::Quadratic,
        };
        KernelParams {
            kernel,
            gamma: self.gamma,
            coef0: self.coef0,
        }
    }
}

/// The default search grid for a learner kind.
pub fn default_grid(kind: LearnerKind) -> Vec<Hyperparams> {
    let base = Hyperparams::new(kind);
    match kind {
        LearnerKind::SvmQuadratic | LearnerKind::SvmLinear => DEFAULT_C_GRID
            .iter()
            .map(|&c| Hyperparams { c, ..base })
            .collect(),
        LearnerKind::SvmGaussian => DEFAULT_C_GRID
            .iter()
            .flat_map(|&c| [0.5, 2.0, 8.0].map(|gamma| Hyperparams { c, gamma, ..base }))
            .collect(),
        LearnerKind::Knn | LearnerKind::WeightedKnn => (1..=10)
            .map(|knn_k| Hyperparams { knn_k, ..base })
            .collect(),
        LearnerKind::Tree => [2, 4, 6, 8, 12]
            .iter()
            .map(|&tree_max_depth| Hyperparams {
                tree_max_depth,
                ..base
            })
            .collect(),
    }
}

/// Scaled training rows with their labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub meta: Vec<SampleMeta>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<usize>, meta: Vec<SampleMeta>) -> Result<Self> {
        if x.len() != y.len() || x.len() != meta.len() {
            return Err(Error::Input("dataset columns have different lengths".into()));
        }
        if let Some(first) = x.first() {
            if x.iter().any(|r| r.len() != first.len()) {
                return Err(Error::Input("feature vectors differ in dimension".into()));
            }
        }
        Ok(Dataset { x, y, meta })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            meta: idx.iter().map(|&i| self.meta[i].clone()).collect(),
        }
    }

    /// Rows sorted by (features, label) so training ignores input order.
    fn canonical(&self) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.x[a]
                .iter()
                .zip(&self.x[b])
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(self.y[a].cmp(&self.y[b]))
        });
        (
            idx.iter().map(|&i| self.x[i].clone()).collect(),
            idx.iter().map(|&i| self.y[i]).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Classifier {
    Svm(SvmModel),
    Knn(KnnModel),
    Tree(TreeModel),
}

impl Classifier {
    pub fn predict(&self, x: &[f64]) -> usize {
        match self {
            Classifier::Svm(m) => m.predict(x),
            Classifier::Knn(m) => m.predict(x),
            Classifier::Tree(m) => m.predict(x),
        }
    }
}

pub fn train(d: &Dataset, h: &Hyperparams) -> Result<Classifier> {
    h.validate()?;
    if d.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let (x, y) = d.canonical();
    Ok(match h.kind {
        LearnerKind::SvmQuadratic | LearnerKind::SvmLinear | LearnerKind::SvmGaussian => {
            Classifier::Svm(train_svm(&x, &y, h.kernel(), h.c)?)
        }
        LearnerKind::Knn | LearnerKind::WeightedKnn => Classifier::Knn(train_knn(
            &x,
            &y,
            h.knn_k,
            h.kind == LearnerKind::WeightedKnn,
        )?),
        LearnerKind::Tree => Classifier::Tree(train_tree(&x, &y, h.tree_max_depth, h.tree_min_leaf)),
    })
}

/// A trained classifier with everything needed to map raw features to a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: String,
    pub hyperparams: Hyperparams,
    pub features: Vec<String>,
    pub scaler: ScalingParams,
    pub label_configs: BTreeMap<usize, StreamConfig>,
    pub classifier: Classifier,
}

impl TrainedModel {
    pub fn new(
        classifier: Classifier,
        hyperparams: Hyperparams,
        scaler: ScalingParams,
        label_configs: BTreeMap<usize, StreamConfig>,
    ) -> Self {
        TrainedModel {
            version: MODEL_VERSION.into(),
            hyperparams,
            features: scaler.names.clone(),
            scaler,
            label_configs,
            classifier,
        }
    }

    /// Predict from an already scaled vector.
    pub fn predict(&self, x: &FeatureVector) -> Result<(usize, StreamConfig)> {
        if x.len() != self.features.len() {
            return Err(Error::Input(format!(
                "expected {} features, got {}",
                self.features.len(),
                x.len()
            )));
        }
        let label = self.classifier.predict(x.as_slice());
        let config = *self
            .label_configs
            .get(&label)
            .ok_or(Error::UnknownLabel(label))?;
        Ok((label, config))
    }

    /// Scale raw selected-feature values, then predict.
    pub fn predict_raw(&self, raw: &[f64]) -> Result<(usize, StreamConfig)> {
        self.predict(&apply_scaler(&self.scaler, raw)?)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Input(e.to_string()))
    }

    pub fn from_json(text: &str, source_name: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.into(),
            message: format!("line {} column {}: {e}", e.line(), e.column()),
        })?;
        if m.version != MODEL_VERSION {
            return Err(Error::Parse {
                source_name: source_name.into(),
                message: format!("unsupported model version `{}`", m.version),
            });
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

/// Stratified fold assignment: each label's rows are shuffled, then dealt
/// round-robin, continuing the deal across labels.
pub fn stratified_folds(y: &[usize], folds: usize, seed: u64) -> Vec<usize> {
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in y.iter().enumerate() {
        by_label.entry(l).or_default().push(i);
    }
    let mut rng = crate::seed::rng(seed);
    let mut assignment = vec![0; y.len()];
    let mut next = 0;
    for rows in by_label.values_mut() {
        rows.shuffle(&mut rng);
        for &i in rows.iter() {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub best: Hyperparams,
    pub scores: Vec<f64>,
}

/// Mean stratified k-fold accuracy per grid point; the first best point wins.
/// A fold that fails to train scores 0.
pub fn grid_search_cv(
    d: &Dataset,
    grid: &[Hyperparams],
    folds: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("hyperparameter grid is empty".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need >= 2 folds, got {folds}")));
    }
    if grid.len() == 1 {
        return Ok(GridSearchResult {
            best: grid[0],
            scores: vec![f64::NAN],
        });
    }
    let folds = folds.min(d.len()).max(2);
    let assignment = stratified_folds(&d.y, folds, seed);
    let splits: Vec<(Dataset, Dataset)> = (0..folds)
        .map(|f| {
            let train_idx: Vec<usize> = (0..d.len()).filter(|&i| assignment[i] != f).collect();
            let test_idx: Vec<usize> = (0..d.len()).filter(|&i| assignment[i] == f).collect();
            (d.subset(&train_idx), d.subset(&test_idx))
        })
        .collect();
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|h| {
            let total: f64 = splits
                .iter()
                .map(|(tr, te)| match train(tr, h) {
                    Ok(model) if !te.is_empty() => {
                        let hits = te
                            .x
                            .iter()
                            .zip(&te.y)
                            .filter(|(x, &y)| model.predict(x) == y)
                            .count();
                        hits as f64 / te.len() as f64
                    }
                    _ => 0.0,
                })
                .sum();
            total / folds as f64
        })
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(GridSearchResult {
        best: grid[best],
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(i: usize) -> SampleMeta {
        SampleMeta {
            sample_id: i,
            program_id: format!("p{i}"),
            dataset_id: "d".into(),
        }
    }

    fn blobs() -> Dataset {
        use rand::Rng;
        let mut rng = crate::seed::rng(21);
        let centres = [[0.2, 0.2], [0.8, 0.3], [0.5, 0.9]];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..45 {
            let c = centres[i % 3];
            x.push(vec![
                c[0] + rng.random_range(-0.1..0.1),
                c[1] + rng.random_range(-0.1..0.1),
            ]);
            y.push(i % 3);
        }
        let meta = (0..45).map(meta).collect();
        Dataset::new(x, y, meta).unwrap()
    }

    fn scaler(d: usize) -> ScalingParams {
        ScalingParams {
            names: (0..d).map(|i| format!("f{i}")).collect(),
            min: vec![0.0; d],
            max: vec![1.0; d],
        }
    }

    #[test]
    fn learner_names_round_trip() {
        for k in LearnerKind::ALL {
            assert_eq!(k.name().parse::<LearnerKind>().unwrap(), k);
        }
        assert!("ann".parse::<LearnerKind>().is_err());
    }

    #[test]
    fn every_learner_fits_blobs() {
        let d = blobs();
        for kind in LearnerKind::ALL {
            let m = train(&d, &Hyperparams::new(kind)).unwrap();
            let acc = d.x.iter().zip(&d.y).filter(|(x, &y)| m.predict(x) == y).count();
            assert!(acc as f64 / d.len() as f64 > 0.95, "{kind}: {acc}");
        }
    }

    #[test]
    fn permutation_invariant_predictions() {
        let d = blobs();
        let mut rev_idx: Vec<usize> = (0..d.len()).collect();
        rev_idx.reverse();
        let rev = d.subset(&rev_idx);
        let h = Hyperparams::new(LearnerKind::SvmQuadratic);
        let a = train(&d, &h).unwrap();
        let b = train(&rev, &h).unwrap();
        for i in 0..20 {
            let q = [f64::from(i) / 19.0, 1.0 - f64::from(i) / 19.0];
            assert_eq!(a.predict(&q), b.predict(&q));
        }
    }

    #[test]
    fn model_round_trip_is_exact() {
        let d = blobs();
        let h = Hyperparams::new(LearnerKind::SvmGaussian);
        let labels = BTreeMap::from([
            (0, StreamConfig::new(1, 2)),
            (1, StreamConfig::new(4, 16)),
            (2, StreamConfig::new(8, 8)),
        ]);
        let m = TrainedModel::new(train(&d, &h).unwrap(), h, scaler(2), labels);
        let back = TrainedModel::from_json(&m.to_json().unwrap(), "mem").unwrap();
        assert_eq!(back, m);
        for i in 0..50 {
            let q = FeatureVector(vec![f64::from(i % 7) / 6.0, f64::from(i % 5) / 4.0]);
            let x = m.classifier.predict(q.as_slice());
            assert_eq!(back.predict(&q).unwrap().0, x);
        }
    }

    #[test]
    fn predict_checks_dimension() {
        let d = blobs();
        let h = Hyperparams::new(LearnerKind::Knn);
        let m = TrainedModel::new(train(&d, &h).unwrap(), h, scaler(2), BTreeMap::new());
        assert!(matches!(m.predict(&FeatureVector(vec![0.1])), Err(Error::Input(_))));
    }

    #[test]
    fn grid_search_rules() {
        let d = blobs();
        let one = [Hyperparams::new(LearnerKind::Knn)];
        assert_eq!(grid_search_cv(&d, &one, 5, 1).unwrap().best, one[0]);
        let twins = [
            Hyperparams { c: 1.0, ..Hyperparams::new(LearnerKind::SvmLinear) },
            Hyperparams { c: 1.0, ..Hyperparams::new(LearnerKind::SvmLinear) },
        ];
        let r = grid_search_cv(&d, &twins, 5, 1).unwrap();
        assert_eq!(r.scores[0], r.scores[1]);
        assert!(grid_search_cv(&d, &[], 5, 1).is_err());
        let g = default_grid(LearnerKind::SvmQuadratic);
        assert_eq!(
            grid_search_cv(&d, &g, 5, 9).unwrap(),
            grid_search_cv(&d, &g, 5, 9).unwrap()
        );
    }

    #[test]
    fn folds_are_stratified() {
        let y: Vec<usize> = (0..50).map(|i| i % 2).collect();
        let f = stratified_folds(&y, 5, 3);
        for fold in 0..5 {
            let members: Vec<usize> = (0..50).filter(|&i| f[i] == fold).collect();
            assert_eq!(members.len(), 10);
            assert_eq!(members.iter().filter(|&&i| y[i] == 0).count(), 5);
        }
    }
}
