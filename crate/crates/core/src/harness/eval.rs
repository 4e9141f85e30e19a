use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_liu_from_workload, liu_optimal_tasks, werkhoven_optimal_streams, LogGPParams};
use crate::error::{Error, Result};
use crate::features::{
    fit_scaler, pearson_matrix, prune_correlated, ScalingParams, DEFAULT_CORRELATION_THRESHOLD,
};
use crate::labeling::{
    merge_labels, representatives, well_performing_set, LabelInput, LabelSet, MergeParams, MergeResult,
    DEFAULT_TOP_PCT,
};
use crate::learner::{
    default_grid, grid_search_cv, train, Dataset, Hyperparams, LearnerKind, TrainedModel,
    DEFAULT_FOLDS,
};
use crate::seed;
use crate::simulator::{anneal_search, oracle_best, stage_durations, AnnealParams, PerfSurface, StreamConfig};

use super::corpus::{Corpus, Suite};

/// Everything that shapes a training run besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub learner: LearnerKind,
    /// Search grid; the learner's default grid when absent.
    #[serde(default)]
    pub hyperparams: Option<Vec<Hyperparams>>,
    pub top_pct: f64,
    pub merge: MergeParams,
    /// False trains on one class per distinct label set instead of merged classes.
    pub merge_labels: bool,
    pub correlation_threshold: f64,
    pub folds: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            learner: LearnerKind::SvmQuadratic,
            hyperparams: None,
            top_pct: DEFAULT_TOP_PCT,
            merge: MergeParams::default(),
            merge_labels: true,
            correlation_threshold: DEFAULT_CORRELATION_THRESHOLD,
            folds: DEFAULT_FOLDS,
        }
    }
}

impl PipelineConfig {
    fn grid(&self) -> Vec<Hyperparams> {
        self.hyperparams
            .clone()
            .unwrap_or_else(|| default_grid(self.learner))
    }
}

/// Record of what one training run saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldManifest {
    pub fold: usize,
    pub held_out_families: Vec<String>,
    pub train_programs: Vec<String>,
    pub train_samples: Vec<usize>,
    pub selected_features: Vec<String>,
    pub scaler: ScalingParams,
    pub raw_label_count: usize,
    pub class_count: usize,
    pub merge_target_met: bool,
    pub hyperparams: Hyperparams,
    pub cv_scores: Vec<f64>,
}

/// Label sets for the samples at `idx`, merged or raw per `cfg`.
pub fn label_samples(corpus: &Corpus, idx: &[usize], cfg: &PipelineConfig) -> Result<(MergeResult, usize)> {
    let inputs: Vec<LabelInput> = idx
        .iter()
        .map(|&i| {
            let s = &corpus.samples[i];
            let (oracle_config, oracle_speedup) = oracle_best(&s.surface);
            LabelInput {
                meta: s.meta.clone(),
                labels: well_performing_set(&s.surface, s.meta.sample_id, cfg.top_pct),
                oracle_config,
                oracle_speedup,
            }
        })
        .collect();
    let sets: Vec<LabelSet> = inputs.iter().map(|i| i.labels.clone()).collect();
    let raw = MergeResult::from_label_sets(&sets);
    let raw_count = raw.class_count();
    if !cfg.merge_labels {
        return Ok((raw, raw_count));
    }
    Ok((merge_labels(&inputs, &cfg.merge)?, raw_count))
}

/// Fit feature selection, scaling, labels and the classifier on `idx` only.
pub fn fit_pipeline(
    corpus: &Corpus,
    idx: &[usize],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(TrainedModel, FoldManifest)> {
    if idx.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "training needs >= 2 samples, got {}",
            idx.len()
        )));
    }
    let names = corpus.samples[idx[0]].candidates.names.clone();
    let rows: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| corpus.samples[i].candidates.values.clone())
        .collect();
    let selected = prune_correlated(&pearson_matrix(&names, &rows)?, cfg.correlation_threshold);
    if selected.is_empty() {
        return Err(Error::DegenerateDataset("every candidate feature is constant".into()));
    }
    let selected_rows: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| corpus.samples[i].candidates.select(&selected))
        .collect::<Result<_>>()?;
    let scaler = fit_scaler(&selected, &selected_rows)?;

    let (labels, raw_label_count) = label_samples(corpus, idx, cfg)?;
    let surfaces: BTreeMap<usize, &PerfSurface> = idx
        .iter()
        .map(|&i| (corpus.samples[i].meta.sample_id, &corpus.samples[i].surface))
        .collect();
    let reps = representatives(&labels, &surfaces)?;

    let x: Vec<Vec<f64>> = selected_rows
        .iter()
        .map(|r| crate::features::apply_scaler(&scaler, r).map(|v| v.0))
        .collect::<Result<_>>()?;
    let y: Vec<usize> = idx
        .iter()
        .map(|&i| labels.assignments[&corpus.samples[i].meta.sample_id])
        .collect();
    let meta = idx.iter().map(|&i| corpus.samples[i].meta.clone()).collect();
    let data = Dataset::new(x, y, meta)?;

    let search = grid_search_cv(&data, &cfg.grid(), cfg.folds, seed::derive(seed, &[0xC5]))?;
    let classifier = train(&data, &search.best)?;
    let programs: BTreeSet<&str> = idx
        .iter()
        .map(|&i| corpus.samples[i].meta.program_id.as_str())
        .collect();
    let manifest = FoldManifest {
        fold: 0,
        held_out_families: Vec::new(),
        train_programs: programs.into_iter().map(String::from).collect(),
        train_samples: idx.iter().map(|&i| corpus.samples[i].meta.sample_id).collect(),
        selected_features: selected,
        scaler: scaler.clone(),
        raw_label_count,
        class_count: labels.class_count(),
        merge_target_met: labels.target_met,
        hyperparams: search.best,
        cv_scores: search.scores,
    };
    Ok((TrainedModel::new(classifier, search.best, scaler, reps), manifest))
}

/// Predict the config for a corpus sample.
pub fn predict_sample(model: &TrainedModel, corpus: &Corpus, i: usize) -> Result<StreamConfig> {
    let raw = corpus.samples[i].candidates.select(&model.features)?;
    Ok(model.predict_raw(&raw)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub sample: usize,
    pub program: String,
    pub dataset: String,
    pub config: StreamConfig,
    pub speedup: f64,
    pub oracle_config: StreamConfig,
    pub oracle_speedup: f64,
    pub pct_of_oracle: f64,
}

fn eval_row(corpus: &Corpus, i: usize, config: StreamConfig) -> Result<EvalRow> {
    let s = &corpus.samples[i];
    let speedup = s.surface.speedup(config).ok_or_else(|| Error::InvalidConfig {
        config,
        reason: format!("not on the surface of {}/{}", s.meta.program_id, s.meta.dataset_id),
    })?;
    let (oracle_config, oracle_speedup) = oracle_best(&s.surface);
    Ok(EvalRow {
        sample: s.meta.sample_id,
        program: s.meta.program_id.clone(),
        dataset: s.meta.dataset_id.clone(),
        config,
        speedup,
        oracle_config,
        oracle_speedup,
        pct_of_oracle: speedup / oracle_speedup,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub manifests: Vec<FoldManifest>,
    pub geomean_speedup: f64,
    pub geomean_oracle_speedup: f64,
    pub geomean_pct_of_oracle: f64,
}

impl EvalReport {
    fn new(mut rows: Vec<EvalRow>, manifests: Vec<FoldManifest>) -> Result<Self> {
        rows.sort_by_key(|r| r.sample);
        let col = |f: fn(&EvalRow) -> f64| geomean(&rows.iter().map(f).collect::<Vec<_>>());
        Ok(EvalReport {
            geomean_speedup: col(|r| r.speedup)?,
            geomean_oracle_speedup: col(|r| r.oracle_speedup)?,
            geomean_pct_of_oracle: col(|r| r.pct_of_oracle)?,
            rows,
            manifests,
        })
    }

    pub fn to_csv(&self) -> String {
        scheme_csv(self.rows.iter().map(|r| ("predicted", r)))
    }
}

fn scheme_csv<'a>(rows: impl Iterator<Item = (&'a str, &'a EvalRow)>) -> String {
    let mut out = String::from("scheme,program,dataset,partitions,tasks,speedup,pct_of_oracle\n");
    for (scheme, r) in rows {
        out.push_str(&format!(
            "{scheme},{},{},{},{},{},{}\n",
            r.program, r.dataset, r.config.partitions, r.config.tasks, r.speedup, r.pct_of_oracle
        ));
    }
    out
}

/// `exp(mean(ln v))`; every value must be positive.
pub fn geomean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("geomean of no values".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("geomean needs positive values, got {v}")));
    }
    Ok((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

/// Train on `train_idx`, predict `test_idx`.
fn run_fold(
    corpus: &Corpus,
    fold: usize,
    held_out: Vec<String>,
    train_idx: &[usize],
    test_idx: &[usize],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(Vec<EvalRow>, FoldManifest)> {
    let (model, mut manifest) = fit_pipeline(corpus, train_idx, cfg, seed::derive(seed, &[fold as u64]))?;
    manifest.fold = fold;
    manifest.held_out_families = held_out;
    let rows = test_idx
        .iter()
        .map(|&i| eval_row(corpus, i, predict_sample(&model, corpus, i)?))
        .collect::<Result<_>>()?;
    Ok((rows, manifest))
}

/// Leave-one-family-out over the train suite.
pub fn loocv_evaluate(corpus: &Corpus, cfg: &PipelineConfig, seed: u64) -> Result<EvalReport> {
    let families = corpus.families(Suite::TrainSuite);
    if families.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "leave-one-out needs >= 2 train-suite families, got {}",
            families.len()
        )));
    }
    let train_suite = corpus.indices(Suite::TrainSuite);
    let folds = families
        .par_iter()
        .enumerate()
        .map(|(fold, family)| {
            let (test, train): (Vec<usize>, Vec<usize>) = train_suite
                .iter()
                .partition(|&&i| &corpus.samples[i].family == family);
            run_fold(corpus, fold, vec![family.clone()], &train, &test, cfg, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, manifests): (Vec<Vec<EvalRow>>, Vec<FoldManifest>) = folds.into_iter().unzip();
    EvalReport::new(rows.into_iter().flatten().collect(), manifests)
}

/// Train on the train suite, evaluate on the test suite.
pub fn cross_suite_evaluate(corpus: &Corpus, cfg: &PipelineConfig, seed: u64) -> Result<EvalReport> {
    let train = corpus.indices(Suite::TrainSuite);
    let test = corpus.indices(Suite::TestSuite);
    if test.is_empty() {
        return Err(Error::InsufficientData("no test-suite samples".into()));
    }
    let (rows, manifest) = run_fold(corpus, 0, corpus.families(Suite::TestSuite), &train, &test, cfg, seed)?;
    EvalReport::new(rows, vec![manifest])
}

pub const SCHEMES: [&str; 7] = [
    "predicted",
    "fixed-4-16",
    "fixed-17-85",
    "liu",
    "werkhoven",
    "oracle",
    "anneal",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Rows per scheme in [`SCHEMES`] order, samples in report order.
    pub rows: Vec<(String, EvalRow)>,
    pub geomeans: Vec<(String, f64)>,
    pub pct_geomeans: Vec<(String, f64)>,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        scheme_csv(self.rows.iter().map(|(s, r)| (s.as_str(), r)))
    }

    pub fn geomean(&self, scheme: &str) -> Option<f64> {
        self.geomeans.iter().find(|(s, _)| s == scheme).map(|p| p.1)
    }
}

/// Every scheme's choice on the samples of `report`.
pub fn compare_schemes(
    corpus: &Corpus,
    report: &EvalReport,
    anneal: &AnnealParams,
    seed: u64,
) -> Result<Comparison> {
    let grid = &corpus.grid;
    let fixed_a = grid.snap(StreamConfig::new(4, 16));
    let fixed_b = grid.snap(StreamConfig::new(17, 85));
    let index: BTreeMap<usize, usize> = corpus
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.meta.sample_id, i))
        .collect();
    let per_sample = report
        .rows
        .par_iter()
        .map(|row| {
            let i = index[&row.sample];
            let w = corpus.samples[i].workload();
            let liu = liu_optimal_tasks(&fit_liu_from_workload(w)?, w.elements, grid)?.config;
            let werk = werkhoven_optimal_streams(&LogGPParams::from_workload(w)?, grid)?.config;
            let sa = anneal_search(w, grid, anneal, seed::derive(seed, &[0x5A, row.sample as u64]))?.config;
            let oracle = row.oracle_config;
            [row.config, fixed_a, fixed_b, liu, werk, oracle, sa]
                .into_iter()
                .map(|c| eval_row(corpus, i, c))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut geomeans = Vec::new();
    let mut pct_geomeans = Vec::new();
    for (k, scheme) in SCHEMES.iter().enumerate() {
        let col: Vec<&EvalRow> = per_sample.iter().map(|r| &r[k]).collect();
        geomeans.push((scheme.to_string(), geomean(&col.iter().map(|r| r.speedup).collect::<Vec<_>>())?));
        pct_geomeans.push((
            scheme.to_string(),
            geomean(&col.iter().map(|r| r.pct_of_oracle).collect::<Vec<_>>())?,
        ));
        rows.extend(col.into_iter().map(|r| (scheme.to_string(), r.clone())));
    }
    Ok(Comparison {
        rows,
        geomeans,
        pct_geomeans,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    pub program: String,
    pub dataset: String,
    pub ln_ratio: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// An axis had zero variance; `r` is reported as 0.
    pub degenerate: bool,
    pub points: Vec<CorrelationPoint>,
}

impl Correlation {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("program,dataset,ln_compute_comm_ratio,speedup\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.program, p.dataset, p.ln_ratio, p.speedup));
        }
        out
    }
}

/// `ln(compute / communication)` of the noise-free `(1,1)` stages.
pub fn compute_comm_ln_ratio(s: &PerfSurface) -> Result<f64> {
    let stages = stage_durations(&s.workload, StreamConfig::BASELINE)?;
    let comm = stages.total_transfer();
    if comm <= 0.0 || stages.total_compute() <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "{}/{} has no compute or no communication",
            s.workload.program_id, s.workload.dataset_id
        )));
    }
    Ok((stages.total_compute() / comm).ln())
}

/// Pearson r between `xs` and `ys`; `None` when either has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn ratio_speedup_correlation(corpus: &Corpus, report: &EvalReport) -> Result<Correlation> {
    if report.rows.len() < 2 {
        return Err(Error::InsufficientData("correlation needs >= 2 samples".into()));
    }
    let index: BTreeMap<usize, usize> = corpus
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.meta.sample_id, i))
        .collect();
    let points = report
        .rows
        .iter()
        .map(|r| {
            Ok(CorrelationPoint {
                program: r.program.clone(),
                dataset: r.dataset.clone(),
                ln_ratio: compute_comm_ln_ratio(&corpus.samples[index[&r.sample]].surface)?,
                speedup: r.speedup,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = points.iter().map(|p| p.ln_ratio).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.speedup).collect();
    let r = pearson(&xs, &ys);
    Ok(Correlation {
        r: r.unwrap_or(0.0),
        degenerate: r.is_none(),
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub merged: EvalReport,
    pub unmerged: EvalReport,
    /// Merged minus unmerged geomean speedup.
    pub delta: f64,
}

/// The same leave-one-out folds trained once on merged and once on raw labels.
pub fn merging_ablation(corpus: &Corpus, cfg: &PipelineConfig, seed: u64) -> Result<Ablation> {
    let merged = loocv_evaluate(corpus, &PipelineConfig { merge_labels: true, ..cfg.clone() }, seed)?;
    let unmerged = loocv_evaluate(corpus, &PipelineConfig { merge_labels: false, ..cfg.clone() }, seed)?;
    Ok(Ablation {
        delta: merged.geomean_speedup - unmerged.geomean_speedup,
        merged,
        unmerged,
    })
}

/// `partitions,tasks,speedup` for one surface.
pub fn heatmap_csv(s: &PerfSurface) -> String {
    let mut out = String::from("partitions,tasks,speedup\n");
    for r in s.records() {
        out.push_str(&format!(
            "{},{},{}\n",
            r.config.partitions,
            r.config.tasks,
            s.baseline_runtime / r.runtime
        ));
    }
    out
}
