//! Corpus generation, cross-validated evaluation and scheme comparison.

mod corpus;
mod eval;

pub use corpus::{
    build_corpus, default_corpus_spec, sample_seed, workload_candidates, Corpus, CorpusSpec,
    DatasetSpec, ProgramSpec, Sample, Suite, DEFAULT_DATASETS, DEFAULT_PARTITION_OVERHEAD,
};
pub use eval::{
    compare_schemes, compute_comm_ln_ratio, cross_suite_evaluate, fit_pipeline, geomean,
    heatmap_csv, label_samples, loocv_evaluate, merging_ablation, pearson, predict_sample,
    ratio_speedup_correlation, Ablation, Comparison, Correlation, CorrelationPoint, EvalReport,
    EvalRow, FoldManifest, PipelineConfig, SCHEMES,
};
