//! Command-line front end.
//!
//! Every flag may also come from a JSON file given with `--config`; flags on
//! the command line take precedence. Data goes to files under `--out`, except
//! `predict`, which prints its answer. Diagnostics go to stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::features::manifest_json;
use crate::harness::{
    build_corpus, compare_schemes, cross_suite_evaluate, default_corpus_spec, fit_pipeline,
    heatmap_csv, label_samples, loocv_evaluate, merging_ablation, ratio_speedup_correlation,
    workload_candidates, Corpus, CorpusSpec, EvalReport, FoldManifest, PipelineConfig, Suite,
};
use crate::labeling::{labels_csv, representatives, MergeParams, SampleMeta};
use crate::learner::{Hyperparams, LearnerKind, TrainedModel};
use crate::simulator::{anneal_search, exhaustive_profile, AnnealParams, Grid, PerfSurface, WorkloadSpec};

const LEARNERS: [&str; 6] = ["svm-quad", "svm-lin", "svm-rbf", "knn", "wknn", "tree"];

#[derive(Debug, Parser)]
#[command(
    name = "streamtune",
    version,
    about = "Pick stream partition and task counts for offloaded kernels with a trained classifier"
)]
struct Cli {
    #[command(flatten)]
    opts: Options,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct Options {
    /// Master seed; all randomness derives from it. Required.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file supplying any flag by name (e.g. {"seed": 1, "top-pct": 3}).
    #[arg(long, global = true, value_name = "FILE")]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Configuration grid: `desk` (11 × 9 points) or `P1,P2,..:T1,T2,..`.
    #[arg(long, global = true, value_name = "GRID")]
    grid: Option<String>,
    /// Output directory [default: out].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Corpus spec JSON [default: built-in synthetic corpus].
    #[arg(long, global = true, value_name = "FILE")]
    corpus: Option<PathBuf>,
    /// Model file: written by `train` [default: <out>/model.json], read by `predict`.
    #[arg(long, global = true, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Classifier [default: svm-quad].
    #[arg(
        long,
        global = true,
        value_parser = PossibleValuesParser::new(LEARNERS).try_map(|s| s.parse::<LearnerKind>())
    )]
    learner: Option<LearnerKind>,
    /// Percentage of best configs forming a sample's label set [default: 3].
    #[arg(long, global = true, value_name = "PCT")]
    #[serde(alias = "top_pct")]
    top_pct: Option<f64>,
    /// Class count the label merge aims for [default: 28].
    #[arg(long, global = true, value_name = "N")]
    #[serde(alias = "target_nr")]
    target_nr: Option<usize>,
    /// Merge weight for a shared program [default: 150].
    #[arg(long, global = true)]
    w2: Option<f64>,
    /// Merge weight for a shared dataset [default: 30].
    #[arg(long, global = true)]
    w3: Option<f64>,
    /// Hyperparameter grid; config file only.
    #[arg(skip)]
    hyperparams: Option<Vec<Hyperparams>>,
}

impl Options {
    fn or(self, file: Options) -> Options {
        Options {
            seed: self.seed.or(file.seed),
            config: self.config,
            grid: self.grid.or(file.grid),
            out: self.out.or(file.out),
            corpus: self.corpus.or(file.corpus),
            model: self.model.or(file.model),
            learner: self.learner.or(file.learner),
            top_pct: self.top_pct.or(file.top_pct),
            target_nr: self.target_nr.or(file.target_nr),
            w2: self.w2.or(file.w2),
            w3: self.w3.or(file.w3),
            hyperparams: self.hyperparams.or(file.hyperparams),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the corpus; write surfaces, heatmaps, features and the feature manifest.
    Gen,
    /// Profile one workload over the whole grid.
    Sweep(Target),
    /// Label the train suite and merge the labels.
    Label,
    /// Train on the train suite and write the model.
    Train,
    /// Print `partitions=<p> tasks=<t>` for a workload or a feature file.
    Predict(PredictArgs),
    /// Evaluate the pipeline on the corpus.
    Eval {
        #[arg(value_enum)]
        mode: EvalMode,
        /// Annealing budget (objective evaluations) for `compare`.
        #[arg(long, default_value_t = 500)]
        budget: u32,
    },
    /// Simulated-annealing search on one workload.
    Anneal {
        #[command(flatten)]
        target: Target,
        /// Objective evaluations.
        #[arg(long, default_value_t = 500)]
        budget: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalMode {
    /// Leave one train-suite family out per fold.
    Loocv,
    /// Train on the train suite, test on the test suite.
    CrossSuite,
    /// Every scheme against the LOOCV predictions.
    Compare,
    /// Merged against unmerged labels.
    Ablation,
    /// Compute/communication ratio against achieved speedup.
    Correlation,
}

/// Workload selection; defaults to the first dataset of the first program.
#[derive(Debug, Clone, Args)]
struct Target {
    /// Workload JSON file.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["program", "dataset"])]
    workload: Option<PathBuf>,
    /// Program id in the corpus spec.
    #[arg(long, requires = "dataset")]
    program: Option<String>,
    /// Dataset id in the corpus spec.
    #[arg(long, requires = "program")]
    dataset: Option<String>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    target: Target,
    /// JSON object of candidate feature values by name.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["workload", "program", "dataset"])]
    features: Option<PathBuf>,
}

/// Settings after merging flags, the config file and defaults.
struct Settings {
    seed: u64,
    grid: Grid,
    out: PathBuf,
    corpus: Option<PathBuf>,
    model: Option<PathBuf>,
    pipeline: PipelineConfig,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

/// Run the CLI on `argv` (program name first); returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match resolve(cli.opts).and_then(|s| execute(&cli.command, &s).map_err(Failure::from)) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn resolve(cli: Options) -> std::result::Result<Settings, Failure> {
    let opts = match &cli.config {
        Some(path) => {
            let text = read(path)?;
            let file: Options = serde_json::from_str(&text).map_err(|e| {
                Failure::Usage(format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column()))
            })?;
            cli.or(file)
        }
        None => cli,
    };
    let seed = opts
        .seed
        .ok_or_else(|| Failure::Usage("--seed is required (on the command line or in --config)".into()))?;
    let grid = match &opts.grid {
        Some(g) => g.parse::<Grid>().map_err(|e| Failure::Usage(e.to_string()))?,
        None => Grid::desk(),
    };
    let mut pipeline = PipelineConfig::default();
    if let Some(kind) = opts.learner {
        pipeline.learner = kind;
    }
    if let Some(p) = opts.top_pct {
        if !(p > 0.0 && p <= 100.0) {
            return Err(Failure::Usage(format!("--top-pct must be in (0, 100], got {p}")));
        }
        pipeline.top_pct = p;
    }
    let defaults = MergeParams::default();
    pipeline.merge = MergeParams {
        target_classes: opts.target_nr.unwrap_or(defaults.target_classes),
        same_program_weight: opts.w2.unwrap_or(defaults.same_program_weight),
        same_dataset_weight: opts.w3.unwrap_or(defaults.same_dataset_weight),
    };
    if pipeline.merge.target_classes < 1 {
        return Err(Failure::Usage("--target-nr must be >= 1".into()));
    }
    if let Some(h) = opts.hyperparams {
        if h.is_empty() {
            return Err(Failure::Usage("hyperparams grid is empty".into()));
        }
        for p in &h {
            p.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        }
        pipeline.learner = h[0].kind;
        pipeline.hyperparams = Some(h);
    }
    for path in [&opts.corpus, &opts.config].into_iter().flatten() {
        if !path.is_file() {
            return Err(Failure::Runtime(missing(path)));
        }
    }
    Ok(Settings {
        seed,
        grid,
        out: opts.out.unwrap_or_else(|| PathBuf::from("out")),
        corpus: opts.corpus,
        model: opts.model,
        pipeline,
    })
}

fn missing(path: &Path) -> Error {
    Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable value");
    s.push('\n');
    s
}

fn execute(command: &Command, s: &Settings) -> Result<()> {
    match command {
        Command::Gen => gen(s),
        Command::Sweep(target) => sweep(s, target),
        Command::Label => label(s),
        Command::Train => train(s),
        Command::Predict(args) => predict(s, args),
        Command::Eval { mode, budget } => eval(s, *mode, *budget),
        Command::Anneal { target, budget } => anneal(s, target, *budget),
    }
}

fn corpus_spec(s: &Settings) -> Result<CorpusSpec> {
    match &s.corpus {
        Some(path) => CorpusSpec::parse(&read(path)?, &path.display().to_string()),
        None => Ok(default_corpus_spec()),
    }
}

fn corpus(s: &Settings) -> Result<Corpus> {
    let spec = corpus_spec(s)?;
    eprintln!("building corpus: {} samples on a {}-point grid", spec.sample_count(), s.grid.len());
    build_corpus(&spec, &s.grid, s.seed)
}

fn workload(s: &Settings, t: &Target) -> Result<WorkloadSpec> {
    if let Some(path) = &t.workload {
        let text = read(path)?;
        let w: WorkloadSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            message: format!("line {} column {}: {e}", e.line(), e.column()),
        })?;
        w.validate()?;
        return Ok(w);
    }
    let spec = corpus_spec(s)?;
    match (&t.program, &t.dataset) {
        (Some(p), Some(d)) => {
            let program = spec
                .programs
                .iter()
                .find(|x| &x.program_id == p)
                .ok_or_else(|| Error::Input(format!("program `{p}` is not in the corpus spec")))?;
            let dataset = program
                .datasets
                .iter()
                .find(|x| &x.dataset_id == d)
                .ok_or_else(|| Error::Input(format!("program `{p}` has no dataset `{d}`")))?;
            Ok(program.workload(dataset))
        }
        _ => {
            let program = spec
                .programs
                .first()
                .ok_or_else(|| Error::Input("corpus spec has no programs".into()))?;
            Ok(program.workload(&program.datasets[0]))
        }
    }
}

fn surfaces_csv(c: &Corpus) -> String {
    let mut out = String::from("program,dataset,partitions,tasks,runtime_s,runs,unconverged\n");
    for sample in &c.samples {
        for r in sample.surface.records() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                sample.meta.program_id,
                sample.meta.dataset_id,
                r.config.partitions,
                r.config.tasks,
                r.runtime,
                r.runs,
                r.unconverged
            ));
        }
    }
    out
}

fn gen(s: &Settings) -> Result<()> {
    let spec = corpus_spec(s)?;
    let c = corpus(s)?;
    write(&s.out, "corpus_spec.json", &spec.to_json())?;
    write(&s.out, "surfaces.csv", &surfaces_csv(&c))?;
    write(&s.out, "features.csv", &c.features_csv())?;
    write(&s.out, "feature_manifest.json", &manifest_json())?;
    write(&s.out, "digest.txt", &format!("{}\n", c.digest()))?;
    for sample in &c.samples {
        let name = format!("heatmaps/{}__{}.csv", sample.meta.program_id, sample.meta.dataset_id);
        write(&s.out, &name, &heatmap_csv(&sample.surface))?;
    }
    eprintln!("wrote {} samples to {} (digest {})", c.samples.len(), s.out.display(), c.digest());
    Ok(())
}

fn sweep(s: &Settings, t: &Target) -> Result<()> {
    let w = workload(s, t)?;
    let surface = exhaustive_profile(&w, &s.grid.configs(), crate::harness::sample_seed(s.seed, &w))?;
    write(&s.out, "surface.csv", &surface.to_csv())?;
    write(&s.out, "heatmap.csv", &heatmap_csv(&surface))?;
    eprintln!("profiled {}/{} at {} configs", w.program_id, w.dataset_id, surface.len());
    Ok(())
}

fn label(s: &Settings) -> Result<()> {
    let c = corpus(s)?;
    let idx = c.indices(Suite::TrainSuite);
    let (merge, raw_count) = label_samples(&c, &idx, &s.pipeline)?;
    let surfaces: BTreeMap<usize, &PerfSurface> = idx
        .iter()
        .map(|&i| (c.samples[i].meta.sample_id, &c.samples[i].surface))
        .collect();
    let reps = representatives(&merge, &surfaces)?;
    let metas: Vec<SampleMeta> = idx.iter().map(|&i| c.samples[i].meta.clone()).collect();
    write(&s.out, "labels.csv", &labels_csv(&metas, &merge, &reps))?;
    let summary = json!({
        "raw_label_count": raw_count,
        "class_count": merge.class_count(),
        "merges": merge.merges,
        "target_met": merge.target_met,
        "classes": merge.classes,
        "representatives": reps,
    });
    write(&s.out, "label_classes.json", &to_json(&summary))?;
    if !merge.target_met {
        eprintln!("warning: merging stopped at {} classes, above the target", merge.class_count());
    }
    eprintln!("{raw_count} raw labels merged into {} classes", merge.class_count());
    Ok(())
}

fn train(s: &Settings) -> Result<()> {
    let c = corpus(s)?;
    let idx = c.indices(Suite::TrainSuite);
    let (model, manifest) = fit_pipeline(&c, &idx, &s.pipeline, s.seed)?;
    let path = s.model.clone().unwrap_or_else(|| s.out.join("model.json"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    model.save(&path)?;
    write(&s.out, "train_manifest.json", &to_json(&manifest))?;
    eprintln!(
        "trained {} on {} samples, {} classes; model at {}",
        s.pipeline.learner,
        idx.len(),
        manifest.class_count,
        path.display()
    );
    Ok(())
}

fn predict(s: &Settings, args: &PredictArgs) -> Result<()> {
    let path = s
        .model
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("predict needs --model".into()))?;
    if !path.is_file() {
        return Err(missing(path));
    }
    let model = TrainedModel::load(path)?;
    let raw: Vec<f64> = match &args.features {
        Some(fpath) => {
            let text = read(fpath)?;
            let values: BTreeMap<String, f64> = serde_json::from_str(&text).map_err(|e| Error::Parse {
                source_name: fpath.display().to_string(),
                message: format!("line {} column {}: {e}", e.line(), e.column()),
            })?;
            model
                .features
                .iter()
                .map(|n| {
                    values.get(n).copied().ok_or_else(|| {
                        Error::Input(format!("{}: missing feature `{n}`", fpath.display()))
                    })
                })
                .collect::<Result<_>>()?
        }
        None => workload_candidates(&workload(s, &args.target)?, s.seed)?.select(&model.features)?,
    };
    let (_, config) = model.predict_raw(&raw)?;
    println!("partitions={} tasks={}", config.partitions, config.tasks);
    Ok(())
}

fn write_report(s: &Settings, stem: &str, report: &EvalReport, c: &Corpus) -> Result<()> {
    write(&s.out, &format!("{stem}.csv"), &report.to_csv())?;
    write_manifests(s, stem, &report.manifests)?;
    let corr = ratio_speedup_correlation(c, report)?;
    write(&s.out, &format!("{stem}_correlation.csv"), &corr.to_csv())?;
    let summary = json!({
        "samples": report.rows.len(),
        "geomean_speedup": report.geomean_speedup,
        "geomean_oracle_speedup": report.geomean_oracle_speedup,
        "geomean_pct_of_oracle": report.geomean_pct_of_oracle,
        "correlation": corr.r,
        "correlation_degenerate": corr.degenerate,
    });
    write(&s.out, &format!("{stem}_summary.json"), &to_json(&summary))?;
    Ok(())
}

fn write_manifests(s: &Settings, stem: &str, manifests: &[FoldManifest]) -> Result<()> {
    for m in manifests {
        write(&s.out, &format!("folds/{stem}_fold_{:02}.json", m.fold), &to_json(m))?;
    }
    Ok(())
}

fn eval(s: &Settings, mode: EvalMode, budget: u32) -> Result<()> {
    let c = corpus(s)?;
    let cfg = &s.pipeline;
    match mode {
        EvalMode::Loocv => {
            let report = loocv_evaluate(&c, cfg, s.seed)?;
            write_report(s, "loocv", &report, &c)?;
            eprintln!(
                "loocv: geomean speedup {:.4}, {:.1}% of oracle",
                report.geomean_speedup,
                100.0 * report.geomean_pct_of_oracle
            );
        }
        EvalMode::CrossSuite => {
            let report = cross_suite_evaluate(&c, cfg, s.seed)?;
            write_report(s, "cross_suite", &report, &c)?;
            eprintln!(
                "cross-suite: geomean speedup {:.4}, {:.1}% of oracle",
                report.geomean_speedup,
                100.0 * report.geomean_pct_of_oracle
            );
        }
        EvalMode::Compare => {
            let report = loocv_evaluate(&c, cfg, s.seed)?;
            let params = AnnealParams {
                budget,
                ..AnnealParams::default()
            };
            let cmp = compare_schemes(&c, &report, &params, s.seed)?;
            write(&s.out, "compare.csv", &cmp.to_csv())?;
            write_manifests(s, "compare", &report.manifests)?;
            let summary = json!({
                "geomean_speedup": cmp.geomeans.iter().cloned().collect::<BTreeMap<_, _>>(),
                "geomean_pct_of_oracle": cmp.pct_geomeans.iter().cloned().collect::<BTreeMap<_, _>>(),
            });
            write(&s.out, "compare_summary.json", &to_json(&summary))?;
            for (scheme, g) in &cmp.geomeans {
                eprintln!("{scheme:>12}: {g:.4}");
            }
        }
        EvalMode::Ablation => {
            let ab = merging_ablation(&c, cfg, s.seed)?;
            write(&s.out, "ablation_merged.csv", &ab.merged.to_csv())?;
            write(&s.out, "ablation_unmerged.csv", &ab.unmerged.to_csv())?;
            write_manifests(s, "ablation_merged", &ab.merged.manifests)?;
            write_manifests(s, "ablation_unmerged", &ab.unmerged.manifests)?;
            let summary = json!({
                "merged_geomean_speedup": ab.merged.geomean_speedup,
                "unmerged_geomean_speedup": ab.unmerged.geomean_speedup,
                "delta": ab.delta,
            });
            write(&s.out, "ablation_summary.json", &to_json(&summary))?;
            eprintln!(
                "merged {:.4} vs unmerged {:.4}",
                ab.merged.geomean_speedup, ab.unmerged.geomean_speedup
            );
        }
        EvalMode::Correlation => {
            let report = loocv_evaluate(&c, cfg, s.seed)?;
            let corr = ratio_speedup_correlation(&c, &report)?;
            write(&s.out, "correlation.csv", &corr.to_csv())?;
            let summary = json!({ "r": corr.r, "degenerate": corr.degenerate, "points": corr.points.len() });
            write(&s.out, "correlation_summary.json", &to_json(&summary))?;
            eprintln!("pearson r = {:.4}", corr.r);
        }
    }
    Ok(())
}

fn anneal(s: &Settings, t: &Target, budget: u32) -> Result<()> {
    let w = workload(s, t)?;
    let params = AnnealParams {
        budget,
        ..AnnealParams::default()
    };
    let outcome = anneal_search(&w, &s.grid, &params, s.seed)?;
    write(&s.out, "anneal.json", &to_json(&outcome))?;
    let mut trajectory = String::from("step,partitions,tasks\n");
    for (i, c) in outcome.trajectory.iter().enumerate() {
        trajectory.push_str(&format!("{i},{},{}\n", c.partitions, c.tasks));
    }
    write(&s.out, "anneal_trajectory.csv", &trajectory)?;
    eprintln!(
        "best {} at speedup {:.4} after {} evaluations",
        outcome.config, outcome.speedup, outcome.evaluations
    );
    Ok(())
}
