use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{combine_features, extract_features, Candidates, RawFeatures};
use crate::labeling::SampleMeta;
use crate::seed;
use crate::simulator::{exhaustive_profile, Grid, PerfSurface, StreamConfig, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    #[serde(alias = "train")]
    TrainSuite,
    #[serde(alias = "test")]
    TestSuite,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::TrainSuite => "train-suite",
            Suite::TestSuite => "test-suite",
        })
    }
}

fn default_cores() -> u32 {
    crate::simulator::DEFAULT_TOTAL_CORES
}

fn default_sigma() -> f64 {
    0.02
}

/// One dataset of a program. Optional fields override the program template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub dataset_id: String,
    pub elements: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_iterations: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compute_eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramSpec {
    pub program_id: String,
    /// Programs sharing a family are held out together.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    pub suite: Suite,
    pub bytes_per_element_in: f64,
    pub bytes_per_element_out: f64,
    pub transfer_alpha: f64,
    pub transfer_beta: f64,
    pub compute_eta: f64,
    pub compute_gamma: f64,
    pub thread_overhead: f64,
    pub partition_overhead: f64,
    #[serde(default = "default_cores")]
    pub total_cores: u32,
    pub outer_iterations: u32,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    pub datasets: Vec<DatasetSpec>,
}

impl ProgramSpec {
    pub fn family(&self) -> &str {
        self.family.as_deref().unwrap_or(&self.program_id)
    }

    pub fn workload(&self, d: &DatasetSpec) -> WorkloadSpec {
        WorkloadSpec {
            program_id: self.program_id.clone(),
            dataset_id: d.dataset_id.clone(),
            elements: d.elements,
            bytes_per_element_in: self.bytes_per_element_in,
            bytes_per_element_out: self.bytes_per_element_out,
            transfer_alpha: self.transfer_alpha,
            transfer_beta: self.transfer_beta,
            compute_eta: d.compute_eta.unwrap_or(self.compute_eta),
            compute_gamma: self.compute_gamma,
            thread_overhead: self.thread_overhead,
            partition_overhead: self.partition_overhead,
            total_cores: self.total_cores,
            outer_iterations: d.outer_iterations.unwrap_or(self.outer_iterations),
            noise_sigma: self.noise_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub programs: Vec<ProgramSpec>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = offset - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

impl CorpusSpec {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            source_name: source_name.into(),
            message,
        };
        let spec: CorpusSpec = serde_json::from_str(text)
            .map_err(|e| parse_err(format!("line {} column {}: {e}", e.line(), e.column())))?;

        let mut seen = BTreeSet::new();
        let mut ordinal = 0;
        for (pi, p) in spec.programs.iter().enumerate() {
            for (di, d) in p.datasets.iter().enumerate() {
                if !seen.insert((p.program_id.clone(), d.dataset_id.clone())) {
                    let location = text
                        .match_indices("\"dataset_id\"")
                        .nth(ordinal)
                        .map(|(offset, _)| {
                            let (l, c) = line_col(text, offset);
                            format!("line {l} column {c}: ")
                        })
                        .unwrap_or_default();
                    return Err(parse_err(format!(
                        "{location}programs[{pi}].datasets[{di}].dataset_id: duplicate sample ({}, {})",
                        p.program_id, d.dataset_id
                    )));
                }
                ordinal += 1;
            }
        }
        for (pi, p) in spec.programs.iter().enumerate() {
            if p.datasets.is_empty() {
                return Err(parse_err(format!("programs[{pi}].datasets: program `{}` has no datasets", p.program_id)));
            }
            for (di, d) in p.datasets.iter().enumerate() {
                p.workload(d).validate().map_err(|e| {
                    parse_err(format!("programs[{pi}].datasets[{di}]: {e}"))
                })?;
            }
        }
        let families: Vec<(&str, Suite)> = spec.programs.iter().map(|p| (p.family(), p.suite)).collect();
        for (f, s) in &families {
            if families.iter().any(|(g, t)| g == f && t != s) {
                return Err(parse_err(format!("family `{f}` spans both suites")));
            }
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("corpus spec serialises")
    }

    pub fn sample_count(&self) -> usize {
        self.programs.iter().map(|p| p.datasets.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub meta: SampleMeta,
    pub family: String,
    pub suite: Suite,
    pub surface: PerfSurface,
    pub raw: RawFeatures,
    pub candidates: Candidates,
}

impl Sample {
    pub fn workload(&self) -> &WorkloadSpec {
        &self.surface.workload
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub grid: Grid,
    pub samples: Vec<Sample>,
}

/// Seed for the surface of one (program, dataset) pair.
pub fn sample_seed(master: u64, w: &WorkloadSpec) -> u64 {
    seed::derive(
        master,
        &[seed::hash_str(&w.program_id), seed::hash_str(&w.dataset_id)],
    )
}

fn feature_seed(master: u64) -> u64 {
    seed::derive(master, &[0xFEA7])
}

/// Profile `(1,1)` exactly as corpus construction does, then derive candidates.
pub fn workload_candidates(w: &WorkloadSpec, master: u64) -> Result<Candidates> {
    let s = exhaustive_profile(w, &[StreamConfig::BASELINE], sample_seed(master, w))?;
    let baseline = s.get(StreamConfig::BASELINE).expect("profiled baseline");
    Ok(combine_features(&extract_features(w, baseline, feature_seed(master))?))
}

/// Exhaustive surfaces and features for every sample of `spec`.
pub fn build_corpus(spec: &CorpusSpec, grid: &Grid, master: u64) -> Result<Corpus> {
    let configs = grid.configs();
    if !configs.contains(&StreamConfig::BASELINE) {
        return Err(Error::InvalidGrid("grid must include (1,1)".into()));
    }
    let jobs: Vec<(usize, &ProgramSpec, &DatasetSpec)> = spec
        .programs
        .iter()
        .flat_map(|p| p.datasets.iter().map(move |d| (p, d)))
        .enumerate()
        .map(|(i, (p, d))| (i, p, d))
        .collect();
    let samples = jobs
        .par_iter()
        .map(|&(id, p, d)| {
            let w = p.workload(d);
            for &c in &configs {
                w.check_config(c)?;
            }
            let surface = exhaustive_profile(&w, &configs, sample_seed(master, &w))?;
            let baseline = surface.get(StreamConfig::BASELINE).expect("profiled baseline");
            let raw = extract_features(&w, baseline, feature_seed(master))?;
            let candidates = combine_features(&raw);
            Ok(Sample {
                meta: SampleMeta {
                    sample_id: id,
                    program_id: p.program_id.clone(),
                    dataset_id: d.dataset_id.clone(),
                },
                family: p.family().to_string(),
                suite: p.suite,
                surface,
                raw,
                candidates,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        grid: grid.clone(),
        samples,
    })
}

impl Corpus {
    /// FNV-1a digest of the serialised corpus.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("corpus serialises");
        format!("{:016x}", seed::hash_str(&json))
    }

    pub fn indices(&self, suite: Suite) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.samples[i].suite == suite)
            .collect()
    }

    /// Families of `suite`, sorted.
    pub fn families(&self, suite: Suite) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .samples
            .iter()
            .filter(|s| s.suite == suite)
            .map(|s| s.family.as_str())
            .collect();
        set.into_iter().map(String::from).collect()
    }

    /// `program,dataset,suite,family,<feature names...>`
    pub fn features_csv(&self) -> String {
        let mut out = String::from("program,dataset,suite,family");
        if let Some(s) = self.samples.first() {
            for n in &s.candidates.names {
                out.push(',');
                out.push_str(n);
            }
        }
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{}",
                s.meta.program_id, s.meta.dataset_id, s.suite, s.family
            ));
            for v in &s.candidates.values {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Synthetic regime of a generated program.
struct Template {
    name: &'static str,
    family: &'static str,
    suite: Suite,
    bytes: (f64, f64),
    alpha: f64,
    beta: f64,
    eta: f64,
    gamma: f64,
    thread: f64,
    outer: u32,
    sizes: (f64, f64),
}

#[allow(clippy::too_many_arguments)]
const fn t(
    name: &'static str,
    family: &'static str,
    suite: Suite,
    bytes: (f64, f64),
    alpha: f64,
    beta: f64,
    eta: f64,
    gamma: f64,
    thread: f64,
    outer: u32,
    sizes: (f64, f64),
) -> Template {
    Template {
        name,
        family,
        suite,
        bytes,
        alpha,
        beta,
        eta,
        gamma,
        thread,
        outer,
        sizes,
    }
}

use Suite::{TestSuite as TE, TrainSuite as TR};

const TEMPLATES: &[Template] = &[
    t("vector-add", "vector-add", TR, (8.0, 4.0), 1e-10, 2e-5, 2e-7, 2e-6, 2e-7, 1, (19.0, 22.0)),
    t("saxpy", "saxpy", TR, (8.0, 4.0), 1e-10, 1.5e-5, 2.5e-7, 5e-6, 2e-7, 1, (18.0, 21.0)),
    t("dot-reduce", "dot-reduce", TR, (8.0, 1.0), 1e-10, 5e-5, 8e-7, 4e-5, 4e-7, 2, (18.0, 21.0)),
    t("histogram", "histogram", TR, (1.0, 1.0), 1e-10, 2e-5, 3e-6, 1e-4, 1e-6, 4, (20.0, 23.0)),
    t("conv-sep-r1", "conv-sep", TR, (4.0, 4.0), 1e-10, 2e-5, 6e-6, 3e-5, 2e-6, 8, (17.0, 20.0)),
    t("conv-sep-r8", "conv-sep", TR, (4.0, 4.0), 1e-10, 2e-5, 4e-5, 3e-4, 1e-6, 12, (16.0, 19.0)),
    t("fft-x1y1", "fft", TR, (16.0, 16.0), 1e-10, 4e-5, 1.2e-5, 5e-6, 1e-7, 150, (16.0, 19.0)),
    t("fft-x4y3", "fft", TR, (16.0, 16.0), 1e-10, 4e-5, 3e-5, 1e-5, 1e-6, 120, (15.0, 18.0)),
    t("overlap-balanced", "overlap-balanced", TR, (4.0, 4.0), 1e-10, 1e-5, 1.8e-6, 2e-5, 3e-7, 1, (18.0, 21.0)),
    t("stencil-2d", "stencil-2d", TR, (4.0, 4.0), 1e-10, 2e-5, 2e-5, 4e-5, 4e-6, 100, (15.0, 18.0)),
    t("jacobi-3d", "jacobi-3d", TR, (4.0, 4.0), 1e-10, 3e-5, 2.5e-5, 5e-5, 3e-6, 100, (15.0, 18.0)),
    t("nbody", "nbody", TR, (32.0, 32.0), 1e-10, 3e-5, 2e-4, 3e-4, 3e-6, 2, (15.0, 18.0)),
    t("mat-mul", "mat-mul", TR, (24.0, 8.0), 1e-10, 1e-4, 8e-5, 4e-5, 5e-6, 10, (16.0, 19.0)),
    t("black-scholes", "black-scholes", TR, (40.0, 8.0), 1e-10, 2e-5, 5e-6, 2e-5, 3e-5, 1, (18.0, 21.0)),
    t("monte-carlo", "monte-carlo", TR, (4.0, 4.0), 1e-10, 1e-5, 1e-4, 2e-6, 1e-5, 3, (14.0, 17.0)),
    t("sort-radix", "sort-radix", TR, (4.0, 4.0), 1e-10, 8e-5, 1e-5, 1e-4, 3e-6, 8, (16.0, 19.0)),
    t("scan-prefix", "scan-prefix", TR, (4.0, 4.0), 1e-10, 2e-5, 1.5e-6, 1e-5, 1e-5, 2, (18.0, 21.0)),
    t("dct-8x8", "dct-8x8", TR, (4.0, 4.0), 1e-10, 2e-5, 4e-5, 3e-5, 1e-7, 400, (16.0, 19.0)),
    t("spmv", "spmv", TE, (12.0, 4.0), 1e-10, 2e-5, 1.5e-6, 2e-5, 4e-7, 2, (18.0, 21.0)),
    t("lbm", "lbm", TE, (8.0, 8.0), 1e-10, 3e-5, 2.5e-5, 4e-5, 1e-5, 60, (15.0, 18.0)),
    t("mri-q", "mri-q", TE, (8.0, 8.0), 1e-10, 2e-5, 1.2e-4, 5e-5, 1.5e-5, 150, (14.0, 17.0)),
    t("cutcp", "cutcp", TE, (16.0, 4.0), 1e-10, 3e-5, 4e-5, 4e-5, 5e-6, 12, (15.0, 18.0)),
    t("sad", "sad", TE, (4.0, 1.0), 1e-10, 2e-5, 3.5e-6, 2e-5, 1e-6, 4, (17.0, 20.0)),
    t("tpacf", "tpacf", TE, (4.0, 4.0), 1e-10, 2e-5, 1.5e-4, 4e-5, 3e-6, 2, (13.0, 16.0)),
];

/// Datasets per generated program.
pub const DEFAULT_DATASETS: usize = 10;
/// Shared per-partition management cost of the generated corpus.
pub const DEFAULT_PARTITION_OVERHEAD: f64 = 2e-4;

/// The built-in corpus: 17 train-suite and 6 test-suite programs with
/// [`DEFAULT_DATASETS`] log-spaced sizes each.
pub fn default_corpus_spec() -> CorpusSpec {
    let programs = TEMPLATES
        .iter()
        .map(|tp| {
            let (lo, hi) = tp.sizes;
            let datasets = (0..DEFAULT_DATASETS)
                .map(|i| {
                    let e = lo + (hi - lo) * i as f64 / (DEFAULT_DATASETS - 1) as f64;
                    DatasetSpec {
                        dataset_id: format!("d{i:02}"),
                        elements: 2f64.powf(e).round() as u64,
                        outer_iterations: None,
                        compute_eta: None,
                    }
                })
                .collect();
            ProgramSpec {
                program_id: tp.name.into(),
                family: (tp.family != tp.name).then(|| tp.family.into()),
                suite: tp.suite,
                bytes_per_element_in: tp.bytes.0,
                bytes_per_element_out: tp.bytes.1,
                transfer_alpha: tp.alpha,
                transfer_beta: tp.beta,
                compute_eta: tp.eta,
                compute_gamma: tp.gamma,
                thread_overhead: tp.thread,
                partition_overhead: DEFAULT_PARTITION_OVERHEAD,
                total_cores: default_cores(),
                outer_iterations: tp.outer,
                noise_sigma: default_sigma(),
                datasets,
            }
        })
        .collect();
    CorpusSpec { programs }
}
