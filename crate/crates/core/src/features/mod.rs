//! Program and dataset features.
//!
//! Raw counters are synthesised from a [`WorkloadSpec`] and its profiled
//! `(1,1)` run following the fixed 38-entry [`MANIFEST`]. They are then
//! combined into rates, pruned by pairwise correlation, min-max scaled and
//! ranked by PCA + Varimax.

mod importance;
mod selection;

pub use importance::{feature_importance, varimax, varimax_criterion, Importance, VarimaxResult};
pub use selection::{
    apply_scaler, fit_scaler, pearson_matrix, prune_correlated, CorrelationMatrix, FeatureVector,
    ScalingParams, DEFAULT_CORRELATION_THRESHOLD,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::simulator::{PerfRecord, StreamConfig, WorkloadSpec};

/// One raw counter in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FeatureDef {
    pub name: &'static str,
    pub formula: &'static str,
    /// Whether the value changes with `elements` alone.
    pub size_dependent: bool,
}

const fn def(name: &'static str, formula: &'static str, size_dependent: bool) -> FeatureDef {
    FeatureDef {
        name,
        formula,
        size_dependent,
    }
}

pub const RAW_FEATURE_COUNT: usize = 38;

/// Symbols used by the formulas: N elements, b_in/b_out bytes per element,
/// alpha/beta transfer cost, eta/gamma compute cost, cores, outer iterations,
/// T_thr = thread_overhead·cores·outer, T_comm = alpha·N·(b_in+b_out) + 2·beta,
/// I = instruction_count, R = profiled (1,1) runtime, j = seeded jitter.
pub static MANIFEST: [FeatureDef; RAW_FEATURE_COUNT] = [
    def("loop_nest", "1 + min(3, floor(log10(outer)))", false),
    def("loop_count", "N", true),
    def("xfer_mem_calls", "ceil(b_in/8) + ceil(b_out/8)", false),
    def("dts", "N·(b_in + b_out)", true),
    def("redundant_transfer_size", "beta / alpha", false),
    def("max_blocks", "clamp(floor(N·eta / (cores·gamma)), 1, N)", true),
    def("min_task_unit", "max(1, round(gamma·cores / eta))", false),
    def("instruction_count", "2e9·eta·N", true),
    def("branch_hits", "B − branch_misses, B = 0.15·I + 1000·outer·cores", true),
    def("branch_misses", "B·(0.01 + 0.3·min(1, T_thr/R))·j", true),
    def("l1_accesses", "0.35·I + N·(b_in + b_out)/8", true),
    def("l1_misses", "l1_accesses·(0.02 + 0.5·min(1, T_comm/R))·j", true),
    def("e_stage_cycles", "0.93·I·j", true),
    def("total_cycles", "1.21·I·j", true),
    def("fp_operations", "0.42·I·j", true),
    def("load_instructions", "0.31·I·j", true),
    def("store_instructions", "0.12·I·j", true),
    def("vector_instructions", "0.18·I·j", true),
    def("dma_descriptors", "dts / 4096 · j", true),
    def("pcie_packets", "dts / 256 · j", true),
    def("device_footprint", "1.05·dts·j", true),
    def("page_faults", "dts / 65536 · j", true),
    def("loop_body_ops", "6·N·j", true),
    def("induction_updates", "N·j", true),
    def("array_refs", "2·xfer_mem_calls", false),
    def("buffer_allocs", "xfer_mem_calls + 1", false),
    def("kernel_args", "xfer_mem_calls + 2", false),
    def("work_groups", "max_blocks·j", true),
    def("grain_steps", "3·max_blocks·j", true),
    def("halo_bytes", "2·beta/alpha", false),
    def("transfer_setup_bytes", "beta/alpha + 64", false),
    def("nest_barriers", "loop_nest − 1", false),
    def("region_entries", "2·loop_nest", false),
    def("per_core_elements", "1.02·N / cores · j", true),
    def("thread_count", "cores", false),
    def("device_count", "1", false),
    def("kernel_count", "1", false),
    def("stream_api_calls", "2", false),
];

/// The feature names the model is built on after combination and pruning
/// of the default corpus.
pub const SELECTED_FEATURES: [&str; 10] = [
    "loop_nest",
    "loop_count",
    "xfer_mem_calls",
    "dts",
    "redundant_transfer_size",
    "max_blocks",
    "min_task_unit",
    "instruction_count",
    "branch_miss_rate",
    "l1_dcr",
];

pub fn manifest_index(name: &str) -> Option<usize> {
    MANIFEST.iter().position(|d| d.name == name)
}

/// Manifest as JSON: order, names, formulas and size dependence.
pub fn manifest_json() -> String {
    #[derive(Serialize)]
    struct Entry<'a> {
        order: usize,
        #[serde(flatten)]
        def: &'a FeatureDef,
    }
    let entries: Vec<_> = MANIFEST
        .iter()
        .enumerate()
        .map(|(order, def)| Entry { order, def })
        .collect();
    serde_json::to_string_pretty(&entries).expect("manifest serialises")
}

/// The 38 raw counters of one sample, in manifest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFeatures {
    values: Vec<f64>,
}

impl RawFeatures {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != RAW_FEATURE_COUNT {
            return Err(Error::Input(format!(
                "expected {RAW_FEATURE_COUNT} raw features, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "raw feature `{}` is not finite",
                MANIFEST[i].name
            )));
        }
        Ok(RawFeatures { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        manifest_index(name).map(|i| self.values[i])
    }
}

/// Synthesise raw counters for `w` from its profiled `(1,1)` run.
///
/// Jitter is keyed by `(seed, program_id, elements)`, so two datasets of one
/// program that differ only in size differ only in size-dependent counters.
pub fn extract_features(w: &WorkloadSpec, profile: &PerfRecord, seed: u64) -> Result<RawFeatures> {
    w.validate()?;
    if profile.config != StreamConfig::BASELINE {
        return Err(Error::InvalidArgument(format!(
            "feature extraction needs the (1,1) profile, got {}",
            profile.config
        )));
    }
    let mut rng = seed::rng(seed::derive(
        seed,
        &[seed::hash_str(&w.program_id), w.elements],
    ));
    let mut jitter = |spread: f64| 1.0 + spread * (2.0 * rng.random::<f64>() - 1.0);

    let n = w.elements as f64;
    let cores = f64::from(w.total_cores);
    let outer = f64::from(w.outer_iterations);
    let bytes = w.bytes_per_element_in + w.bytes_per_element_out;
    let runtime = profile.runtime.max(f64::MIN_POSITIVE);
    let comm_s = w.transfer_alpha * n * bytes + 2.0 * w.transfer_beta;
    let thread_s = w.thread_overhead * cores * outer;

    let loop_nest = 1.0 + outer.log10().floor().min(3.0);
    let xfer_mem_calls =
        (w.bytes_per_element_in / 8.0).ceil() + (w.bytes_per_element_out / 8.0).ceil();
    let dts = n * bytes;
    let redundant = if w.transfer_alpha > 0.0 {
        (w.transfer_beta / w.transfer_alpha).round()
    } else {
        0.0
    };
    let max_blocks = if w.compute_gamma > 0.0 {
        (n * w.compute_eta / (cores * w.compute_gamma))
            .floor()
            .clamp(1.0, n)
    } else {
        n
    };
    let min_task_unit = if w.compute_eta > 0.0 {
        (w.compute_gamma * cores / w.compute_eta).round().max(1.0)
    } else {
        1.0
    };
    let instructions = (2e9 * w.compute_eta * n).round();

    let branches = 0.15 * instructions + 1000.0 * outer * cores;
    let miss_rate = ((0.01 + 0.3 * (thread_s / runtime).min(1.0)) * jitter(0.05)).min(1.0);
    let branch_misses = (branches * miss_rate).round();
    let branch_hits = branches.round() - branch_misses;
    let l1_accesses = (0.35 * instructions + dts / 8.0).round();
    let l1_rate = ((0.02 + 0.5 * (comm_s / runtime).min(1.0)) * jitter(0.05)).min(1.0);
    let l1_misses = (l1_accesses * l1_rate).round();

    let mut values = vec![
        loop_nest,
        n,
        xfer_mem_calls,
        dts,
        redundant,
        max_blocks,
        min_task_unit,
        instructions,
        branch_hits,
        branch_misses,
        l1_accesses,
        l1_misses,
    ];
    let mut scaled = |base: f64, factor: f64| (base * factor * jitter(0.01)).round();
    values.extend([
        scaled(instructions, 0.93),
        scaled(instructions, 1.21),
        scaled(instructions, 0.42),
        scaled(instructions, 0.31),
        scaled(instructions, 0.12),
        scaled(instructions, 0.18),
        scaled(dts, 1.0 / 4096.0),
        scaled(dts, 1.0 / 256.0),
        scaled(dts, 1.05),
        scaled(dts, 1.0 / 65536.0),
        scaled(n, 6.0),
        scaled(n, 1.0),
    ]);
    values.extend([
        2.0 * xfer_mem_calls,
        xfer_mem_calls + 1.0,
        xfer_mem_calls + 2.0,
    ]);
    let mut scaled = |base: f64, factor: f64| (base * factor * jitter(0.01)).round();
    values.extend([scaled(max_blocks, 1.0), scaled(max_blocks, 3.0)]);
    values.extend([
        2.0 * redundant,
        redundant + 64.0,
        loop_nest - 1.0,
        2.0 * loop_nest,
    ]);
    values.push((1.02 * n / cores * jitter(0.01)).round());
    values.extend([cores, 1.0, 1.0, 2.0]);
    RawFeatures::from_values(values)
}

/// Candidate features: combined rates plus the raw counters they do not consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidates {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl Candidates {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    /// Values for `names`, in that order.
    pub fn select(&self, names: &[String]) -> Result<Vec<f64>> {
        names
            .iter()
            .map(|n| {
                self.get(n)
                    .ok_or_else(|| Error::Input(format!("unknown feature `{n}`")))
            })
            .collect()
    }
}

fn rate(numerator: f64, denominator: f64) -> f64 {
    if denominator > 0.0 {
        numerator / denominator
    } else {
        0.0
    }
}

/// Replace hit/miss and access/miss counter pairs with rates. Each rate takes
/// the manifest position of the first counter it consumes.
pub fn combine_features(raw: &RawFeatures) -> Candidates {
    let v = raw.values();
    let at = |name: &str| v[manifest_index(name).expect("manifest name")];
    let (hits, misses) = (at("branch_hits"), at("branch_misses"));
    let (accesses, l1_misses) = (at("l1_accesses"), at("l1_misses"));

    let mut names = Vec::with_capacity(RAW_FEATURE_COUNT - 2);
    let mut values = Vec::with_capacity(RAW_FEATURE_COUNT - 2);
    for (def, &x) in MANIFEST.iter().zip(v) {
        match def.name {
            "branch_hits" => {
                names.push("branch_miss_rate".to_string());
                values.push(rate(misses, hits + misses));
            }
            "l1_accesses" => {
                names.push("l1_dcr".to_string());
                values.push(rate(l1_misses, accesses));
            }
            "branch_misses" | "l1_misses" => {}
            name => {
                names.push(name.to_string());
                values.push(x);
            }
        }
    }
    Candidates { names, values }
}
