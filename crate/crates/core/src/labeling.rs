//! Classification labels from performance surfaces.
//!
//! Every sample starts as its own class holding its well-performing configs.
//! Classes are merged pairwise by similarity weight (shared configs, plus bonuses
//! for a shared program and a shared dataset) until the class representatives
//! are pairwise disjoint and no more than `target_classes` remain.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{PerfSurface, StreamConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sample_id: usize,
    pub program_id: String,
    pub dataset_id: String,
}

/// Well-performing configs of one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub sample_id: usize,
    pub configs: BTreeSet<StreamConfig>,
}

pub const DEFAULT_TOP_PCT: f64 = 3.0;

/// The `ceil(top_pct% · |grid|)` fastest configs (at least one), ties at the
/// cutoff resolved in lexicographic config order.
pub fn well_performing_set(s: &PerfSurface, sample_id: usize, top_pct: f64) -> LabelSet {
    let count = ((top_pct / 100.0 * s.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut ranked: Vec<_> = s.records().iter().collect();
    ranked.sort_by(|a, b| a.runtime.total_cmp(&b.runtime).then(a.config.cmp(&b.config)));
    LabelSet {
        sample_id,
        configs: ranked.iter().take(count).map(|r| r.config).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeParams {
    pub target_classes: usize,
    /// Bonus when two classes share a program.
    pub same_program_weight: f64,
    /// Bonus when two classes share a dataset.
    pub same_dataset_weight: f64,
}

impl Default for MergeParams {
    fn default() -> Self {
        MergeParams {
            target_classes: 28,
            same_program_weight: 150.0,
            same_dataset_weight: 30.0,
        }
    }
}

/// One sample entering the merge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelInput {
    pub meta: SampleMeta,
    pub labels: LabelSet,
    pub oracle_config: StreamConfig,
    pub oracle_speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelClass {
    pub members: Vec<usize>,
    /// Representative config set.
    pub configs: BTreeSet<StreamConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeResult {
    /// sample id -> label id
    pub assignments: BTreeMap<usize, usize>,
    /// label id -> class
    pub classes: BTreeMap<usize, LabelClass>,
    pub merges: usize,
    /// False when merging stopped because no pair had positive weight before
    /// the class-count target was met.
    pub target_met: bool,
}

impl MergeResult {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Unmerged labels: one class per distinct label set.
    pub fn from_label_sets(sets: &[LabelSet]) -> Self {
        let mut sets: Vec<&LabelSet> = sets.iter().collect();
        sets.sort_by_key(|s| s.sample_id);
        let distinct: BTreeSet<&BTreeSet<StreamConfig>> = sets.iter().map(|s| &s.configs).collect();
        let id_of: BTreeMap<&BTreeSet<StreamConfig>, usize> =
            distinct.into_iter().enumerate().map(|(i, c)| (c, i)).collect();
        let mut classes: BTreeMap<usize, LabelClass> = id_of
            .iter()
            .map(|(&c, &id)| {
                (
                    id,
                    LabelClass {
                        members: Vec::new(),
                        configs: c.clone(),
                    },
                )
            })
            .collect();
        let mut assignments = BTreeMap::new();
        for s in sets {
            let id = id_of[&s.configs];
            assignments.insert(s.sample_id, id);
            classes.get_mut(&id).expect("class exists").members.push(s.sample_id);
        }
        MergeResult {
            assignments,
            classes,
            merges: 0,
            target_met: true,
        }
    }
}

struct WorkingClass {
    members: Vec<usize>,
    programs: BTreeSet<String>,
    datasets: BTreeSet<String>,
    configs: BTreeSet<StreamConfig>,
    best_config: StreamConfig,
    best_speedup: f64,
}

impl WorkingClass {
    fn weight(&self, other: &WorkingClass, p: &MergeParams) -> f64 {
        let shared = self.configs.intersection(&other.configs).count() as f64;
        let program = if self.programs.is_disjoint(&other.programs) {
            0.0
        } else {
            p.same_program_weight
        };
        let dataset = if self.datasets.is_disjoint(&other.datasets) {
            0.0
        } else {
            p.same_dataset_weight
        };
        shared + program + dataset
    }

    fn absorb(&mut self, other: WorkingClass) {
        let common: BTreeSet<StreamConfig> =
            self.configs.intersection(&other.configs).copied().collect();
        if other.best_speedup > self.best_speedup {
            self.best_speedup = other.best_speedup;
            self.best_config = other.best_config;
        }
        self.configs = if !common.is_empty() {
            common
        } else {
            BTreeSet::from([self.best_config])
        };
        self.members.extend(other.members);
        self.members.sort_unstable();
        self.programs.extend(other.programs);
        self.datasets.extend(other.datasets);
    }
}

/// Merge per-sample label sets into at most `target_classes` classes.
///
/// One pair merges per round, the highest-weight pair with ties broken by the
/// smaller class ids. A merged class keeps the intersection of the two
/// representative sets or, if that is empty, the oracle config of the member
/// with the highest oracle speedup.
pub fn merge_labels(inputs: &[LabelInput], params: &MergeParams) -> Result<MergeResult> {
    if params.target_classes < 1 {
        return Err(Error::InvalidArgument("target class count must be >= 1".into()));
    }
    if inputs.is_empty() {
        return Err(Error::InsufficientData("no samples to label".into()));
    }
    let mut sorted: Vec<&LabelInput> = inputs.iter().collect();
    sorted.sort_by_key(|i| i.meta.sample_id);
    if sorted.windows(2).any(|w| w[0].meta.sample_id == w[1].meta.sample_id) {
        return Err(Error::InvalidArgument("duplicate sample id".into()));
    }
    if let Some(bad) = sorted.iter().find(|i| i.labels.configs.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "sample {} has an empty label set",
            bad.meta.sample_id
        )));
    }

    let mut classes: Vec<Option<WorkingClass>> = sorted
        .iter()
        .map(|i| {
            Some(WorkingClass {
                members: vec![i.meta.sample_id],
                programs: BTreeSet::from([i.meta.program_id.clone()]),
                datasets: BTreeSet::from([i.meta.dataset_id.clone()]),
                configs: i.labels.configs.clone(),
                best_config: i.oracle_config,
                best_speedup: i.oracle_speedup,
            })
        })
        .collect();

    let mut merges = 0;
    let mut target_met = true;
    loop {
        let alive: Vec<usize> = (0..classes.len()).filter(|&i| classes[i].is_some()).collect();
        let class = |i: usize| classes[i].as_ref().expect("alive class");
        let disjoint = alive.iter().enumerate().all(|(a, &i)| {
            alive[a + 1..]
                .iter()
                .all(|&j| class(i).configs.is_disjoint(&class(j).configs))
        });
        if disjoint && alive.len() <= params.target_classes {
            break;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for (a, &i) in alive.iter().enumerate() {
            for &j in &alive[a + 1..] {
                let w = class(i).weight(class(j), params);
                if best.is_none_or(|(bw, _, _)| w > bw) {
                    best = Some((w, i, j));
                }
            }
        }
        match best {
            Some((w, i, j)) if w > 0.0 => {
                let other = classes[j].take().expect("alive class");
                classes[i].as_mut().expect("alive class").absorb(other);
                merges += 1;
            }
            _ => {
                target_met = alive.len() <= params.target_classes;
                break;
            }
        }
    }

    let mut assignments = BTreeMap::new();
    let mut out = BTreeMap::new();
    for (label, c) in classes.into_iter().flatten().enumerate() {
        for &m in &c.members {
            assignments.insert(m, label);
        }
        out.insert(
            label,
            LabelClass {
                members: c.members,
                configs: c.configs,
            },
        );
    }
    Ok(MergeResult {
        assignments,
        classes: out,
        merges,
        target_met,
    })
}

/// Concrete config for `label`: the representative with the highest mean
/// `performance(sample, config)` over the class members (ties lexicographic).
pub fn label_to_config<F>(label: usize, merge: &MergeResult, performance: F) -> Result<StreamConfig>
where
    F: Fn(usize, StreamConfig) -> Option<f64>,
{
    let class = merge.classes.get(&label).ok_or(Error::UnknownLabel(label))?;
    let mut best: Option<(f64, StreamConfig)> = None;
    for &c in &class.configs {
        let total: f64 = class
            .members
            .iter()
            .map(|&s| performance(s, c).unwrap_or(0.0))
            .sum();
        let mean = total / class.members.len().max(1) as f64;
        if best.is_none_or(|(b, _)| mean > b) {
            best = Some((mean, c));
        }
    }
    best.map(|(_, c)| c)
        .ok_or_else(|| Error::InvalidArgument(format!("label {label} has no configs")))
}

/// Oracle-normalised performance (`oracle runtime / runtime`) of `c` on `s`.
pub fn normalized_performance(s: &PerfSurface, c: StreamConfig) -> Option<f64> {
    let oracle = s
        .records()
        .iter()
        .map(|r| r.runtime)
        .fold(f64::INFINITY, f64::min);
    s.runtime(c).map(|r| oracle / r)
}

/// Representative config for every label, resolved against member surfaces.
pub fn representatives(
    merge: &MergeResult,
    surfaces: &BTreeMap<usize, &PerfSurface>,
) -> Result<BTreeMap<usize, StreamConfig>> {
    merge
        .classes
        .keys()
        .map(|&label| {
            label_to_config(label, merge, |s, c| {
                surfaces.get(&s).and_then(|surf| normalized_performance(surf, c))
            })
            .map(|c| (label, c))
        })
        .collect()
}

/// `sample_id,program_id,dataset_id,label_id,rep_partitions,rep_tasks`
pub fn labels_csv(
    metas: &[SampleMeta],
    merge: &MergeResult,
    reps: &BTreeMap<usize, StreamConfig>,
) -> String {
    let mut out = String::from("sample_id,program_id,dataset_id,label_id,rep_partitions,rep_tasks\n");
    let mut metas: Vec<&SampleMeta> = metas.iter().collect();
    metas.sort_by_key(|m| m.sample_id);
    for m in metas {
        if let Some(&label) = merge.assignments.get(&m.sample_id) {
            let rep = reps[&label];
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                m.sample_id, m.program_id, m.dataset_id, label, rep.partitions, rep.tasks
            ));
        }
    }
    out
}
