//! Acceptance criteria 1-10. Runs without the libtest harness so the
//! PASS/FAIL line for each criterion always reaches the output.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use streamtune::baselines::{liu_optimal_tasks, werkhoven_optimal_streams, LiuCoefficients, LogGPParams};
use streamtune::features::{
    apply_scaler, feature_importance, fit_scaler, pearson_matrix, prune_correlated, varimax,
    varimax_criterion, SELECTED_FEATURES,
};
use streamtune::harness::{
    build_corpus, compare_schemes, default_corpus_spec, fit_pipeline, loocv_evaluate,
    merging_ablation, ratio_speedup_correlation, Corpus, EvalReport, PipelineConfig, Suite,
};
use streamtune::labeling::{merge_labels, LabelInput, LabelSet, MergeParams, SampleMeta};
use streamtune::learner::svm::{smo, train_svm, Kernel, KernelParams, SvmModel};
use streamtune::learner::{Classifier, TrainedModel};
use streamtune::seed;
use streamtune::simulator::{
    pipeline_makespan, stage_durations, AnnealParams, Grid, StageDurations, StreamConfig,
    WorkloadSpec,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

const SEED: u64 = 42;

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

// ---------------------------------------------------------------- criterion 1

fn liu_brute_force(c: &LiuCoefficients, n: u64) -> Vec<u64> {
    let nf = n as f64;
    let t = |m: f64| c.alpha * m + nf * c.gamma / m + nf * c.eta + c.beta;
    let best = (1..=n).map(|m| t(m as f64)).fold(f64::INFINITY, f64::min);
    (1..=n)
        .filter(|&m| t(m as f64) <= best * (1.0 + 1e-12))
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(101);
    let grid = Grid::desk();
    let mut clamped = 0;
    for trial in 0..1000 {
        let alpha = log_uniform(&mut rng, 1e-10, 1e-5);
        let c = LiuCoefficients {
            alpha,
            beta: log_uniform(&mut rng, 1e-7, 1e-3),
            eta: log_uniform(&mut rng, 1e-10, 1e-6),
            gamma: alpha * log_uniform(&mut rng, 1e-3, 1e3),
            transfer_r2: 1.0,
            compute_r2: 1.0,
        };
        let n = log_uniform(&mut rng, 2.0, 50_000.0).round().max(1.0) as u64;
        let choice = liu_optimal_tasks(&c, n, &grid).map_err(|e| e.to_string())?;
        let argmin = liu_brute_force(&c, n);
        if choice.chunk >= n as f64 {
            clamped += 1;
        }
        ensure!(
            argmin.iter().any(|&m| (choice.chunk - m as f64).abs() <= 1.0),
            "trial {trial}: m*={} but brute-force argmin {:?} (N={n})",
            choice.chunk,
            argmin
        );
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("1000 sets, {clamped} clamped to N, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let mut rng = seed::rng(202);
    let grid = Grid::desk();
    let (mut dh_case, mut hd_case, mut zero_gap) = (0, 0, 0);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let gap = if trial % 10 == 0 {
            0.0
        } else {
            log_uniform(&mut rng, 1e-7, 1e-3)
        };
        let p = LogGPParams {
            latency: log_uniform(&mut rng, 1e-7, 1e-5),
            overhead: log_uniform(&mut rng, 1e-7, 1e-5),
            gap,
            processors: rng.random_range(1..=240),
            g_hd: log_uniform(&mut rng, 1e-11, 1e-8),
            g_dh: log_uniform(&mut rng, 1e-11, 1e-8),
            b_hd: log_uniform(&mut rng, 1e3, 1e9),
            b_dh: log_uniform(&mut rng, 1e3, 1e9),
            t_kernel: log_uniform(&mut rng, 1e-4, 10.0),
        };
        let rhs = if p.b_dh > p.b_hd {
            dh_case += 1;
            p.t_kernel + p.b_dh * p.g_dh
        } else {
            hd_case += 1;
            p.b_hd * p.g_hd + p.t_kernel
        };
        let x = werkhoven_optimal_streams(&p, &grid)
            .map_err(|e| format!("trial {trial}: {e}"))?
            .continuous;
        let lhs = p.b_dh * p.g_dh + p.gap * (x - 1.0);
        let right = rhs / x;
        let rel = (lhs - right).abs() / lhs.abs().max(right.abs());
        worst = worst.max(rel);
        ensure!(rel < 1e-9, "trial {trial}: relative residual {rel:e}");
        if gap == 0.0 {
            zero_gap += 1;
            let linear = rhs / (p.b_dh * p.g_dh);
            ensure!(x == linear, "trial {trial}: g=0 root {x} != linear form {linear}");
        }
    }
    ensure!(dh_case > 0 && hd_case > 0, "only one case exercised");
    Ok(format!(
        "{dh_case} dh-case, {hd_case} hd-case, {zero_gap} with g=0, worst residual {worst:.1e}"
    ))
}

// ---------------------------------------------------------------- criterion 3

fn label_input(id: usize, program: String, dataset: String, configs: BTreeSet<StreamConfig>, speedup: f64) -> LabelInput {
    LabelInput {
        meta: SampleMeta {
            sample_id: id,
            program_id: program,
            dataset_id: dataset,
        },
        oracle_config: *configs.iter().next().expect("non-empty label set"),
        labels: LabelSet {
            sample_id: id,
            configs,
        },
        oracle_speedup: speedup,
    }
}

fn check_merge_invariants(inputs: &[LabelInput], params: &MergeParams) -> Result<usize, String> {
    let n = inputs.len();
    let m = merge_labels(inputs, params).map_err(|e| e.to_string())?;
    ensure!(m.merges < n, "{} merges for {n} samples", m.merges);
    ensure!(m.merges + m.class_count() == n, "merges and classes do not add up");
    ensure!(m.assignments.len() == n, "not every sample is assigned");
    for i in inputs {
        let label = m.assignments[&i.meta.sample_id];
        ensure!(
            m.classes[&label].members.contains(&i.meta.sample_id),
            "sample {} missing from its class",
            i.meta.sample_id
        );
    }
    if m.class_count() > 1 {
        let sets: Vec<&BTreeSet<StreamConfig>> = m.classes.values().map(|c| &c.configs).collect();
        for a in 0..sets.len() {
            ensure!(!sets[a].is_empty(), "empty representative set");
            for b in a + 1..sets.len() {
                ensure!(sets[a].is_disjoint(sets[b]), "representative sets overlap");
            }
        }
    }
    Ok(m.class_count())
}

fn criterion_3() -> Outcome {
    let mut rng = seed::rng(303);
    let universe: Vec<StreamConfig> = Grid::desk().configs();
    for trial in 0..200 {
        let n = rng.random_range(1..=50);
        let mut pairs = BTreeSet::new();
        while pairs.len() < n {
            pairs.insert((rng.random_range(0..10), rng.random_range(0..8)));
        }
        let pool = rng.random_range(3..=universe.len());
        let inputs: Vec<LabelInput> = pairs
            .into_iter()
            .enumerate()
            .map(|(id, (p, d))| {
                let k = rng.random_range(1..=5);
                let configs = (0..k)
                    .map(|_| universe[rng.random_range(0..pool)])
                    .collect();
                label_input(id, format!("p{p}"), format!("d{d}"), configs, rng.random_range(1.0..3.0))
            })
            .collect();
        let params = MergeParams {
            target_classes: rng.random_range(1..=30),
            same_program_weight: [0.0, 1.0, 150.0][rng.random_range(0..3)],
            same_dataset_weight: [0.0, 1.0, 30.0][rng.random_range(0..3)],
        };
        check_merge_invariants(&inputs, &params).map_err(|e| format!("corpus {trial}: {e}"))?;
    }

    // 28 programs, each with one config common to all its samples plus one
    // config unique to every sample: 101 distinct raw labels.
    let mut inputs = Vec::new();
    for id in 0..101 {
        let program = if id < 68 { id / 4 } else { 17 + (id - 68) / 3 };
        let common = StreamConfig::new(1000 + program as u32, 1);
        let unique = StreamConfig::new(1, 1000 + id as u32);
        inputs.push(label_input(
            id,
            format!("prog{program:02}"),
            format!("data{id:03}"),
            BTreeSet::from([common, unique]),
            1.5,
        ));
    }
    let raw: BTreeSet<&BTreeSet<StreamConfig>> = inputs.iter().map(|i| &i.labels.configs).collect();
    ensure!(raw.len() == 101, "fixture has {} raw labels", raw.len());
    let params = MergeParams {
        target_classes: 28,
        ..MergeParams::default()
    };
    let classes = check_merge_invariants(&inputs, &params)?;
    ensure!(classes == 28, "101 raw labels merged into {classes} classes, expected 28");
    Ok("200 random corpora hold the invariants; 101 raw labels -> 28 classes".into())
}

// ---------------------------------------------------------------- criterion 4

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn trace_monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - 1e-12)
}

fn kaiser_normalised(l: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = l.clone();
    for mut row in out.row_iter_mut() {
        let h = row.norm();
        if h > 0.0 {
            row /= h;
        }
    }
    out
}

fn criterion_4(corpus: &Corpus) -> Outcome {
    let idx = corpus.indices(Suite::TrainSuite);
    let names = corpus.samples[idx[0]].candidates.names.clone();
    let rows: Vec<Vec<f64>> = idx.iter().map(|&i| corpus.samples[i].candidates.values.clone()).collect();
    let matrix = pearson_matrix(&names, &rows).map_err(|e| e.to_string())?;
    let kept = prune_correlated(&matrix, 0.7);
    ensure!(!kept.is_empty(), "pruning kept nothing");

    let col = |name: &str| -> Vec<f64> {
        let j = names.iter().position(|n| n == name).expect("known feature");
        rows.iter().map(|r| r[j]).collect()
    };
    let mut max_r = 0.0f64;
    for a in 0..kept.len() {
        for b in a + 1..kept.len() {
            let r = pearson(&col(&kept[a]), &col(&kept[b])).abs();
            max_r = max_r.max(r);
        }
    }
    ensure!(max_r <= 0.7, "max pairwise |r| after pruning is {max_r}");
    for f in SELECTED_FEATURES {
        ensure!(kept.iter().any(|k| k == f), "feature {f} was pruned");
    }

    let kept_rows: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| corpus.samples[i].candidates.select(&kept))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let again = prune_correlated(&pearson_matrix(&kept, &kept_rows).map_err(|e| e.to_string())?, 0.7);
    ensure!(again == kept, "pruning is not idempotent: {kept:?} -> {again:?}");

    let scaler = fit_scaler(&kept, &kept_rows).map_err(|e| e.to_string())?;
    let mut scaled = Vec::new();
    for s in &corpus.samples {
        let v = apply_scaler(&scaler, &s.candidates.select(&kept).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        ensure!(
            v.as_slice().iter().all(|x| (0.0..=1.0).contains(x)),
            "scaled value outside [0,1] for sample {}",
            s.meta.sample_id
        );
        if s.suite == Suite::TrainSuite {
            scaled.push(v.0);
        }
    }

    let imp = feature_importance(&kept, &scaled).map_err(|e| e.to_string())?;
    ensure!(trace_monotone(&imp.criterion_trace), "corpus Varimax trace decreases: {:?}", imp.criterion_trace);
    let mut rng = seed::rng(404);
    for trial in 0..50 {
        let (p, k) = (rng.random_range(3..12), rng.random_range(2..5));
        let l = DMatrix::from_fn(p, k, |_, _| rng.random_range(-1.0..1.0));
        let v = varimax(&l, 100, 1e-12);
        ensure!(trace_monotone(&v.criterion_trace), "random trial {trial}: trace decreases");
        let end = varimax_criterion(&kaiser_normalised(&v.rotated));
        let last = *v.criterion_trace.last().expect("trace");
        ensure!((end - last).abs() <= 1e-9, "random trial {trial}: final criterion {end} != trace {last}");
        let orth = (v.rotation.transpose() * &v.rotation - DMatrix::identity(k, k)).abs().max();
        ensure!(orth < 1e-9, "random trial {trial}: rotation not orthogonal ({orth:e})");
    }
    Ok(format!("{} features kept, max |r| {max_r:.3}, Varimax traces monotone", kept.len()))
}

// ---------------------------------------------------------------- criterion 5

/// Exact minimiser of the SVM dual by enumerating active sets.
fn qp_oracle(k: &[Vec<f64>], y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[i][j]);
    let objective = |a: &DVector<f64>| 0.5 * a.dot(&(&q * a)) - a.sum();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for code in 0..3usize.pow(n as u32) {
        // 0: at zero, 1: at C, 2: free
        let state: Vec<usize> = (0..n).map(|i| code / 3usize.pow(i as u32) % 3).collect();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut a = DVector::from_fn(n, |i, _| if state[i] == 1 { c } else { 0.0 });
        if !free.is_empty() {
            let f = free.len();
            let mut m = DMatrix::zeros(f + 1, f + 1);
            let mut rhs = DVector::zeros(f + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    m[(r, s)] = q[(i, j)];
                }
                m[(r, f)] = y[i];
                m[(f, r)] = y[i];
                let fixed: f64 = (0..n).filter(|&j| state[j] == 1).map(|j| q[(i, j)] * c).sum();
                rhs[r] = 1.0 - fixed;
            }
            rhs[f] = -(0..n).filter(|&j| state[j] == 1).map(|j| y[j] * c).sum::<f64>();
            let Some(sol) = m.lu().solve(&rhs) else { continue };
            for (r, &i) in free.iter().enumerate() {
                a[i] = sol[r];
            }
        }
        let feasible = a.iter().all(|&v| (-1e-10..=c + 1e-10).contains(&v))
            && a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs() < 1e-9;
        if feasible {
            let obj = objective(&a);
            if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                best = Some((a, obj));
            }
        }
    }
    let (a, obj) = best.expect("the zero vector is always feasible");
    (a.iter().copied().collect(), obj)
}

fn check_machines(m: &SvmModel) -> Result<(), String> {
    for (i, mach) in m.machines.iter().enumerate() {
        ensure!(
            mach.coef.iter().all(|&v| v.abs() <= m.c * (1.0 + 1e-12)),
            "machine {i}: |alpha| exceeds C"
        );
        let sum: f64 = mach.coef.iter().sum();
        ensure!(sum.abs() <= 1e-8, "machine {i}: sum alpha*y = {sum:e}");
    }
    Ok(())
}

fn criterion_5(corpus: &Corpus) -> Outcome {
    let quad = KernelParams {
        kernel: Kernel::Quadratic,
        gamma: 1.0,
        coef0: 1.0,
    };
    let xor_x = vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]];
    let xor_y = vec![0, 0, 1, 1];
    let xor = train_svm(&xor_x, &xor_y, quad, 10.0).map_err(|e| e.to_string())?;
    for (x, &y) in xor_x.iter().zip(&xor_y) {
        ensure!(xor.predict(x) == y, "XOR point {x:?} misclassified");
    }
    check_machines(&xor)?;

    let mut rng = seed::rng(505);
    let mut worst_obj = 0.0f64;
    let mut worst_alpha = 0.0f64;
    for trial in 0..40 {
        let n = rng.random_range(3..=6);
        let kernel = if trial % 2 == 0 {
            quad
        } else {
            KernelParams {
                kernel: Kernel::Gaussian,
                gamma: 0.5,
                coef0: 0.0,
            }
        };
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let mut y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let c = [0.5, 1.0, 10.0][trial % 3];
        let k: Vec<Vec<f64>> = x.iter().map(|a| x.iter().map(|b| kernel.eval(a, b)).collect()).collect();
        let sol = smo(&k, &y, c, 100_000).map_err(|e| e.to_string())?;
        ensure!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)), "trial {trial}: alpha outside [0,C]");
        let sum: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        ensure!(sum.abs() <= 1e-8, "trial {trial}: sum alpha*y = {sum:e}");
        let (oracle_alpha, oracle_obj) = qp_oracle(&k, &y, c);
        let obj: f64 = 0.5
            * (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| sol.alpha[i] * sol.alpha[j] * y[i] * y[j] * k[i][j])
                .sum::<f64>()
            - sol.alpha.iter().sum::<f64>();
        let gap = (obj - oracle_obj) / oracle_obj.abs().max(1.0);
        ensure!(gap >= -1e-9, "trial {trial}: SMO objective {obj} below the exact optimum {oracle_obj}");
        ensure!(gap <= 1e-3, "trial {trial}: SMO objective {obj} vs exact {oracle_obj}");
        worst_obj = worst_obj.max(gap);
        if trial % 2 == 1 {
            // Strictly convex: the optimum is unique.
            let d = sol.alpha.iter().zip(&oracle_alpha).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst_alpha = worst_alpha.max(d / c);
            ensure!(d <= 0.05 * c, "trial {trial}: alpha {:?} vs exact {:?}", sol.alpha, oracle_alpha);
        }
    }

    let x: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let y: Vec<usize> = x.iter().map(|r| ((r[0] + r[1]) * 2.0) as usize % 4).collect();
    for kernel in [quad, KernelParams { kernel: Kernel::Linear, gamma: 1.0, coef0: 0.0 }] {
        check_machines(&train_svm(&x, &y, kernel, 5.0).map_err(|e| e.to_string())?)?;
    }

    let idx = corpus.indices(Suite::TrainSuite);
    let (model, _) = fit_pipeline(corpus, &idx, &PipelineConfig::default(), SEED).map_err(|e| e.to_string())?;
    let Classifier::Svm(svm) = &model.classifier else {
        return Err("default learner is not an SVM".into());
    };
    check_machines(svm)?;
    let json = model.to_json().map_err(|e| e.to_string())?;
    let back = TrainedModel::from_json(&json, "round-trip").map_err(|e| e.to_string())?;
    ensure!(back == model, "model changed across JSON round-trip");
    for s in &corpus.samples {
        let raw = s.candidates.select(&model.features).map_err(|e| e.to_string())?;
        let a = model.predict_raw(&raw).map_err(|e| e.to_string())?;
        let b = back.predict_raw(&raw).map_err(|e| e.to_string())?;
        ensure!(a == b, "prediction differs after round-trip for sample {}", s.meta.sample_id);
        for mach in &svm.machines {
            let scaled = apply_scaler(&model.scaler, &raw).map_err(|e| e.to_string())?;
            let Classifier::Svm(bsvm) = &back.classifier else { unreachable!() };
            let other = bsvm.machines.iter().find(|m| m.positive == mach.positive && m.negative == mach.negative).expect("machine");
            ensure!(
                mach.decision(&svm.kernel, scaled.as_slice()).to_bits()
                    == other.decision(&bsvm.kernel, scaled.as_slice()).to_bits(),
                "decision value not bit-identical after round-trip"
            );
        }
    }
    Ok(format!(
        "XOR separated; SMO within {worst_obj:.1e} of exact dual optimum (alpha within {worst_alpha:.1e}·C); round-trip bit-exact"
    ))
}

// ---------------------------------------------------------------- criterion 6

fn oracle_stages(w: &WorkloadSpec, c: StreamConfig) -> StageDurations {
    let cores = (w.total_cores / c.partitions).max(1) as f64;
    let t = c.tasks as u64;
    let mut chunks = vec![w.elements / t; t as usize];
    *chunks.last_mut().unwrap() += w.elements % t;
    let threading = w.thread_overhead * cores * w.outer_iterations as f64 / t as f64;
    StageDurations {
        transfer_in: chunks.iter().map(|&m| w.transfer_alpha * w.bytes_per_element_in * m as f64 + w.transfer_beta).collect(),
        compute: chunks.iter().map(|&m| w.compute_eta * m as f64 / cores + w.compute_gamma + threading).collect(),
        transfer_out: chunks.iter().map(|&m| w.transfer_alpha * w.bytes_per_element_out * m as f64 + w.transfer_beta).collect(),
    }
}

/// Search state over channel orderings.
#[derive(Clone)]
struct Schedule {
    channel_free: f64,
    in_done: Vec<Option<f64>>,
    out_done: Vec<bool>,
    makespan: f64,
}

struct Search<'a> {
    stages: &'a StageDurations,
    partitions: usize,
    fifo: bool,
    complete: usize,
    best: f64,
}

impl Search<'_> {
    /// Finish time of every task's compute, where it is already determined.
    fn compute_finish(&self, s: &Schedule) -> Vec<Option<f64>> {
        let t = self.stages.compute.len();
        let mut finish = vec![None; t];
        for p in 0..self.partitions {
            let mut free = 0.0f64;
            for task in (p..t).step_by(self.partitions) {
                let Some(ready) = s.in_done[task] else { break };
                free = free.max(ready) + self.stages.compute[task];
                finish[task] = Some(free);
            }
        }
        finish
    }

    fn visit(&mut self, s: Schedule) {
        let t = self.stages.compute.len();
        let finish = self.compute_finish(&s);
        // (ready, task, direction: 0 = in, 1 = out)
        let mut options: Vec<(f64, usize, u8)> = Vec::new();
        for task in 0..t {
            if s.in_done[task].is_none() {
                options.push((0.0, task, 0));
            } else if !s.out_done[task] {
                if let Some(r) = finish[task] {
                    options.push((r, task, 1));
                }
            }
        }
        if options.is_empty() {
            self.complete += 1;
            self.best = self.best.min(s.makespan);
            return;
        }
        if self.fifo {
            let earliest = options.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);
            let now = s.channel_free.max(earliest);
            let pick = options
                .iter()
                .filter(|o| o.0 <= now)
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
                .copied()
                .expect("a candidate is ready");
            options = vec![pick];
        }
        for (ready, task, dir) in options {
            let mut next = s.clone();
            let start = s.channel_free.max(ready);
            if dir == 0 {
                let end = start + self.stages.transfer_in[task];
                next.channel_free = end;
                next.in_done[task] = Some(end);
            } else {
                let end = start + self.stages.transfer_out[task];
                next.channel_free = end;
                next.out_done[task] = true;
                next.makespan = next.makespan.max(end);
            }
            self.visit(next);
        }
    }
}

fn enumerate(stages: &StageDurations, partitions: u32, fifo: bool) -> (usize, f64) {
    let t = stages.compute.len();
    let mut search = Search {
        stages,
        partitions: partitions as usize,
        fifo,
        complete: 0,
        best: f64::INFINITY,
    };
    search.visit(Schedule {
        channel_free: 0.0,
        in_done: vec![None; t],
        out_done: vec![false; t],
        makespan: 0.0,
    });
    (search.complete, search.best)
}

fn random_workload(rng: &mut ChaCha8Rng, dyadic: bool) -> WorkloadSpec {
    let pick = |rng: &mut ChaCha8Rng, xs: &[f64]| xs[rng.random_range(0..xs.len())];
    let (alpha, beta, eta, gamma, tho) = if dyadic {
        // Small binary fractions make exact ties between ready times likely.
        (
            pick(rng, &[0.25, 0.5, 1.0]),
            pick(rng, &[0.0, 0.5, 1.0]),
            pick(rng, &[0.5, 1.0, 2.0, 4.0]),
            pick(rng, &[0.0, 0.25, 1.0]),
            pick(rng, &[0.0, 0.125]),
        )
    } else {
        (
            log_uniform(rng, 1e-9, 1e-7),
            log_uniform(rng, 1e-6, 1e-4),
            log_uniform(rng, 1e-7, 1e-5),
            log_uniform(rng, 1e-6, 1e-4),
            log_uniform(rng, 1e-8, 1e-6),
        )
    };
    WorkloadSpec {
        program_id: "random".into(),
        dataset_id: "w".into(),
        elements: if dyadic { rng.random_range(5..=40) } else { rng.random_range(1_000..=100_000) },
        bytes_per_element_in: pick(rng, &[1.0, 4.0, 8.0]),
        bytes_per_element_out: pick(rng, &[1.0, 4.0, 8.0]),
        transfer_alpha: alpha,
        transfer_beta: beta,
        compute_eta: eta,
        compute_gamma: gamma,
        thread_overhead: tho,
        partition_overhead: 0.0,
        total_cores: pick(rng, &[8.0, 12.0, 16.0, 224.0]) as u32,
        outer_iterations: rng.random_range(1..=10),
        noise_sigma: 0.0,
    }
}

fn zero_overhead(elements: u64, alpha: f64, eta: f64, cores: u32) -> WorkloadSpec {
    WorkloadSpec {
        program_id: "zero".into(),
        dataset_id: "w".into(),
        elements,
        bytes_per_element_in: 4.0,
        bytes_per_element_out: 4.0,
        transfer_alpha: alpha,
        transfer_beta: 0.0,
        compute_eta: eta,
        compute_gamma: 0.0,
        thread_overhead: 0.0,
        partition_overhead: 0.0,
        total_cores: cores,
        outer_iterations: 1,
        noise_sigma: 0.0,
    }
}

fn criterion_6() -> Outcome {
    let mut rng = seed::rng(606);
    let mut checked = 0;
    for wi in 0..20 {
        let w = random_workload(&mut rng, wi % 2 == 0);
        for tasks in 1..=5u32 {
            for partitions in [1u32, 2, 3, 4, 5, 8] {
                let c = StreamConfig::new(partitions, tasks);
                let lib = stage_durations(&w, c).map_err(|e| e.to_string())?;
                let mine = oracle_stages(&w, c);
                let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()));
                ensure!(
                    close(&lib.transfer_in, &mine.transfer_in)
                        && close(&lib.compute, &mine.compute)
                        && close(&lib.transfer_out, &mine.transfer_out),
                    "workload {wi} {c}: stage durations differ"
                );
                let event = pipeline_makespan(&mine, partitions);
                let (count, fifo) = enumerate(&mine, partitions, true);
                ensure!(count == 1, "workload {wi} {c}: {count} FIFO orderings");
                ensure!(
                    (event - fifo).abs() <= 1e-12 * fifo,
                    "workload {wi} {c}: event-driven {event} vs brute force {fifo}"
                );
                if tasks <= 4 {
                    let (_, free) = enumerate(&mine, partitions, false);
                    ensure!(free <= fifo * (1.0 + 1e-12), "workload {wi} {c}: unconstrained optimum above FIFO");
                }
                checked += 1;
            }
        }
    }

    let mut runner = TestRunner::new(ProptestConfig {
        cases: 256,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let strategy = (
        8u64..20_000,
        1e-10f64..1e-7,
        1e-8f64..1e-5,
        prop_oneof![Just(8u32), Just(12), Just(64), Just(224)],
        1u32..=8,
        1u32..=64,
    );
    runner
        .run(&strategy, |(n, alpha, eta, cores, p, t)| {
            let w = zero_overhead(n, alpha, eta, cores);
            let t = t.min(n as u32);
            let one = pipeline_makespan(&stage_durations(&w, StreamConfig::new(p, 1)).unwrap(), p);
            let stages = stage_durations(&w, StreamConfig::new(p, t)).unwrap();
            let many = pipeline_makespan(&stages, p);
            prop_assert!(many <= one * (1.0 + 1e-12), "tasks={t} makespan {many} > tasks=1 {one}");
            let bound = stages.total_transfer().max(stages.total_compute() / p as f64);
            prop_assert!(many >= bound * (1.0 - 1e-12), "makespan {many} below bound {bound}");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{checked} (workload, config) pairs match brute force; 256 property cases hold"))
}

// ---------------------------------------------------------- criteria 7 to 10

fn criterion_7(corpus: &Corpus, report: &EvalReport, pipeline: Duration) -> Outcome {
    let started = Instant::now();
    let cmp = compare_schemes(corpus, report, &AnnealParams::default(), SEED).map_err(|e| e.to_string())?;
    let elapsed = pipeline + started.elapsed();
    let g = |s: &str| cmp.geomean(s).ok_or(format!("missing scheme {s}"));
    let predicted = g("predicted")?;
    ensure!(
        report.geomean_pct_of_oracle >= 0.85,
        "pct_of_oracle {:.3} < 0.85",
        report.geomean_pct_of_oracle
    );
    let mut parts = vec![format!("pct {:.3}, predicted {predicted:.3}", report.geomean_pct_of_oracle)];
    for scheme in ["fixed-4-16", "fixed-17-85", "liu", "werkhoven"] {
        let v = g(scheme)?;
        ensure!(predicted > v, "predicted {predicted:.3} does not beat {scheme} {v:.3}");
        parts.push(format!("{scheme} {v:.3}"));
    }
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    parts.push(format!("{elapsed:.1?}"));
    Ok(parts.join(", "))
}

fn criterion_8(corpus: &Corpus) -> Outcome {
    let ab = merging_ablation(corpus, &PipelineConfig::default(), SEED).map_err(|e| e.to_string())?;
    let (m, u) = (ab.merged.geomean_speedup, ab.unmerged.geomean_speedup);
    ensure!(m >= u, "merged {m:.4} < unmerged {u:.4}");
    Ok(format!("merged {m:.4} >= unmerged {u:.4}"))
}

fn criterion_9(corpus: &Corpus, report: &EvalReport) -> Outcome {
    let corr = ratio_speedup_correlation(corpus, report).map_err(|e| e.to_string())?;
    ensure!(!corr.degenerate, "correlation is degenerate");
    ensure!(corr.r > 0.3, "r = {:.3}", corr.r);
    Ok(format!("r = {:.3} over {} samples", corr.r, corr.points.len()))
}

fn collect_files(dir: &Path, root: &Path, files: &mut BTreeMap<String, Vec<u8>>) -> Result<(), String> {
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.is_dir() {
            collect_files(&path, root, files)?;
        } else {
            let name = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            files.insert(name, std::fs::read(&path).map_err(|e| e.to_string())?);
        }
    }
    Ok(())
}

fn run_compare(out: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_streamtune"))
        .args(["--seed", "42", "eval", "compare", "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        status.status.success(),
        "eval compare failed: {}",
        String::from_utf8_lossy(&status.stderr)
    );
    let mut files = BTreeMap::new();
    collect_files(out, out, &mut files)?;
    Ok(files)
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = run_compare(&a)?;
    let second = run_compare(&b)?;
    ensure!(first.contains_key("compare.csv"), "compare.csv not written");
    ensure!(
        first.keys().eq(second.keys()),
        "runs wrote different files: {:?} vs {:?}",
        first.keys(),
        second.keys()
    );
    for (name, bytes) in &first {
        ensure!(second[name] == *bytes, "{name} differs between runs");
    }
    Ok(format!("{} report files byte-identical across two runs", first.len()))
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut record = |n: usize, outcome: Outcome| {
        let line = match &outcome {
            Ok(detail) => format!("criterion {n:>2}: PASS  {detail}"),
            Err(why) => format!("criterion {n:>2}: FAIL  {why}"),
        };
        println!("{line}");
        results.push((n, outcome));
    };

    record(1, criterion_1());
    record(2, criterion_2());
    record(3, criterion_3());

    let started = Instant::now();
    let corpus = build_corpus(&default_corpus_spec(), &Grid::desk(), SEED);
    let report = corpus
        .as_ref()
        .map_err(|e| e.to_string())
        .and_then(|c| loocv_evaluate(c, &PipelineConfig::default(), SEED).map_err(|e| e.to_string()));
    let pipeline = started.elapsed();
    match (&corpus, &report) {
        (Ok(corpus), Ok(report)) => {
            record(4, criterion_4(corpus));
            record(5, criterion_5(corpus));
            record(6, criterion_6());
            record(7, criterion_7(corpus, report, pipeline));
            record(8, criterion_8(corpus));
            record(9, criterion_9(corpus, report));
        }
        _ => {
            let why = corpus
                .as_ref()
                .err()
                .map(|e| e.to_string())
                .or(report.as_ref().err().cloned())
                .unwrap_or_default();
            record(6, criterion_6());
            for n in [4, 5, 7, 8, 9] {
                record(n, Err(format!("default corpus pipeline failed: {why}")));
            }
        }
    }
    record(10, criterion_10());

    let failed: Vec<usize> = results.iter().filter(|(_, o)| o.is_err()).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: {} of {} criteria passed", results.len(), results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
