//! Analytical stream-configuration models used for comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{stage_durations, Grid, StreamConfig, WorkloadSpec};

/// Linear transfer (`alpha·m + beta`) and compute (`eta·m + gamma`) models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiuCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub transfer_r2: f64,
    #[serde(default = "one")]
    pub compute_r2: f64,
}

fn one() -> f64 {
    1.0
}

/// Ordinary least squares line through `(x, y)`: `(slope, intercept, r2)`.
pub fn ols(samples: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return Err(Error::SingularFit("need at least two samples".into()));
    }
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx).powi(2)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    let syy: f64 = samples.iter().map(|s| (s.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::SingularFit("all sample sizes are identical".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = samples
        .iter()
        .map(|s| (s.1 - slope * s.0 - intercept).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok((slope, intercept, r2))
}

pub fn fit_liu(transfer: &[(f64, f64)], compute: &[(f64, f64)]) -> Result<LiuCoefficients> {
    let (alpha, beta, transfer_r2) = ols(transfer)?;
    let (eta, gamma, compute_r2) = ols(compute)?;
    Ok(LiuCoefficients {
        alpha,
        beta,
        eta,
        gamma,
        transfer_r2,
        compute_r2,
    })
}

/// Total time for `elements` split into chunks of `m`.
pub fn liu_total_time(c: &LiuCoefficients, elements: u64, m: f64) -> f64 {
    let n = elements as f64;
    c.alpha * m + n * c.gamma / m + n * c.eta + c.beta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiuChoice {
    /// Continuous optimum chunk size, clamped to `[1, elements]`.
    pub chunk: f64,
    pub tasks: u32,
    pub config: StreamConfig,
}

/// `m* = sqrt(N·gamma/alpha)`, `n = N/m*`, partitions set equal to `n`.
pub fn liu_optimal_tasks(c: &LiuCoefficients, elements: u64, grid: &Grid) -> Result<LiuChoice> {
    if !(c.alpha > 0.0 && c.gamma > 0.0) || !c.alpha.is_finite() || !c.gamma.is_finite() {
        return Err(Error::InvalidCoefficients(format!(
            "alpha and gamma must be positive, got alpha={} gamma={}",
            c.alpha, c.gamma
        )));
    }
    if elements == 0 {
        return Err(Error::InvalidArgument("element count must be >= 1".into()));
    }
    let n_elements = elements as f64;
    let chunk = (n_elements * c.gamma / c.alpha).sqrt().clamp(1.0, n_elements);
    let cap = grid.max_partitions().max(grid.max_tasks());
    let tasks = (n_elements / chunk).round().clamp(1.0, f64::from(cap)) as u32;
    Ok(LiuChoice {
        chunk,
        tasks,
        config: grid.snap(StreamConfig::new(tasks, tasks)),
    })
}

/// `(chunk size, seconds)` observations.
pub type Probes = Vec<(f64, f64)>;

/// Per-chunk probes of the simulator at one partition and `tasks` chunks.
pub fn liu_probes(w: &WorkloadSpec, task_counts: &[u32]) -> Result<(Probes, Probes)> {
    let mut transfer = Vec::new();
    let mut compute = Vec::new();
    for &t in task_counts {
        let t = t.min(u32::try_from(w.elements).unwrap_or(u32::MAX)).max(1);
        let stages = stage_durations(w, StreamConfig::new(1, t))?;
        let m = w.chunk_sizes(t)[0] as f64;
        transfer.push((m, stages.transfer_in[0] + stages.transfer_out[0]));
        compute.push((m, stages.compute[0]));
    }
    Ok((transfer, compute))
}

/// Fit the linear models from noise-free probes at 1..=256 chunks.
pub fn fit_liu_from_workload(w: &WorkloadSpec) -> Result<LiuCoefficients> {
    let counts: Vec<u32> = (0..9).map(|i| 1 << i).collect();
    let (transfer, compute) = liu_probes(w, &counts)?;
    fit_liu(&transfer, &compute)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGPParams {
    pub latency: f64,
    pub overhead: f64,
    pub gap: f64,
    pub processors: u32,
    pub g_hd: f64,
    pub g_dh: f64,
    pub b_hd: f64,
    pub b_dh: f64,
    pub t_kernel: f64,
}

impl LogGPParams {
    /// Per-byte cost from the transfer slope, message gap from its intercept,
    /// kernel time from the serial compute stage.
    pub fn from_workload(w: &WorkloadSpec) -> Result<Self> {
        let stages = stage_durations(w, StreamConfig::BASELINE)?;
        let n = w.elements as f64;
        Ok(LogGPParams {
            latency: 0.0,
            overhead: 0.0,
            gap: w.transfer_beta,
            processors: w.total_cores,
            g_hd: w.transfer_alpha,
            g_dh: w.transfer_alpha,
            b_hd: n * w.bytes_per_element_in,
            b_dh: n * w.bytes_per_element_out,
            t_kernel: stages.compute[0],
        })
    }

    fn validate(&self) -> Result<()> {
        let ok = self.gap >= 0.0
            && self.g_hd > 0.0
            && self.g_dh > 0.0
            && self.b_hd >= 0.0
            && self.b_dh >= 0.0
            && self.t_kernel >= 0.0
            && [self.gap, self.g_hd, self.g_dh, self.b_hd, self.b_dh, self.t_kernel]
                .iter()
                .all(|v| v.is_finite());
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid LogGP parameters {self:?}")));
        }
        if self.t_kernel == 0.0 && self.b_hd == 0.0 && self.b_dh == 0.0 {
            return Err(Error::NoSolution("no kernel time and no transfers".into()));
        }
        Ok(())
    }

    /// Right-hand side of the case-selected equation, before division by `N_s`.
    pub fn rhs(&self) -> f64 {
        if self.b_dh > self.b_hd {
            self.t_kernel + self.b_dh * self.g_dh
        } else {
            self.b_hd * self.g_hd + self.t_kernel
        }
    }

    /// `B_dh·G_dh + g·(N_s − 1) − rhs/N_s`.
    pub fn residual(&self, streams: f64) -> f64 {
        self.b_dh * self.g_dh + self.gap * (streams - 1.0) - self.rhs() / streams
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WerkhovenChoice {
    pub continuous: f64,
    pub streams: u32,
    pub config: StreamConfig,
}

/// Positive root of `g·x² + (B_dh·G_dh − g)·x − rhs = 0`.
pub fn werkhoven_optimal_streams(p: &LogGPParams, grid: &Grid) -> Result<WerkhovenChoice> {
    p.validate()?;
    let a = p.gap;
    let b = p.b_dh * p.g_dh - p.gap;
    let c = -p.rhs();
    let x = if a == 0.0 {
        if b == 0.0 {
            return Err(Error::NoSolution("device-to-host cost and gap are both zero".into()));
        }
        -c / b
    } else {
        // Product of roots is c/a <= 0; pick the stable form for the positive one.
        let disc = (b * b - 4.0 * a * c).sqrt();
        if b >= 0.0 {
            -2.0 * c / (b + disc)
        } else {
            (-b + disc) / (2.0 * a)
        }
    };
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::NoSolution(format!("no positive root (got {x})")));
    }
    let cap = f64::from(grid.max_partitions().max(grid.max_tasks()));
    let streams = x.round().clamp(1.0, cap) as u32;
    Ok(WerkhovenChoice {
        continuous: x,
        streams,
        config: grid.snap(StreamConfig::new(streams, streams)),
    })
}
