//! Multilevel Monte Carlo engine: single-pass level statistics,
//! optimal sample allocation, convergence-rate regression, the
//! adaptive multilevel estimator, and a plain Monte Carlo baseline
//! driven by the exact simulator.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{
    coupled_pair, coupled_pair_is, ssa_path, tau_leap_path, KernelError, LevelSpec,
    SLOTS_PER_REACTION,
};
use crate::network::{observe, Observable, ReactionNetwork};
use crate::rng::{derive_stream, path_streams, StreamKey};

/// Fixed pilot size per level before allocation kicks in.
pub const PILOT_SAMPLES: u64 = 1_000;

/// Replicates per parallel work block. Blocks are merged in replicate
/// order, so results do not depend on the worker count.
const BLOCK: u64 = 4_096;

/// Advisory threshold for the coarsest-level diagnostic: the first
/// coupled level's variance should be well below the base level's.
pub const L0_ADVISORY_RATIO: f64 = 0.1;

const MAX_ITERATIONS: u32 = 100;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("bias target unreachable within max level {max_level}")]
    LevelCapExceeded { max_level: u32 },
    #[error("rate regression needs at least 3 usable levels, got {usable}")]
    NotEnoughLevels { usable: usize },
    #[error("bias extrapolation needs a positive weak rate, got alpha = {alpha}")]
    AlphaNotPositive { alpha: f64 },
    #[error("estimator failed to converge after {iterations} refinement rounds")]
    NonConvergent { iterations: u32 },
}

/// Single-pass accumulator for mean and central moments up to order
/// four, plus the mean absolute value. Supports merging partial
/// accumulators, which is exact in the same sense as pushing.
#[derive(Debug, Clone, Default)]
pub struct StreamingMoments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
    sum_abs: f64,
}

impl StreamingMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let n0 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n0;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
        self.mean += delta_n;
        self.sum_abs += x.abs();
    }

    pub fn merge(&mut self, other: &StreamingMoments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let m2 = self.m2 + other.m2 + delta * delta * na * nb / n;
        let m3 = self.m3
            + other.m3
            + delta.powi(3) * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + delta.powi(4) * na * nb * (na * na - na * nb + nb * nb) / n.powi(3)
            + 6.0 * delta * delta * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        self.mean += delta * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
        self.n += other.n;
        self.sum_abs += other.sum_abs;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance m2 / n.
    pub fn variance(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.m2 / self.n as f64
        }
    }

    /// Population moment ratio m4 / m2^2; +infinity when the variance
    /// vanishes.
    pub fn kurtosis(&self) -> f64 {
        let n = self.n as f64;
        let v = self.variance();
        if v <= 0.0 {
            f64::INFINITY
        } else {
            (self.m4 / n) / (v * v)
        }
    }

    pub fn mean_abs(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum_abs / self.n as f64
        }
    }
}

/// Plain summary of a sample set: population moments, no bias
/// corrections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    pub n: u64,
    pub mean: f64,
    pub variance: f64,
    pub kurtosis: f64,
    pub mean_abs: f64,
}

/// Summarizes a sequence of per-path values (for coupled levels, the
/// weighted differences).
pub fn level_stats(values: &[f64]) -> SampleStats {
    let mut acc = StreamingMoments::new();
    for &v in values {
        acc.push(v);
    }
    SampleStats {
        n: acc.count(),
        mean: acc.mean(),
        variance: acc.variance(),
        kurtosis: acc.kurtosis(),
        mean_abs: acc.mean_abs(),
    }
}

/// Standard deviation of the sample variance for a sample of size `m`
/// with variance `v` and kurtosis `kappa`:
/// (V/sqrt(M)) * sqrt((kappa - 1) + 2/(M - 1)).
pub fn sample_variance_std(v: f64, kappa: f64, m: u64) -> f64 {
    debug_assert!(m >= 2);
    if v == 0.0 {
        return 0.0;
    }
    (v / (m as f64).sqrt()) * ((kappa - 1.0) + 2.0 / (m as f64 - 1.0)).sqrt()
}

/// Optimal per-level sample counts for a variance budget of
/// tol^2 / 2: M_l = ceil(2 tol^-2 sqrt(V_l / W_l) sum_k sqrt(V_k W_k)),
/// floored at 2.
pub fn optimal_samples(v: &[f64], w: &[f64], tol: f64) -> Vec<u64> {
    debug_assert_eq!(v.len(), w.len());
    let total: f64 = v.iter().zip(w).map(|(&vk, &wk)| (vk * wk).sqrt()).sum();
    v.iter()
        .zip(w)
        .map(|(&vl, &wl)| {
            let raw = 2.0 * tol.powi(-2) * (vl / wl).sqrt() * total;
            (raw.ceil() as u64).max(2)
        })
        .collect()
}

/// Ordinary least squares fit y = a + b x; returns (slope, intercept,
/// r_squared).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    debug_assert!(xs.len() == ys.len() && xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}

fn serialize_inf_as_null<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

fn deserialize_inf_as_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// Per-level sample summary. For the base level, `mean_diff` is the
/// plain mean of the observable; for coupled levels it is the mean of
/// the weighted fine/coarse difference. An infinite kurtosis (zero
/// variance) serializes to JSON null.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: u32,
    pub dt: f64,
    pub samples: u64,
    pub mean_diff: f64,
    pub var_diff: f64,
    #[serde(
        serialize_with = "serialize_inf_as_null",
        deserialize_with = "deserialize_inf_as_null"
    )]
    pub kurtosis: f64,
    pub mean_abs_diff: f64,
    pub cost_per_sample_draws: f64,
    pub cost_per_sample_seconds: f64,
    pub avg_is_steps: f64,
}

/// Fitted convergence rates with their regression r-squared values:
/// `alpha` from log2 |mean_diff|, `beta` from log2 variance, `gamma`
/// from log2 cost, each against the level index.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateFit {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub r2_alpha: f64,
    pub r2_beta: f64,
    pub r2_gamma: f64,
}

/// Unweighted least-squares rates over coupled levels (level >= l0+1).
/// Levels with a degenerate (zero) value are excluded per quantity;
/// fewer than 3 usable levels for any quantity is an error. The work
/// rate is fitted over the deepest six usable levels only: shallow
/// levels run a handful of steps per path, so their per-sample cost
/// carries an additive share that bends the log-log line well below
/// the asymptotic slope.
pub fn fit_rates(stats: &[LevelStats], l0: u32) -> Result<RateFit, EngineError> {
    let coupled: Vec<&LevelStats> = stats.iter().filter(|s| s.level > l0).collect();
    let fit_one = |values: Vec<(f64, f64)>| -> Result<(f64, f64), EngineError> {
        if values.len() < 3 {
            return Err(EngineError::NotEnoughLevels { usable: values.len() });
        }
        let xs: Vec<f64> = values.iter().map(|&(l, _)| l).collect();
        let ys: Vec<f64> = values.iter().map(|&(_, v)| v.log2()).collect();
        let (slope, _, r2) = linear_fit(&xs, &ys);
        Ok((slope, r2))
    };
    let (slope_mean, r2_alpha) = fit_one(
        coupled
            .iter()
            .filter(|s| s.mean_diff != 0.0)
            .map(|s| (s.level as f64, s.mean_diff.abs()))
            .collect(),
    )?;
    let (slope_var, r2_beta) = fit_one(
        coupled
            .iter()
            .filter(|s| s.var_diff > 0.0)
            .map(|s| (s.level as f64, s.var_diff))
            .collect(),
    )?;
    let work_points: Vec<(f64, f64)> = coupled
        .iter()
        .filter(|s| s.cost_per_sample_draws > 0.0)
        .map(|s| (s.level as f64, s.cost_per_sample_draws))
        .collect();
    let work_tail = if work_points.len() > 6 {
        work_points[work_points.len() - 6..].to_vec()
    } else {
        work_points
    };
    let (slope_work, r2_gamma) = fit_one(work_tail)?;
    Ok(RateFit {
        alpha: -slope_mean,
        beta: -slope_var,
        gamma: slope_work,
        r2_alpha,
        r2_beta,
        r2_gamma,
    })
}

/// Geometric-tail bias estimate from the last two coupled levels:
/// max over those levels of |mean_l| * 2^(alpha (l - L)) / (2^alpha - 1).
pub fn bias_estimate(coupled_means: &[(u32, f64)], alpha: f64) -> Result<f64, EngineError> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(EngineError::AlphaNotPositive { alpha });
    }
    let top = match coupled_means.iter().map(|&(l, _)| l).max() {
        Some(top) => top,
        None => return Ok(0.0),
    };
    let denom = 2f64.powf(alpha) - 1.0;
    let bias = coupled_means
        .iter()
        .filter(|&&(l, _)| l + 2 > top)
        .map(|&(l, m)| m.abs() * 2f64.powf(alpha * (l as f64 - top as f64)) / denom)
        .fold(0.0f64, f64::max);
    Ok(bias)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlmcConfig {
    pub tol: f64,
    pub delta: f64,
    pub use_is: bool,
    pub l0: u32,
    pub dt0: f64,
    pub seed: u64,
    pub max_level: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlmcResult {
    pub estimate: f64,
    pub statistical_error: f64,
    pub bias_estimate: f64,
    pub total_work_draws: f64,
    pub total_work_seconds: f64,
    pub levels: Vec<LevelStats>,
    pub rates: RateFit,
    /// Advisory diagnostic: variance of the first coupled level over
    /// the base-level variance. Small values (<= 0.1) indicate the
    /// base level is coarse enough.
    pub l0_variance_ratio: f64,
    pub l0_advisory_ok: bool,
    pub config: MlmcConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McSsaResult {
    pub estimate: f64,
    pub statistical_error: f64,
    pub samples: u64,
    pub total_jumps: u64,
    pub total_seconds: f64,
}

/// One level's accumulated samples and costs.
#[derive(Debug, Clone, Default)]
struct LevelAccum {
    moments: StreamingMoments,
    draws: u64,
    is_steps: u64,
    seconds: f64,
}

impl LevelAccum {
    fn stats(&self, level: u32, dt: f64) -> LevelStats {
        let n = self.moments.count();
        let nf = n as f64;
        LevelStats {
            level,
            dt,
            samples: n,
            mean_diff: self.moments.mean(),
            var_diff: self.moments.variance(),
            kurtosis: self.moments.kurtosis(),
            mean_abs_diff: self.moments.mean_abs(),
            cost_per_sample_draws: self.draws as f64 / nf,
            cost_per_sample_seconds: self.seconds / nf,
            avg_is_steps: self.is_steps as f64 / nf,
        }
    }
}

/// A reusable sampling context for one model/observable/seed triple.
/// Methods draw replicates keyed by (seed, level, replicate), so a
/// fixed seed reproduces identical values regardless of worker count
/// or batch boundaries.
pub struct LevelJob<'a> {
    pub net: &'a ReactionNetwork,
    pub x0: &'a [i64],
    pub t_final: f64,
    pub g: &'a Observable,
    pub dt0: f64,
    pub seed: u64,
}

impl LevelJob<'_> {
    /// Fixed-size sample of the coupled difference at `level`.
    /// `delta` of Some(d) with d > 0 runs the measure-changed kernel.
    pub fn coupled_stats(
        &self,
        level: u32,
        delta: Option<f64>,
        m: u64,
    ) -> Result<LevelStats, EngineError> {
        let mut acc = LevelAccum::default();
        self.extend_coupled(&mut acc, level, delta, m)?;
        Ok(acc.stats(level, LevelSpec::new(level, self.dt0)?.dt()))
    }

    /// Fixed-size sample of the plain observable at `level`.
    pub fn base_stats(&self, level: u32, m: u64) -> Result<LevelStats, EngineError> {
        let mut acc = LevelAccum::default();
        self.extend_base(&mut acc, level, m)?;
        Ok(acc.stats(level, LevelSpec::new(level, self.dt0)?.dt()))
    }

    fn extend_coupled(
        &self,
        acc: &mut LevelAccum,
        level: u32,
        delta: Option<f64>,
        target: u64,
    ) -> Result<(), EngineError> {
        let fine = LevelSpec::new(level, self.dt0)?;
        let n_streams = (SLOTS_PER_REACTION * self.net.num_reactions()) as u32;
        self.run_blocks(acc, target, |range, block| {
            for r in range.0..range.1 {
                let mut streams = path_streams(self.seed, level, r, n_streams);
                let s = match delta {
                    Some(d) if d > 0.0 => coupled_pair_is(
                        self.net,
                        self.x0,
                        self.t_final,
                        &fine,
                        self.g,
                        d,
                        &mut streams,
                    )?,
                    _ => coupled_pair(
                        self.net,
                        self.x0,
                        self.t_final,
                        &fine,
                        self.g,
                        &mut streams,
                    )?,
                };
                block.moments.push(s.weighted_diff());
                block.draws += s.poisson_draws;
                block.is_steps += s.is_steps;
            }
            Ok(())
        })
    }

    fn extend_base(&self, acc: &mut LevelAccum, level: u32, target: u64) -> Result<(), EngineError> {
        let spec = LevelSpec::new(level, self.dt0)?;
        self.run_blocks(acc, target, |range, block| {
            for r in range.0..range.1 {
                let mut rng = derive_stream(&StreamKey {
                    seed: self.seed,
                    level,
                    replicate: r,
                    substream: 0,
                });
                let (x, draws) =
                    tau_leap_path(self.net, self.x0, self.t_final, &spec, &mut rng)?;
                block.moments.push(observe(self.g, &x));
                block.draws += draws;
            }
            Ok(())
        })
    }

    /// Extends `acc` with replicates [current, target), fanning fixed
    /// replicate blocks across the worker pool and merging partial
    /// accumulators in replicate order.
    fn run_blocks<F>(&self, acc: &mut LevelAccum, target: u64, body: F) -> Result<(), EngineError>
    where
        F: Fn((u64, u64), &mut LevelAccum) -> Result<(), EngineError> + Sync,
    {
        let mut ranges = Vec::new();
        let mut r = acc.moments.count();
        while r < target {
            let e = (r + BLOCK).min(target);
            ranges.push((r, e));
            r = e;
        }
        let partials: Result<Vec<LevelAccum>, EngineError> = ranges
            .into_par_iter()
            .map(|range| {
                let t0 = Instant::now();
                let mut block = LevelAccum::default();
                body(range, &mut block)?;
                block.seconds = t0.elapsed().as_secs_f64();
                Ok(block)
            })
            .collect();
        for block in partials? {
            acc.moments.merge(&block.moments);
            acc.draws += block.draws;
            acc.is_steps += block.is_steps;
            acc.seconds += block.seconds;
        }
        Ok(())
    }
}

fn validate_config(cfg: &MlmcConfig) -> Result<(), EngineError> {
    if !cfg.tol.is_finite() || cfg.tol <= 0.0 {
        return Err(EngineError::BadConfig(format!("tol must be positive, got {}", cfg.tol)));
    }
    if !cfg.delta.is_finite() || !(0.0..1.0).contains(&cfg.delta) {
        return Err(EngineError::BadConfig(format!(
            "delta must lie in [0, 1), got {}",
            cfg.delta
        )));
    }
    if !cfg.dt0.is_finite() || cfg.dt0 <= 0.0 {
        return Err(EngineError::BadConfig(format!("dt0 must be positive, got {}", cfg.dt0)));
    }
    if cfg.max_level < cfg.l0 + 3 {
        return Err(EngineError::BadConfig(format!(
            "max_level {} leaves no room above l0 {} (need at least l0 + 3)",
            cfg.max_level, cfg.l0
        )));
    }
    Ok(())
}

/// Zero-variance levels get a floor of half the smallest positive
/// neighbor variance, keeping the allocation formula well-defined when
/// tight coupling zeroes a pilot estimate.
fn floor_zero_variances(v: &mut [f64]) {
    let orig = v.to_vec();
    for i in 0..v.len() {
        if orig[i] > 0.0 {
            continue;
        }
        let mut floor = f64::INFINITY;
        if i > 0 && orig[i - 1] > 0.0 {
            floor = floor.min(orig[i - 1]);
        }
        if i + 1 < orig.len() && orig[i + 1] > 0.0 {
            floor = floor.min(orig[i + 1]);
        }
        if floor.is_finite() {
            v[i] = 0.5 * floor;
        }
    }
}

/// Adaptive multilevel estimator. Pilots the base level plus three
/// coupled levels, then alternates: fit the weak rate, deepen the
/// hierarchy until the extrapolated bias fits the tol/sqrt(2) budget,
/// reallocate samples for the tol^2/2 variance budget, and top up.
pub fn mlmc_estimate(
    net: &ReactionNetwork,
    x0: &[i64],
    t_final: f64,
    g: &Observable,
    cfg: &MlmcConfig,
) -> Result<MlmcResult, EngineError> {
    validate_config(cfg)?;
    g.validate(net).map_err(KernelError::from)?;
    let job = LevelJob { net, x0, t_final, g, dt0: cfg.dt0, seed: cfg.seed };
    let delta = if cfg.use_is && cfg.delta > 0.0 { Some(cfg.delta) } else { None };
    let bias_budget = cfg.tol / 2f64.sqrt();

    // Validate the full initial grid up front so errors surface before
    // any sampling.
    LevelSpec::new(cfg.l0, cfg.dt0)?.steps(t_final)?;
    let mut accums: Vec<(u32, LevelAccum)> = Vec::new();
    accums.push((cfg.l0, LevelAccum::default()));
    for l in cfg.l0 + 1..=cfg.l0 + 3 {
        LevelSpec::new(l, cfg.dt0)?.steps(t_final)?;
        accums.push((l, LevelAccum::default()));
    }
    for (level, acc) in accums.iter_mut() {
        if *level == cfg.l0 {
            job.extend_base(acc, *level, PILOT_SAMPLES)?;
        } else {
            job.extend_coupled(acc, *level, delta, PILOT_SAMPLES)?;
        }
    }

    let mut rates;
    let mut bias;
    let mut iterations = 0u32;
    loop {
        iterations += 1;
        if iterations > MAX_ITERATIONS {
            return Err(EngineError::NonConvergent { iterations });
        }
        let stats: Vec<LevelStats> = accums
            .iter()
            .map(|(l, a)| a.stats(*l, LevelSpec { level: *l, dt0: cfg.dt0 }.dt()))
            .collect();
        rates = fit_rates(&stats, cfg.l0)?;
        let coupled_means: Vec<(u32, f64)> = stats
            .iter()
            .filter(|s| s.level > cfg.l0)
            .map(|s| (s.level, s.mean_diff))
            .collect();
        bias = bias_estimate(&coupled_means, rates.alpha)?;
        if bias > bias_budget {
            let top = accums.last().expect("levels nonempty").0;
            if top >= cfg.max_level {
                return Err(EngineError::LevelCapExceeded { max_level: cfg.max_level });
            }
            let next = top + 1;
            LevelSpec::new(next, cfg.dt0)?.steps(t_final)?;
            let mut acc = LevelAccum::default();
            job.extend_coupled(&mut acc, next, delta, PILOT_SAMPLES)?;
            accums.push((next, acc));
            continue;
        }
        let mut v: Vec<f64> = stats.iter().map(|s| s.var_diff).collect();
        floor_zero_variances(&mut v);
        let w: Vec<f64> =
            stats.iter().map(|s| s.cost_per_sample_draws.max(1e-12)).collect();
        let targets = optimal_samples(&v, &w, cfg.tol);
        let mut topped_up = false;
        for (i, (level, acc)) in accums.iter_mut().enumerate() {
            if acc.moments.count() < targets[i] {
                topped_up = true;
                if *level == cfg.l0 {
                    job.extend_base(acc, *level, targets[i])?;
                } else {
                    job.extend_coupled(acc, *level, delta, targets[i])?;
                }
            }
        }
        if !topped_up {
            break;
        }
    }

    let levels: Vec<LevelStats> = accums
        .iter()
        .map(|(l, a)| a.stats(*l, LevelSpec { level: *l, dt0: cfg.dt0 }.dt()))
        .collect();
    let estimate: f64 = levels.iter().map(|s| s.mean_diff).sum();
    let statistical_error: f64 = levels
        .iter()
        .map(|s| s.var_diff / s.samples as f64)
        .sum::<f64>()
        .sqrt();
    let total_work_draws: f64 =
        levels.iter().map(|s| s.samples as f64 * s.cost_per_sample_draws).sum();
    let total_work_seconds: f64 =
        levels.iter().map(|s| s.samples as f64 * s.cost_per_sample_seconds).sum();
    let v_base = levels[0].var_diff;
    let v_first_coupled = levels[1].var_diff;
    let l0_variance_ratio =
        if v_base > 0.0 { v_first_coupled / v_base } else { f64::INFINITY };
    Ok(MlmcResult {
        estimate,
        statistical_error,
        bias_estimate: bias,
        total_work_draws,
        total_work_seconds,
        levels,
        rates,
        l0_variance_ratio,
        l0_advisory_ok: l0_variance_ratio <= L0_ADVISORY_RATIO,
        config: cfg.clone(),
    })
}

/// Plain Monte Carlo with the exact simulator: a pilot fixes the
/// sample size M = ceil(2 tol^-2 Var), then the estimate runs over
/// max(M, pilot) replicates. Work is counted in jumps and seconds.
pub fn mc_ssa_estimate(
    net: &ReactionNetwork,
    x0: &[i64],
    t_final: f64,
    g: &Observable,
    tol: f64,
    seed: u64,
) -> Result<McSsaResult, EngineError> {
    if !tol.is_finite() || tol <= 0.0 {
        return Err(EngineError::BadConfig(format!("tol must be positive, got {tol}")));
    }
    g.validate(net).map_err(KernelError::from)?;
    let run = |from: u64, to: u64| -> Result<(StreamingMoments, u64, f64), EngineError> {
        let mut ranges = Vec::new();
        let mut r = from;
        while r < to {
            let e = (r + BLOCK).min(to);
            ranges.push((r, e));
            r = e;
        }
        let partials: Result<Vec<(StreamingMoments, u64, f64)>, EngineError> = ranges
            .into_par_iter()
            .map(|(s, e)| {
                let t0 = Instant::now();
                let mut mom = StreamingMoments::new();
                let mut jumps = 0u64;
                for rep in s..e {
                    let mut rng = derive_stream(&StreamKey {
                        seed,
                        level: 0,
                        replicate: rep,
                        substream: 0,
                    });
                    let (x, j) = ssa_path(net, x0, t_final, &mut rng)?;
                    mom.push(observe(g, &x));
                    jumps += j;
                }
                Ok((mom, jumps, t0.elapsed().as_secs_f64()))
            })
            .collect();
        let mut mom = StreamingMoments::new();
        let mut jumps = 0u64;
        let mut secs = 0.0;
        for (m, j, s) in partials? {
            mom.merge(&m);
            jumps += j;
            secs += s;
        }
        Ok((mom, jumps, secs))
    };
    let (pilot, pilot_jumps, pilot_secs) = run(0, PILOT_SAMPLES)?;
    let m = ((2.0 * tol.powi(-2) * pilot.variance()).ceil() as u64)
        .max(2)
        .max(PILOT_SAMPLES);
    // Replicate keys are stable, so the pilot paths are the first
    // samples of the final ensemble and only the extension is run.
    let (ext, ext_jumps, ext_secs) = run(PILOT_SAMPLES, m)?;
    let mut full = pilot;
    full.merge(&ext);
    Ok(McSsaResult {
        estimate: full.mean(),
        statistical_error: (full.variance() / full.count() as f64).sqrt(),
        samples: full.count(),
        total_jumps: pilot_jumps + ext_jumps,
        total_seconds: pilot_secs + ext_secs,
    })
}
