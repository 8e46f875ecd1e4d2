//! Study harness: per-level convergence tables, deep-level coupling
//! and jump histograms, and work-versus-tolerance sweeps, rendered as
//! plot-ready CSV. Orchestration is sequential; sampling fans out
//! through the engine's worker pool. Every CSV opens with a comment
//! line recording seed, model, delta, and crate version, and all
//! columns except wall-clock seconds are byte-identical across reruns
//! with the same seed and worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::time::Instant;

use rayon::prelude::*;

use crate::kernels::{coupled_pair, coupled_pair_is, LevelSpec, SLOTS_PER_REACTION};
use crate::mlmc::{
    fit_rates, mc_ssa_estimate, mlmc_estimate, EngineError, LevelJob, LevelStats, MlmcConfig,
    RateFit,
};
use crate::models::NamedModel;
use crate::rng::path_streams;

/// Desk-scale default sample count per level; the full-scale count
/// sits behind a --full flag.
pub const DESK_M: u64 = 50_000;
pub const FULL_M: u64 = 200_000;

/// Measure-change settings studied throughout: the plain coupling
/// baseline plus three boost exponents.
pub const DELTA_GRID: [Option<f64>; 4] = [None, Some(0.25), Some(0.5), Some(0.75)];

const BLOCK: u64 = 4_096;

/// Coupled-level ranges used for the rate tables, per model.
pub fn study_levels(model: &str) -> RangeInclusive<u32> {
    match model {
        "gene" => 3..=11,
        "mm" => 1..=11,
        _ => 1..=12,
    }
}

pub fn delta_label(delta: Option<f64>) -> String {
    match delta {
        None => "none".to_string(),
        Some(d) => format!("{d}"),
    }
}

fn csv_header(seed: u64, model: &str, delta: &str, extra: &str) -> String {
    let version = env!("CARGO_PKG_VERSION");
    if extra.is_empty() {
        format!("# seed={seed} model={model} delta={delta} version={version}\n")
    } else {
        format!("# seed={seed} model={model} delta={delta} version={version} {extra}\n")
    }
}

/// One measure-change setting's level table with its fitted rates.
#[derive(Debug, Clone)]
pub struct DeltaGroup {
    pub delta: Option<f64>,
    pub stats: Vec<LevelStats>,
    pub rates: RateFit,
    pub kappa_deepest: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub model: String,
    pub seed: u64,
    pub m: u64,
    pub l0: u32,
    pub groups: Vec<DeltaGroup>,
}

/// Runs M coupled pairs per level for each measure-change setting and
/// fits the convergence rates. All settings share the seed, so they
/// also share the underlying variate streams level by level.
pub fn convergence_study(
    model: &NamedModel,
    deltas: &[Option<f64>],
    levels: RangeInclusive<u32>,
    m: u64,
    seed: u64,
) -> Result<ConvergenceStudy, EngineError> {
    let job = LevelJob {
        net: &model.network,
        x0: &model.x0,
        t_final: model.t_final,
        g: &model.observable,
        dt0: 1.0,
        seed,
    };
    let l0 = levels.start().saturating_sub(1);
    let mut groups = Vec::new();
    for &delta in deltas {
        let mut stats = Vec::new();
        for level in levels.clone() {
            stats.push(job.coupled_stats(level, delta, m)?);
        }
        let rates = fit_rates(&stats, l0)?;
        let kappa_deepest = stats.last().map(|s| s.kurtosis).unwrap_or(f64::INFINITY);
        groups.push(DeltaGroup { delta, stats, rates, kappa_deepest });
    }
    Ok(ConvergenceStudy { model: model.name.to_string(), seed, m, l0, groups })
}

impl ConvergenceStudy {
    /// Per-level table. Wall-clock seconds are intentionally omitted
    /// so the file is byte-identical across reruns.
    pub fn to_level_csv(&self) -> String {
        let mut out = csv_header(self.seed, &self.model, "all", &format!("m={}", self.m));
        out.push_str(
            "delta,level,dt,samples,mean_diff,var_diff,kurtosis,mean_abs_diff,cost_per_sample_draws,avg_is_steps\n",
        );
        for g in &self.groups {
            let label = delta_label(g.delta);
            for s in &g.stats {
                let _ = writeln!(
                    out,
                    "{label},{},{},{},{},{},{},{},{},{}",
                    s.level,
                    s.dt,
                    s.samples,
                    s.mean_diff,
                    s.var_diff,
                    s.kurtosis,
                    s.mean_abs_diff,
                    s.cost_per_sample_draws,
                    s.avg_is_steps
                );
            }
        }
        out
    }

    pub fn to_rates_csv(&self) -> String {
        let mut out = csv_header(self.seed, &self.model, "all", &format!("m={}", self.m));
        out.push_str("delta,alpha,beta,gamma,r2_alpha,r2_beta,r2_gamma,kappa_deepest\n");
        for g in &self.groups {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                delta_label(g.delta),
                g.rates.alpha,
                g.rates.beta,
                g.rates.gamma,
                g.rates.r2_alpha,
                g.rates.r2_beta,
                g.rates.r2_gamma,
                g.kappa_deepest
            );
        }
        out
    }

    pub fn group(&self, delta: Option<f64>) -> Option<&DeltaGroup> {
        self.groups.iter().find(|g| g.delta == delta)
    }
}

/// Single-pass deep-level diagnostics: the integer histogram of the
/// fine/coarse difference and the histogram of boosted jump counts.
#[derive(Debug, Clone)]
pub struct DeepHistograms {
    pub model: String,
    pub level: u32,
    pub delta: Option<f64>,
    pub m: u64,
    pub seed: u64,
    pub diff_counts: BTreeMap<i64, u64>,
    pub jump_counts: BTreeMap<u64, u64>,
    /// Fraction of sampled pairs with g_fine == g_coarse (under the
    /// sampling measure in use).
    pub zero_fraction: f64,
    pub avg_is_steps: f64,
    /// Conditional mass of is_jumps == 1 given is_jumps > 0; NaN when
    /// no path had a boosted jump.
    pub conditional_mass_at_one: f64,
}

pub fn histogram_pass(
    model: &NamedModel,
    level: u32,
    delta: Option<f64>,
    m: u64,
    seed: u64,
) -> Result<DeepHistograms, EngineError> {
    let fine = LevelSpec::new(level, 1.0)?;
    let n_streams = (SLOTS_PER_REACTION * model.network.num_reactions()) as u32;
    let mut ranges = Vec::new();
    let mut r = 0u64;
    while r < m {
        let e = (r + BLOCK).min(m);
        ranges.push((r, e));
        r = e;
    }
    struct Block {
        diffs: BTreeMap<i64, u64>,
        jumps: BTreeMap<u64, u64>,
        is_steps: u64,
    }
    let partials: Result<Vec<Block>, EngineError> = ranges
        .into_par_iter()
        .map(|(s, e)| {
            let mut b = Block { diffs: BTreeMap::new(), jumps: BTreeMap::new(), is_steps: 0 };
            for rep in s..e {
                let mut streams = path_streams(seed, level, rep, n_streams);
                let sample = match delta {
                    Some(d) if d > 0.0 => coupled_pair_is(
                        &model.network,
                        &model.x0,
                        model.t_final,
                        &fine,
                        &model.observable,
                        d,
                        &mut streams,
                    )?,
                    _ => coupled_pair(
                        &model.network,
                        &model.x0,
                        model.t_final,
                        &fine,
                        &model.observable,
                        &mut streams,
                    )?,
                };
                *b.diffs.entry(sample.diff().round() as i64).or_insert(0) += 1;
                *b.jumps.entry(sample.is_jumps).or_insert(0) += 1;
                b.is_steps += sample.is_steps;
            }
            Ok(b)
        })
        .collect();
    let mut diffs = BTreeMap::new();
    let mut jumps = BTreeMap::new();
    let mut is_steps = 0u64;
    for b in partials? {
        for (k, v) in b.diffs {
            *diffs.entry(k).or_insert(0) += v;
        }
        for (k, v) in b.jumps {
            *jumps.entry(k).or_insert(0) += v;
        }
        is_steps += b.is_steps;
    }
    let zero_fraction = *diffs.get(&0).unwrap_or(&0) as f64 / m as f64;
    let positive: u64 = jumps.iter().filter(|&(&k, _)| k > 0).map(|(_, &v)| v).sum();
    let conditional_mass_at_one = if positive > 0 {
        *jumps.get(&1).unwrap_or(&0) as f64 / positive as f64
    } else {
        f64::NAN
    };
    Ok(DeepHistograms {
        model: model.name.to_string(),
        level,
        delta,
        m,
        seed,
        diff_counts: diffs,
        jump_counts: jumps,
        zero_fraction,
        avg_is_steps: is_steps as f64 / m as f64,
        conditional_mass_at_one,
    })
}

/// Histogram of the exact integer difference g_fine - g_coarse, with
/// the mass at zero.
pub fn coupling_histogram(
    model: &NamedModel,
    level: u32,
    delta: Option<f64>,
    m: u64,
    seed: u64,
) -> Result<(BTreeMap<i64, u64>, f64), EngineError> {
    let h = histogram_pass(model, level, delta, m, seed)?;
    Ok((h.diff_counts, h.zero_fraction))
}

/// Histogram of total boosted jump counts per path.
pub fn is_jump_histogram(
    model: &NamedModel,
    level: u32,
    delta: Option<f64>,
    m: u64,
    seed: u64,
) -> Result<BTreeMap<u64, u64>, EngineError> {
    Ok(histogram_pass(model, level, delta, m, seed)?.jump_counts)
}

impl DeepHistograms {
    pub fn to_diff_csv(&self) -> String {
        let mut out = csv_header(
            self.seed,
            &self.model,
            &delta_label(self.delta),
            &format!("level={} m={} zero_fraction={}", self.level, self.m, self.zero_fraction),
        );
        out.push_str("diff,count\n");
        for (k, v) in &self.diff_counts {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }

    pub fn to_jump_csv(&self) -> String {
        let mut out = csv_header(
            self.seed,
            &self.model,
            &delta_label(self.delta),
            &format!(
                "level={} m={} avg_is_steps={} conditional_mass_at_one={}",
                self.level, self.m, self.avg_is_steps, self.conditional_mass_at_one
            ),
        );
        out.push_str("is_jumps,count\n");
        for (k, v) in &self.jump_counts {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }
}

/// Estimation methods compared in the complexity sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    McSsa,
    Mlmc,
    MlmcIs(f64),
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::McSsa => "mc_ssa".to_string(),
            Method::Mlmc => "mlmc".to_string(),
            Method::MlmcIs(d) => format!("mlmc_is_{d}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComplexityRow {
    pub tol: f64,
    pub method: String,
    pub seed: u64,
    pub estimate: f64,
    pub statistical_error: f64,
    pub work_draws: f64,
    pub work_seconds: f64,
}

/// One row per (tolerance, method, seed): the estimate and its work in
/// both draw counts and seconds.
pub fn complexity_sweep(
    model: &NamedModel,
    tols: &[f64],
    methods: &[Method],
    runs: u64,
    base_seed: u64,
    max_level: u32,
) -> Result<Vec<ComplexityRow>, EngineError> {
    let mut rows = Vec::new();
    for &tol in tols {
        for method in methods {
            for run in 0..runs {
                let seed = base_seed + run;
                let row = match method {
                    Method::McSsa => {
                        let t0 = Instant::now();
                        let res = mc_ssa_estimate(
                            &model.network,
                            &model.x0,
                            model.t_final,
                            &model.observable,
                            tol,
                            seed,
                        )?;
                        ComplexityRow {
                            tol,
                            method: method.label(),
                            seed,
                            estimate: res.estimate,
                            statistical_error: res.statistical_error,
                            work_draws: res.total_jumps as f64,
                            work_seconds: t0.elapsed().as_secs_f64(),
                        }
                    }
                    Method::Mlmc | Method::MlmcIs(_) => {
                        let (use_is, delta) = match method {
                            Method::MlmcIs(d) => (true, *d),
                            _ => (false, 0.0),
                        };
                        let cfg = MlmcConfig {
                            tol,
                            delta,
                            use_is,
                            l0: model.default_l0,
                            dt0: 1.0,
                            seed,
                            max_level,
                        };
                        let res = mlmc_estimate(
                            &model.network,
                            &model.x0,
                            model.t_final,
                            &model.observable,
                            &cfg,
                        )?;
                        ComplexityRow {
                            tol,
                            method: method.label(),
                            seed,
                            estimate: res.estimate,
                            statistical_error: res.statistical_error,
                            work_draws: res.total_work_draws,
                            work_seconds: res.total_work_seconds,
                        }
                    }
                };
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Renders sweep rows as CSV. The work_seconds column is wall-clock
/// and therefore the one field that varies across reruns.
pub fn complexity_csv(model: &str, base_seed: u64, rows: &[ComplexityRow]) -> String {
    let mut out = csv_header(base_seed, model, "per-row", "");
    out.push_str("tol,method,seed,estimate,statistical_error,work_draws,work_seconds\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.tol, r.method, r.seed, r.estimate, r.statistical_error, r.work_draws, r.work_seconds
        );
    }
    out
}
