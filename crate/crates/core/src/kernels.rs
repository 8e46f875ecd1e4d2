//! Path simulation kernels: exact jump-by-jump simulation, explicit
//! tau-leaping, and a split-propensity coupled fine/coarse tau-leap
//! pair with an optional pathwise change of measure that boosts the
//! rare residual channels responsible for decoupling.

use rand::Rng;
use thiserror::Error;

use crate::network::{
    observe, sensitive_set, NetworkError, Observable, ReactionNetwork, StateVector,
};
use crate::rng::{exponential, poisson};

/// Random streams consumed per reaction by the coupled kernel: one
/// shared channel and one residual channel per side.
pub const SLOTS_PER_REACTION: usize = 3;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("final time {t_final} is not a positive whole number of steps of dt {dt}")]
    BadGrid { t_final: f64, dt: f64 },
    #[error("coupled kernel needs a fine level >= 1, got {0}")]
    BadLevel(u32),
    #[error("measure-change exponent must lie in [0, 1), got {0}")]
    BadDelta(f64),
    #[error("expected {expected} random streams, got {got}")]
    StreamCount { expected: usize, got: usize },
    #[error("base step dt0 must be positive and finite, got {0}")]
    BadDt0(f64),
}

/// Geometric step hierarchy: level `l` uses dt = dt0 * 2^-l.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSpec {
    pub level: u32,
    pub dt0: f64,
}

impl LevelSpec {
    pub fn new(level: u32, dt0: f64) -> Result<Self, KernelError> {
        if !dt0.is_finite() || dt0 <= 0.0 {
            return Err(KernelError::BadDt0(dt0));
        }
        Ok(Self { level, dt0 })
    }

    pub fn dt(&self) -> f64 {
        self.dt0 * 0.5f64.powi(self.level as i32)
    }

    /// Steps needed to cover `t_final`; errors unless that is a
    /// positive whole number (within rounding slack).
    pub fn steps(&self, t_final: f64) -> Result<u64, KernelError> {
        let dt = self.dt();
        let raw = t_final / dt;
        let n = raw.round();
        if !t_final.is_finite() || t_final <= 0.0 || n < 1.0 || (raw - n).abs() > 1e-9 * n {
            return Err(KernelError::BadGrid { t_final, dt });
        }
        Ok(n as u64)
    }

    /// The next-coarser level, if any.
    pub fn coarser(&self) -> Option<LevelSpec> {
        self.level.checked_sub(1).map(|level| LevelSpec { level, dt0: self.dt0 })
    }
}

/// Outcome of one coupled fine/coarse path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledSample {
    pub g_fine: f64,
    pub g_coarse: f64,
    /// Log likelihood-ratio weight of the path under the sampling
    /// measure; exactly 0 when the change of measure is off.
    pub log_likelihood: f64,
    /// Count of (step, reaction) events where the measure change fired.
    pub is_steps: u64,
    /// Total jumps drawn from boosted residual channels.
    pub is_jumps: u64,
    /// Poisson sampler invocations with positive mean.
    pub poisson_draws: u64,
}

impl CoupledSample {
    pub fn diff(&self) -> f64 {
        self.g_fine - self.g_coarse
    }

    pub fn weight(&self) -> f64 {
        self.log_likelihood.exp()
    }

    /// The estimator payload: (g_fine - g_coarse) times the
    /// likelihood-ratio weight.
    pub fn weighted_diff(&self) -> f64 {
        self.diff() * self.weight()
    }
}

/// Log likelihood-ratio factor for one boosted channel: observing `k`
/// jumps from mean `c * delta_a * dt` instead of `delta_a * dt`
/// contributes (c - 1) * dt * delta_a - k * ln(c) to the path's log
/// weight.
pub fn is_step_log_factor(delta_a: f64, dt: f64, c: f64, k: u64) -> f64 {
    (c - 1.0) * dt * delta_a - (k as f64) * c.ln()
}

fn draw<R: Rng + ?Sized>(rng: &mut R, mean: f64, counter: &mut u64) -> u64 {
    if mean > 0.0 {
        *counter += 1;
        poisson(rng, mean)
    } else {
        0
    }
}

/// Exact jump-chain simulation to `t_final`. Returns the terminal
/// state and the number of jumps taken. Halts early once every
/// propensity vanishes.
pub fn ssa_path<R: Rng + ?Sized>(
    net: &ReactionNetwork,
    x0: &[i64],
    t_final: f64,
    rng: &mut R,
) -> Result<(StateVector, u64), KernelError> {
    let mut x: StateVector = x0.to_vec();
    let mut a = vec![0.0; net.num_reactions()];
    let mut t = 0.0;
    let mut jumps = 0u64;
    loop {
        net.propensities_into(&x, &mut a);
        let a0: f64 = a.iter().sum();
        if a0 <= 0.0 {
            break;
        }
        t += exponential(rng) / a0;
        if t > t_final {
            break;
        }
        let target = rng.gen::<f64>() * a0;
        let mut acc = 0.0;
        let mut chosen = net.num_reactions() - 1;
        for (j, &aj) in a.iter().enumerate() {
            acc += aj;
            if target < acc {
                chosen = j;
                break;
            }
        }
        net.apply_single_firing(&mut x, chosen)?;
        jumps += 1;
    }
    Ok((x, jumps))
}

/// Explicit tau-leap path on the level's grid. Returns the terminal
/// state and the number of positive-mean Poisson draws consumed.
pub fn tau_leap_path<R: Rng + ?Sized>(
    net: &ReactionNetwork,
    x0: &[i64],
    t_final: f64,
    spec: &LevelSpec,
    rng: &mut R,
) -> Result<(StateVector, u64), KernelError> {
    let n_steps = spec.steps(t_final)?;
    let dt = spec.dt();
    let nr = net.num_reactions();
    let mut x: StateVector = x0.to_vec();
    let mut a = vec![0.0; nr];
    let mut k = vec![0u64; nr];
    let mut draws = 0u64;
    for _ in 0..n_steps {
        net.propensities_into(&x, &mut a);
        for j in 0..nr {
            k[j] = draw(rng, a[j] * dt, &mut draws);
        }
        net.apply_firings_in_place(&mut x, &k)?;
    }
    Ok((x, draws))
}

/// Coupled fine/coarse tau-leap pair on levels (l, l-1) with no
/// change of measure.
pub fn coupled_pair<R: Rng>(
    net: &ReactionNetwork,
    x0: &[i64],
    t_final: f64,
    fine: &LevelSpec,
    g: &Observable,
    streams: &mut [R],
) -> Result<CoupledSample, KernelError> {
    coupled_core(net, x0, t_final, fine, g, 0.0, streams, |_, _, _, _| {})
}

/// Coupled pair with the residual-channel change of measure. The
/// boost is c = dt^-delta with `delta` in [0, 1); delta = 0 turns the
/// measure change off entirely and reproduces [`coupled_pair`]
/// bit for bit.
pub fn coupled_pair_is<R: Rng>(
    net: &ReactionNetwork,
    x0: &[i64],
    t_final: f64,
    fine: &LevelSpec,
    g: &Observable,
    delta: f64,
    streams: &mut [R],
) -> Result<CoupledSample, KernelError> {
    coupled_core(net, x0, t_final, fine, g, delta, streams, |_, _, _, _| {})
}

/// Full grid record of one coupled path.
#[derive(Debug, Clone)]
pub struct CoupledTrajectory {
    pub times: Vec<f64>,
    pub fine_states: Vec<StateVector>,
    pub coarse_states: Vec<StateVector>,
    pub cumulative_log_likelihood: Vec<f64>,
    pub sample: CoupledSample,
}

/// Runs one coupled path and records both states and the running log
/// weight at every fine grid time, including t = 0.
pub fn coupled_trajectory<R: Rng>(
    net: &ReactionNetwork,
    x0: &[i64],
    t_final: f64,
    fine: &LevelSpec,
    g: &Observable,
    delta: f64,
    streams: &mut [R],
) -> Result<CoupledTrajectory, KernelError> {
    let mut times = Vec::new();
    let mut fine_states = Vec::new();
    let mut coarse_states = Vec::new();
    let mut cumulative = Vec::new();
    let sample = coupled_core(net, x0, t_final, fine, g, delta, streams, |t, zf, zc, ll| {
        times.push(t);
        fine_states.push(zf.to_vec());
        coarse_states.push(zc.to_vec());
        cumulative.push(ll);
    })?;
    Ok(CoupledTrajectory { times, fine_states, coarse_states, cumulative_log_likelihood: cumulative, sample })
}

/// Shared coupled-pair engine. Per fine step the coarse propensities
/// are refrozen on the coarse grid (every second fine step), each
/// reaction's rate mass is split into a shared channel at
/// min(a_fine, a_frozen) plus one-sided residuals, and three
/// independent Poisson channels drive the two chains. The coarse
/// STATE still advances every fine step; only its propensities are
/// held. When the measure change is active, residual channels of
/// observable-moving reactions are boosted by c while the two
/// observables still agree, and the log weight absorbs the exact
/// Poisson likelihood ratio.
fn coupled_core<R, F>(
    net: &ReactionNetwork,
    x0: &[i64],
    t_final: f64,
    fine: &LevelSpec,
    g: &Observable,
    delta: f64,
    streams: &mut [R],
    mut on_step: F,
) -> Result<CoupledSample, KernelError>
where
    R: Rng,
    F: FnMut(f64, &StateVector, &StateVector, f64),
{
    if fine.level < 1 {
        return Err(KernelError::BadLevel(fine.level));
    }
    if !delta.is_finite() || !(0.0..1.0).contains(&delta) {
        return Err(KernelError::BadDelta(delta));
    }
    let coarse = fine.coarser().expect("level >= 1 has a coarser level");
    let n_steps = fine.steps(t_final)?;
    let n_coarse = coarse.steps(t_final)?;
    debug_assert_eq!(n_steps, 2 * n_coarse);
    let nr = net.num_reactions();
    let expected = SLOTS_PER_REACTION * nr;
    if streams.len() != expected {
        return Err(KernelError::StreamCount { expected, got: streams.len() });
    }
    g.validate(net)?;

    let dt = fine.dt();
    let is_active = delta > 0.0;
    let c = dt.powf(-delta);
    let mut observable_moving = vec![false; nr];
    for j in sensitive_set(g, net) {
        observable_moving[j] = true;
    }

    let mut zf: StateVector = x0.to_vec();
    let mut zc: StateVector = x0.to_vec();
    let mut af = vec![0.0; nr];
    let mut ac_frozen = vec![0.0; nr];
    let mut kf = vec![0u64; nr];
    let mut kc = vec![0u64; nr];
    let mut out = CoupledSample {
        g_fine: 0.0,
        g_coarse: 0.0,
        log_likelihood: 0.0,
        is_steps: 0,
        is_jumps: 0,
        poisson_draws: 0,
    };

    on_step(0.0, &zf, &zc, 0.0);
    for n in 0..n_steps {
        if n % 2 == 0 {
            net.propensities_into(&zc, &mut ac_frozen);
        }
        net.propensities_into(&zf, &mut af);
        let g_equal = observe(g, &zf) == observe(g, &zc);
        for j in 0..nr {
            let a_f = af[j];
            let a_c = ac_frozen[j];
            let shared = a_f.min(a_c);
            let mut resid_f = a_f - shared;
            let mut resid_c = a_c - shared;
            // The min split leaves at most one side with residual mass.
            debug_assert!(resid_f == 0.0 || resid_c == 0.0);
            let boosted = is_active && observable_moving[j] && a_f != a_c && g_equal;
            if boosted {
                resid_f *= c;
                resid_c *= c;
            }
            let k_shared = draw(&mut streams[SLOTS_PER_REACTION * j], shared * dt, &mut out.poisson_draws);
            let k_f = draw(&mut streams[SLOTS_PER_REACTION * j + 1], resid_f * dt, &mut out.poisson_draws);
            let k_c = draw(&mut streams[SLOTS_PER_REACTION * j + 2], resid_c * dt, &mut out.poisson_draws);
            kf[j] = k_shared + k_f;
            kc[j] = k_shared + k_c;
            if boosted {
                let delta_a = (a_f - a_c).abs();
                // One residual is zero, so k_f + k_c is exactly the
                // boosted channel's count.
                let k_boosted = k_f + k_c;
                out.is_steps += 1;
                out.is_jumps += k_boosted;
                let factor = is_step_log_factor(delta_a, dt, c, k_boosted);
                #[cfg(debug_assertions)]
                {
                    let lambda = delta_a * dt;
                    let direct = crate::rng::ln_poisson_pmf(k_boosted, lambda)
                        - crate::rng::ln_poisson_pmf(k_boosted, c * lambda);
                    debug_assert!(
                        (factor - direct).abs() <= 1e-8 * (1.0 + direct.abs()),
                        "log factor {factor} disagrees with pmf ratio {direct}"
                    );
                }
                out.log_likelihood += factor;
            }
        }
        net.apply_firings_in_place(&mut zf, &kf)?;
        net.apply_firings_in_place(&mut zc, &kc)?;
        on_step((n + 1) as f64 * dt, &zf, &zc, out.log_likelihood);
    }
    out.g_fine = observe(g, &zf);
    out.g_coarse = observe(g, &zc);
    Ok(out)
}
