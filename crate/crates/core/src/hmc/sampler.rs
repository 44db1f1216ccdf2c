use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::diagnostics::{tune_mass, SampleStore};
use crate::error::{Error, Result};

/// A differentiable log density over `R^d`.
pub trait Target {
    fn dim(&self) -> usize;

    /// Log density at `x`, writing its gradient into `grad`. `None` outside
    /// the support or when the gradient is not finite.
    fn log_density_and_grad(&mut self, x: &[f64], grad: &mut [f64]) -> Option<f64>;

    /// Maps a sampler position to the values that are stored and traced
    /// (for example undoing a log transform). Identity by default.
    fn output(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcConfig {
    /// Initial leapfrog step size δ.
    pub step_size: f64,
    /// Leapfrog steps per proposal, L.
    pub n_leapfrog: usize,
    pub n_iter: usize,
    pub n_burn: usize,
    pub target_accept: f64,
    /// Diagonal mass matrix; `None` means identity.
    pub mass: Option<Vec<f64>>,
    /// Proposals per step-size adaptation batch.
    pub adapt_window: usize,
    /// Gain κ of the multiplicative step-size update.
    pub adapt_gain: f64,
    /// Number of mass-matrix tuning rounds carried out inside burn-in.
    pub tune_rounds: usize,
    pub mass_floor: f64,
    pub thin: usize,
    pub keep_draws: bool,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            step_size: 0.00002,
            n_leapfrog: 250,
            n_iter: 3000,
            n_burn: 2000,
            target_accept: 0.65,
            mass: None,
            adapt_window: 50,
            adapt_gain: 1.0,
            tune_rounds: 0,
            mass_floor: 1e-8,
            thin: 1,
            keep_draws: true,
            seed: 0,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.step_size > 0.0) {
            return bad("step size must be positive");
        }
        if self.n_leapfrog == 0 {
            return bad("leapfrog steps must be at least 1");
        }
        if self.n_burn >= self.n_iter {
            return bad("burn-in must be shorter than the total iteration count");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target acceptance must lie in (0, 1)");
        }
        if self.adapt_window == 0 || self.thin == 0 {
            return bad("adaptation window and thinning must be at least 1");
        }
        if !(self.adapt_gain > 0.0) || !(self.mass_floor > 0.0) {
            return bad("adaptation gain and mass floor must be positive");
        }
        if let Some(m) = &self.mass {
            if m.len() != dim {
                return Err(Error::LengthMismatch {
                    what: "mass matrix",
                    expected: dim,
                    got: m.len(),
                });
            }
            if !m.iter().all(|v| *v > 0.0 && v.is_finite()) {
                return bad("mass entries must be positive");
            }
        }
        Ok(())
    }
}

/// Current position of a chain with its cached density and gradient.
#[derive(Debug, Clone)]
pub struct HmcState {
    pub position: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
    pub iteration: usize,
    pub accepted: usize,
    pub rng: ChaCha8Rng,
}

impl HmcState {
    pub fn new<T: Target>(target: &mut T, position: Vec<f64>, seed: u64) -> Result<Self> {
        if position.len() != target.dim() {
            return Err(Error::LengthMismatch {
                what: "initial position",
                expected: target.dim(),
                got: position.len(),
            });
        }
        let mut grad = vec![0.0; position.len()];
        let log_density = target
            .log_density_and_grad(&position, &mut grad)
            .ok_or(Error::InvalidState)?;
        Ok(Self {
            position,
            log_density,
            grad,
            iteration: 0,
            accepted: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

#[derive(Debug, Clone)]
pub struct LeapfrogOutcome {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
    /// The trajectory left the support or produced a non-finite gradient;
    /// the proposal must be rejected.
    pub diverged: bool,
}

/// Leapfrog integration: a half momentum step, then `L` position updates
/// `θ ← θ + δ M⁻¹ ξ` each followed by a momentum step of `δ` (`δ/2` after
/// the last one). `grad` is the gradient of the log density at `theta`.
pub fn leapfrog<T: Target>(
    target: &mut T,
    theta: &[f64],
    xi: &[f64],
    grad: &[f64],
    delta: f64,
    n_steps: usize,
    inv_mass: &[f64],
) -> LeapfrogOutcome {
    let mut q = theta.to_vec();
    let mut r = xi.to_vec();
    let mut g = vec![0.0; q.len()];
    for (ri, gi) in r.iter_mut().zip(grad) {
        *ri += 0.5 * delta * gi;
    }
    let mut log_density = f64::NEG_INFINITY;
    for l in 1..=n_steps {
        for ((qi, ri), mi) in q.iter_mut().zip(&r).zip(inv_mass) {
            *qi += delta * mi * ri;
        }
        match target.log_density_and_grad(&q, &mut g) {
            Some(lp) if lp.is_finite() && g.iter().all(|v| v.is_finite()) => log_density = lp,
            _ => {
                return LeapfrogOutcome {
                    position: q,
                    momentum: r,
                    log_density: f64::NEG_INFINITY,
                    grad: g,
                    diverged: true,
                }
            }
        }
        let h = if l < n_steps { delta } else { 0.5 * delta };
        for (ri, gi) in r.iter_mut().zip(&g) {
            *ri += h * gi;
        }
    }
    LeapfrogOutcome {
        position: q,
        momentum: r,
        log_density,
        grad: g,
        diverged: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub accepted: bool,
    /// `H(proposal) − H(current)`; `+∞` for a diverged trajectory.
    pub delta_h: f64,
    /// `min(1, exp(−ΔH))`.
    pub accept_prob: f64,
}

fn kinetic(xi: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * xi.iter().zip(inv_mass).map(|(x, m)| x * x * m).sum::<f64>()
}

/// One Metropolis-corrected HMC transition. Momentum is drawn as
/// `ξ ~ N(0, M)` and the kinetic energy is `ξᵀ M⁻¹ ξ / 2`.
pub fn hmc_step<T: Target>(
    target: &mut T,
    state: &mut HmcState,
    delta: f64,
    n_steps: usize,
    mass: &[f64],
    inv_mass: &[f64],
) -> StepInfo {
    let xi: Vec<f64> = mass
        .iter()
        .map(|m| {
            let z: f64 = state.rng.sample(StandardNormal);
            z * m.sqrt()
        })
        .collect();
    let h0 = -state.log_density + kinetic(&xi, inv_mass);
    let out = leapfrog(target, &state.position, &xi, &state.grad, delta, n_steps, inv_mass);
    // The uniform is always drawn so the random stream does not depend on
    // whether the trajectory diverged.
    let u: f64 = state.rng.random();
    state.iteration += 1;
    if out.diverged {
        return StepInfo {
            accepted: false,
            delta_h: f64::INFINITY,
            accept_prob: 0.0,
        };
    }
    let h1 = -out.log_density + kinetic(&out.momentum, inv_mass);
    let delta_h = h1 - h0;
    let accept_prob = if delta_h.is_nan() { 0.0 } else { (-delta_h).exp().min(1.0) };
    let accepted = u < accept_prob;
    if accepted {
        state.position = out.position;
        state.log_density = out.log_density;
        state.grad = out.grad;
        state.accepted += 1;
    }
    StepInfo {
        accepted,
        delta_h,
        accept_prob,
    }
}

/// `δ ← δ · exp(κ (rate − target))`.
pub fn adapt_step_size(window_accept_rate: f64, delta: f64, cfg: &HmcConfig) -> f64 {
    delta * (cfg.adapt_gain * (window_accept_rate - cfg.target_accept)).exp()
}

/// Output of [`run_chain`].
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub store: SampleStore,
    /// Step size after burn-in (used for all retained draws).
    pub step_size: f64,
    pub mass: Vec<f64>,
    /// Acceptance rate over the retained (post burn-in) iterations.
    pub acceptance_rate: f64,
    /// Full trajectories of the requested coordinates over all iterations,
    /// burn-in included, as recorded by [`Target::output`].
    pub traces: Vec<(usize, Vec<f64>)>,
    pub final_state: HmcState,
}

/// Runs `cfg.n_iter` transitions from `init`. Burn-in adapts the step size
/// after every `adapt_window` proposals using the mean acceptance
/// probability of the window; with `tune_rounds > 0`, burn-in is split into
/// `tune_rounds + 1` segments and the mass matrix is reset to reciprocal
/// variances from the second half of each of the first `tune_rounds`. At
/// each reset δ is scaled by the square root of the median ratio of new to
/// old masses.
pub fn run_chain<T: Target>(
    target: &mut T,
    init: Vec<f64>,
    cfg: &HmcConfig,
    monitor: &[usize],
) -> Result<ChainOutput> {
    let dim = target.dim();
    cfg.validate(dim)?;
    let mut state = HmcState::new(target, init, cfg.seed)?;
    let mut mass = cfg.mass.clone().unwrap_or_else(|| vec![1.0; dim]);
    let mut inv_mass: Vec<f64> = mass.iter().map(|m| 1.0 / m).collect();
    let mut delta = cfg.step_size;
    let mut store = SampleStore::new(dim, cfg.keep_draws, cfg.thin);
    let mut traces: Vec<(usize, Vec<f64>)> = monitor
        .iter()
        .map(|&i| (i, Vec::with_capacity(cfg.n_iter)))
        .collect();

    let segment = cfg.n_burn / (cfg.tune_rounds + 1);
    let mut pilot = SampleStore::new(dim, false, 1);
    let mut window_prob = 0.0;
    let mut window_len = 0usize;
    let mut recorded = vec![0.0; dim];
    // The frozen step size is the geometric mean of the adapted values over
    // the second half of the last adaptation segment.
    let last_segment = cfg.n_burn - cfg.tune_rounds * segment;
    let average_from = cfg.n_burn - last_segment / 2;
    let mut log_delta_sum = 0.0;
    let mut log_delta_count = 0usize;

    for it in 0..cfg.n_iter {
        if it == cfg.n_burn && log_delta_count > 0 {
            delta = (log_delta_sum / log_delta_count as f64).exp();
        }
        let info = hmc_step(target, &mut state, delta, cfg.n_leapfrog, &mass, &inv_mass);
        target.output(&state.position, &mut recorded);
        for (i, tr) in traces.iter_mut() {
            tr.push(recorded[*i]);
        }
        if it < cfg.n_burn {
            window_prob += info.accept_prob;
            window_len += 1;
            if window_len == cfg.adapt_window {
                delta = adapt_step_size(window_prob / window_len as f64, delta, cfg);
                if it >= average_from {
                    log_delta_sum += delta.ln();
                    log_delta_count += 1;
                }
                window_prob = 0.0;
                window_len = 0;
            }
            if segment > 0 && cfg.tune_rounds > 0 {
                let round = it / segment;
                let pos = it % segment;
                if round < cfg.tune_rounds {
                    if pos >= segment / 2 {
                        pilot.push(&state.position, info);
                    }
                    if pos + 1 == segment {
                        if pilot.count() >= 2 {
                            let (m, floored) = tune_mass(&pilot, cfg.mass_floor);
                            if floored > 0 {
                                log::warn!("{floored} coordinates had pilot variance below the floor");
                            }
                            // Keep the step of the median coordinate, measured
                            // in its own pilot scale, where it was.
                            let mut ratios: Vec<f64> = m.iter().zip(&mass).map(|(new, old)| new / old).collect();
                            ratios.sort_by(f64::total_cmp);
                            delta *= ratios[ratios.len() / 2].sqrt();
                            mass = m;
                            inv_mass = mass.iter().map(|m| 1.0 / m).collect();
                        }
                        pilot = SampleStore::new(dim, false, 1);
                    }
                }
            }
        } else {
            store.push(&recorded, info);
        }
    }
    let retained = cfg.n_iter - cfg.n_burn;
    let accepted_after: usize = store.accept_trace().iter().filter(|a| **a).count();
    Ok(ChainOutput {
        acceptance_rate: accepted_after as f64 / retained as f64,
        store,
        step_size: delta,
        mass,
        traces,
        final_state: state,
    })
}
