use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sampler::{run_chain, ChainOutput, HmcConfig, Target};
use crate::error::{Error, Result};
use crate::lattice::SpatialKernel;
use crate::model::{Block, HyperPriors, Layout, ParamState, PosteriorEvaluator, SuffStats};
use crate::summary::PosteriorSummary;

/// Coordinates in which the sampler moves the precisions `α`, `β`, `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parameterization {
    /// Precisions sampled directly; proposals with a non-positive precision
    /// are rejected.
    #[default]
    Natural,
    /// Precisions sampled as `η = log x`, with the Jacobian `Σ η` added.
    LogPrecision,
}

/// The GLM-AR log-posterior restricted to the free coordinates. Frozen
/// blocks stay at their values in the base state.
pub struct GlmArTarget<'a> {
    eval: PosteriorEvaluator<'a>,
    theta: Vec<f64>,
    full_grad: Vec<f64>,
    free: Vec<usize>,
    log_scale: Vec<bool>,
}

impl<'a> GlmArTarget<'a> {
    pub fn new(
        stats: &'a SuffStats,
        kernel: &'a SpatialKernel,
        hp: &HyperPriors,
        base: &ParamState,
        frozen: &[Block],
        param: Parameterization,
    ) -> Result<Self> {
        let layout = base.layout();
        if layout != Layout::new(stats.k(), stats.p(), stats.n()) {
            return Err(Error::Mismatch("base state does not match the data dimensions".into()));
        }
        if !base.is_valid() {
            return Err(Error::InvalidState);
        }
        hp.validate()?;
        let mut free = Vec::new();
        let mut log_scale = Vec::new();
        for i in 0..layout.dim() {
            let (block, _, _) = layout.locate(i);
            if frozen.contains(&block) {
                continue;
            }
            free.push(i);
            log_scale.push(param == Parameterization::LogPrecision && !matches!(block, Block::W | Block::A));
        }
        if free.is_empty() {
            return Err(Error::InvalidConfig("every block is frozen".into()));
        }
        Ok(Self {
            eval: PosteriorEvaluator::new(stats, kernel, hp),
            theta: base.flatten(),
            full_grad: vec![0.0; layout.dim()],
            free,
            log_scale,
        })
    }

    /// Indices into the full parameter vector of the free coordinates.
    pub fn free_coords(&self) -> &[usize] {
        &self.free
    }

    /// Sampler position of a full state.
    pub fn position_of(&self, state: &ParamState) -> Vec<f64> {
        let th = state.as_slice();
        self.free
            .iter()
            .zip(&self.log_scale)
            .map(|(&i, &l)| if l { th[i].ln() } else { th[i] })
            .collect()
    }

    /// Full natural-scale parameter vector at a sampler position.
    pub fn full_theta(&self, x: &[f64]) -> Vec<f64> {
        let mut th = self.theta.clone();
        for ((&i, &l), v) in self.free.iter().zip(&self.log_scale).zip(x) {
            th[i] = if l { v.exp() } else { *v };
        }
        th
    }
}

impl Target for GlmArTarget<'_> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn log_density_and_grad(&mut self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        let mut jac = 0.0;
        for ((&i, &l), v) in self.free.iter().zip(&self.log_scale).zip(x) {
            if l {
                self.theta[i] = v.exp();
                jac += v;
            } else {
                self.theta[i] = *v;
            }
        }
        let lp = self
            .eval
            .log_posterior_and_grad(&self.theta, &mut self.full_grad)
            .ok()?;
        for (((g, &i), &l), v) in grad.iter_mut().zip(&self.free).zip(&self.log_scale).zip(x) {
            *g = if l {
                self.full_grad[i] * v.exp() + 1.0
            } else {
                self.full_grad[i]
            };
        }
        let total = lp + jac;
        if total.is_finite() {
            Some(total)
        } else {
            None
        }
    }

    fn output(&self, x: &[f64], out: &mut [f64]) {
        for ((o, v), &l) in out.iter_mut().zip(x).zip(&self.log_scale) {
            *o = if l { v.exp() } else { *v };
        }
    }
}

/// Result of [`run_hmc`]. Stored draws, means and traces are on the natural
/// scale and indexed by free coordinate; `free` maps them to the full vector.
#[derive(Debug, Clone)]
pub struct HmcFit {
    pub chain: ChainOutput,
    pub summary: PosteriorSummary,
    pub free: Vec<usize>,
}

impl HmcFit {
    /// Retained draws of one full-vector coordinate, if it was free and
    /// draws were kept.
    pub fn coord_draws(&self, full_index: usize) -> Option<Vec<f64>> {
        let j = self.free.iter().position(|&i| i == full_index)?;
        if !self.chain.store.keeps_draws() {
            return None;
        }
        Some(self.chain.store.column(j))
    }

    /// Traces keyed by full-vector index.
    pub fn traces(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.chain
            .traces
            .iter()
            .map(move |(j, tr)| (self.free[*j], tr.as_slice()))
    }
}

/// Default monitored coordinates: five random `W` entries, two random `A`
/// entries and every `α` and `β`, restricted to `free`.
pub(crate) fn default_monitor(layout: Layout, free: &[usize], seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_6e69_746f_72);
    let mut picks = Vec::new();
    let w = layout.block_range(Block::W);
    let a = layout.block_range(Block::A);
    for (range, count) in [(w, 5usize), (a, 2usize)] {
        let len = range.len();
        if len == 0 {
            continue;
        }
        let mut chosen: Vec<usize> = sample(&mut rng, len, count.min(len))
            .into_iter()
            .map(|i| range.start + i)
            .collect();
        chosen.sort_unstable();
        picks.extend(chosen);
    }
    picks.extend(layout.block_range(Block::Alpha));
    picks.extend(layout.block_range(Block::Beta));
    picks
        .into_iter()
        .filter_map(|i| free.iter().position(|&f| f == i))
        .collect()
}

/// Samples the GLM-AR posterior from `init`, keeping the blocks in `frozen`
/// fixed. `monitor` lists full-vector indices to trace; `None` selects the
/// default set.
#[allow(clippy::too_many_arguments)]
pub fn run_hmc(
    stats: &SuffStats,
    kernel: &SpatialKernel,
    hp: &HyperPriors,
    init: &ParamState,
    frozen: &[Block],
    param: Parameterization,
    cfg: &HmcConfig,
    monitor: Option<&[usize]>,
) -> Result<HmcFit> {
    let layout = init.layout();
    let mut target = GlmArTarget::new(stats, kernel, hp, init, frozen, param)?;
    let free = target.free_coords().to_vec();
    let monitor_free: Vec<usize> = match monitor {
        Some(m) => m
            .iter()
            .filter_map(|i| free.iter().position(|f| f == i))
            .collect(),
        None => default_monitor(layout, &free, cfg.seed),
    };
    let start = target.position_of(init);
    let chain = run_chain(&mut target, start, cfg, &monitor_free)?;

    let dim = layout.dim();
    let mut mean = init.flatten();
    let mut variance = vec![0.0; dim];
    let mut bmse_full = vec![0.0; dim];
    let var = chain.store.variance();
    let bm = chain.store.bmse_all();
    for (j, &i) in free.iter().enumerate() {
        mean[i] = chain.store.mean()[j];
        variance[i] = var[j];
        if let Some(b) = &bm {
            bmse_full[i] = b[j];
        }
    }
    let summary = PosteriorSummary::new("hmc", layout, mean, Some(variance), bm.map(|_| bmse_full))?;
    Ok(HmcFit { chain, summary, free })
}
