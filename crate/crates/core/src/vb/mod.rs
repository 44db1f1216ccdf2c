//! Mean-field variational Bayes by coordinate ascent.
//!
//! The posterior is approximated by independent factors: a `K`-dimensional
//! Gaussian for each voxel's regression coefficients, a `P`-dimensional
//! Gaussian for each voxel's AR coefficients, and Gamma factors for every
//! `α_k`, `β_p` and `λ_n`. Each update is the exact conjugate optimum given
//! the other factors, with spatial coupling entering through neighbour
//! means, so the free energy can only increase.

mod factors;
mod updates;

pub use factors::{GammaFactor, VBPosterior};
pub use updates::{free_energy, vb_update_factor, Factor, VbModel};

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lattice::SpatialKernel;
use crate::model::{ols_init, Block, Dataset, HyperPriors, ParamState, SuffStats};
use crate::summary::PosteriorSummary;

/// Voxel visiting order within a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepOrder {
    /// Mask scan order.
    #[default]
    Scan,
    /// Grouped by a colouring of the precision graph, so voxels within a
    /// colour could be updated concurrently.
    Colored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VBConfig {
    pub max_iter: usize,
    /// Relative free-energy change below which the ascent stops.
    pub tol: f64,
    pub sweep: SweepOrder,
    /// Reserved for randomized tie-breaking; the sweep is deterministic.
    pub seed: u64,
}

impl Default for VBConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            sweep: SweepOrder::Scan,
            seed: 0,
        }
    }
}

impl VBConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("VB tolerance must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("VB needs at least one iteration".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceReport {
    pub iterations: usize,
    /// `|F_t − F_{t−1}| / |F_{t−1}|` at the last iteration (infinite after
    /// a single sweep).
    pub final_rel_change: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct VbFit {
    pub posterior: VBPosterior,
    pub summary: PosteriorSummary,
    pub report: ConvergenceReport,
}

/// Voxel order for one sweep.
pub fn sweep_order(kernel: &SpatialKernel, order: SweepOrder) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..kernel.n()).collect();
    if order == SweepOrder::Colored {
        let colors = kernel.precision_coloring();
        idx.sort_by_key(|&n| (colors[n], n));
    }
    idx
}

/// One full sweep: every `w_n`, every `a_n`, then `α`, `β` and `λ`.
pub fn sweep(model: &VbModel<'_>, q: &mut VBPosterior, voxels: &[usize]) -> Result<()> {
    let layout = model.layout();
    for &n in voxels {
        model.update(q, Factor::W(n))?;
    }
    for &n in voxels {
        model.update(q, Factor::A(n))?;
    }
    for k in 0..layout.k {
        model.update(q, Factor::Alpha(k))?;
    }
    for p in 0..layout.p {
        model.update(q, Factor::Beta(p))?;
    }
    for n in 0..layout.n {
        model.update(q, Factor::Lambda(n))?;
    }
    Ok(())
}

/// Fits from OLS starting values with every block free.
pub fn run_vb(data: &Dataset, kernel: &SpatialKernel, hp: &HyperPriors, cfg: &VBConfig) -> Result<VbFit> {
    let stats = SuffStats::new(data)?;
    let init = ols_init(data, kernel)?;
    run_vb_from(&stats, kernel, hp, cfg, &init, &[])
}

/// Fits from `init`. Blocks listed in `fixed` keep the values in `init`:
/// image blocks as point masses, precisions as known constants.
pub fn run_vb_from(
    stats: &SuffStats,
    kernel: &SpatialKernel,
    hp: &HyperPriors,
    cfg: &VBConfig,
    init: &ParamState,
    fixed: &[Block],
) -> Result<VbFit> {
    cfg.validate()?;
    let model = VbModel::new(stats, kernel, hp)?;
    if init.layout() != model.layout() {
        return Err(Error::Mismatch("initial state does not match the data dimensions".into()));
    }
    if !init.is_valid() {
        return Err(Error::InvalidState);
    }
    let mut q = VBPosterior::from_state(init, model.gamma_shapes(), fixed);
    let voxels = sweep_order(kernel, cfg.sweep);
    let mut report = ConvergenceReport {
        iterations: 0,
        final_rel_change: f64::INFINITY,
        converged: false,
    };
    for it in 0..cfg.max_iter {
        sweep(&model, &mut q, &voxels)?;
        let f = model.free_energy(&q)?;
        if !f.is_finite() {
            return Err(Error::NotPositiveDefinite("free energy is not finite"));
        }
        report.iterations = it + 1;
        if let Some(&prev) = q.free_energy_trace.last() {
            report.final_rel_change = (f - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
        }
        q.free_energy_trace.push(f);
        if report.final_rel_change < cfg.tol {
            report.converged = true;
            break;
        }
    }
    if !report.converged {
        log::warn!(
            "VB stopped after {} iterations with relative change {:.3e}",
            report.iterations,
            report.final_rel_change
        );
    }
    let summary = PosteriorSummary::new(
        "vb",
        q.layout(),
        q.mean_state().flatten(),
        Some(q.marginal_variances()),
        None,
    )?;
    Ok(VbFit {
        posterior: q,
        summary,
        report,
    })
}
