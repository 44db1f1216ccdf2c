//! Whole-vector Hamiltonian Monte Carlo.
//!
//! Every step draws a fresh momentum for all free coordinates and integrates
//! the full vector jointly with the leapfrog scheme; component-wise updates
//! are never used. The step size is adapted only during burn-in, after which
//! it is frozen so the retained draws come from a fixed Markov kernel.

mod diagnostics;
mod glmar;
mod sampler;

pub use diagnostics::{bmse, default_batches, tune_mass, SampleStore};
pub use glmar::{run_hmc, GlmArTarget, HmcFit, Parameterization};
pub use sampler::{
    adapt_step_size, hmc_step, leapfrog, run_chain, ChainOutput, HmcConfig, HmcState, LeapfrogOutcome,
    StepInfo, Target,
};
