//! The GLM-AR model: data, parameters, lag statistics and posterior density.

mod dataset;
mod ols;
mod params;
mod posterior;
mod stats;

pub use dataset::Dataset;
pub use ols::ols_init;
pub use params::{Block, Layout, ParamState};
pub use posterior::{grad_log_posterior, log_posterior, PosteriorEvaluator};
pub use stats::{precompute_suffstats, SuffStats};

/// Gamma(shape, scale) hyperpriors on α, β and λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperPriors {
    pub q1: f64,
    pub q2: f64,
    pub r1: f64,
    pub r2: f64,
    pub u1: f64,
    pub u2: f64,
}

impl Default for HyperPriors {
    fn default() -> Self {
        Self {
            q1: 0.01,
            q2: 100.0,
            r1: 0.01,
            r2: 100.0,
            u1: 0.01,
            u2: 100.0,
        }
    }
}

impl HyperPriors {
    pub fn validate(&self) -> crate::Result<()> {
        let all = [self.q1, self.q2, self.r1, self.r2, self.u1, self.u2];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(crate::Error::InvalidConfig(alloc::format!(
                "hyperprior shape/scale values must be positive: {self:?}"
            )))
        }
    }
}
