//! Backend-independent posterior summary.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Block, Layout};

/// Per-coordinate posterior means (and, when available, marginal variances
/// and Monte Carlo standard errors) over the stacked parameter vector.
///
/// HMC, VB and OLS all produce this type so the metrics code can consume
/// any of them. OLS leaves `variance` empty; only HMC fills `bmse`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub method: String,
    pub layout: Layout,
    pub mean: Vec<f64>,
    pub variance: Option<Vec<f64>>,
    pub bmse: Option<Vec<f64>>,
}

impl PosteriorSummary {
    pub fn new(
        method: impl Into<String>,
        layout: Layout,
        mean: Vec<f64>,
        variance: Option<Vec<f64>>,
        bmse: Option<Vec<f64>>,
    ) -> Result<Self> {
        let dim = layout.dim();
        for (what, len) in [
            ("summary means", Some(mean.len())),
            ("summary variances", variance.as_ref().map(Vec::len)),
            ("summary bmse", bmse.as_ref().map(Vec::len)),
        ] {
            if let Some(len) = len {
                if len != dim {
                    return Err(Error::LengthMismatch {
                        what,
                        expected: dim,
                        got: len,
                    });
                }
            }
        }
        Ok(Self {
            method: method.into(),
            layout,
            mean,
            variance,
            bmse,
        })
    }

    /// Posterior-mean image of one `W` row (`Block::W`) or `A` row (`Block::A`).
    pub fn image(&self, block: Block, row: usize) -> &[f64] {
        let start = match block {
            Block::W => self.layout.w(row, 0),
            Block::A => self.layout.a(row, 0),
            _ => panic!("image() needs an image block"),
        };
        &self.mean[start..start + self.layout.n]
    }

    /// Marginal-variance image, if variances are present.
    pub fn variance_image(&self, block: Block, row: usize) -> Option<&[f64]> {
        let start = match block {
            Block::W => self.layout.w(row, 0),
            Block::A => self.layout.a(row, 0),
            _ => panic!("variance_image() needs an image block"),
        };
        self.variance
            .as_ref()
            .map(|v| &v[start..start + self.layout.n])
    }

    pub fn block_mean(&self, block: Block) -> &[f64] {
        &self.mean[self.layout.block_range(block)]
    }
}
