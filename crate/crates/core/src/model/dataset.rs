use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Voxel time series together with the full design matrix.
///
/// `y` is `T×N` and `x_full` is `T×K`, both row-major. The regression uses
/// rows `P+1..T`; the first `P` design rows are needed for the lagged errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x_full: Vec<f64>,
    t: usize,
    n: usize,
    k: usize,
    p: usize,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x_full: Vec<f64>, t: usize, n: usize, k: usize, p: usize) -> Result<Self> {
        if p < 1 || t <= p {
            return Err(Error::InvalidDataset(format!(
                "need T > P >= 1, got T = {t}, P = {p}"
            )));
        }
        if n == 0 || k == 0 {
            return Err(Error::InvalidDataset(format!(
                "need N >= 1 and K >= 1, got N = {n}, K = {k}"
            )));
        }
        if y.len() != t * n {
            return Err(Error::LengthMismatch {
                what: "series (T×N)",
                expected: t * n,
                got: y.len(),
            });
        }
        if x_full.len() != t * k {
            return Err(Error::LengthMismatch {
                what: "design (T×K)",
                expected: t * k,
                got: x_full.len(),
            });
        }
        if let Some(pos) = x_full.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite design entry at row {}, column {}",
                pos / k,
                pos % k
            )));
        }
        Ok(Self { y, x_full, t, n, k, p })
    }

    pub fn t(&self) -> usize {
        self.t
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of modelled time points, `T − P`.
    pub fn t_eff(&self) -> usize {
        self.t - self.p
    }

    pub fn y(&self, t: usize, n: usize) -> f64 {
        self.y[t * self.n + n]
    }

    pub fn series(&self) -> &[f64] {
        &self.y
    }

    pub fn design_full(&self) -> &[f64] {
        &self.x_full
    }

    /// Row `t` (0-based) of the full design.
    pub fn x_row(&self, t: usize) -> &[f64] {
        &self.x_full[t * self.k..(t + 1) * self.k]
    }

    /// The trimmed `(T−P)×K` design (rows `P+1..T`).
    pub fn design(&self) -> &[f64] {
        &self.x_full[self.p * self.k..]
    }

    pub fn voxel_series(&self, n: usize) -> Vec<f64> {
        (0..self.t).map(|t| self.y(t, n)).collect()
    }
}
