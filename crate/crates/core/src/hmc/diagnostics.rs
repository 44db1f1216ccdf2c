use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use super::sampler::StepInfo;
use crate::error::{Error, Result};

/// Retained draws with Welford running moments and per-iteration
/// acceptance records.
#[derive(Debug, Clone)]
pub struct SampleStore {
    dim: usize,
    keep: bool,
    thin: usize,
    seen: usize,
    count: usize,
    draws: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
    accepted: Vec<bool>,
    delta_h: Vec<f64>,
}

impl SampleStore {
    pub fn new(dim: usize, keep: bool, thin: usize) -> Self {
        Self {
            dim,
            keep,
            thin: thin.max(1),
            seen: 0,
            count: 0,
            draws: Vec::new(),
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            accepted: Vec::new(),
            delta_h: Vec::new(),
        }
    }

    /// Records one iteration. Only every `thin`-th position enters the
    /// moments and the draw buffer; acceptance is recorded for all.
    pub fn push(&mut self, x: &[f64], info: StepInfo) {
        debug_assert_eq!(x.len(), self.dim);
        self.accepted.push(info.accepted);
        self.delta_h.push(info.delta_h);
        self.seen += 1;
        if (self.seen - 1) % self.thin != 0 {
            return;
        }
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / c;
            *s += d * (v - *m);
        }
        if self.keep {
            self.draws.extend_from_slice(x);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of retained draws.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Sample variances (denominator `count − 1`); zero with fewer than two draws.
    pub fn variance(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.dim];
        }
        let d = (self.count - 1) as f64;
        self.m2.iter().map(|s| s / d).collect()
    }

    pub fn keeps_draws(&self) -> bool {
        self.keep
    }

    /// Draws in row-major order (`count × dim`); empty when not kept.
    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        &self.draws[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.chunks_exact(self.dim).map(|d| d[j]).collect()
    }

    pub fn accept_trace(&self) -> &[bool] {
        &self.accepted
    }

    pub fn delta_h_trace(&self) -> &[f64] {
        &self.delta_h
    }

    /// Batch-means standard errors of every coordinate with
    /// `floor(sqrt(count))` batches; `None` without stored draws or with
    /// fewer than four draws.
    pub fn bmse_all(&self) -> Option<Vec<f64>> {
        if !self.keep || self.count < 4 {
            return None;
        }
        let b = default_batches(self.count);
        (0..self.dim).map(|j| bmse(&self.column(j), b).ok()).collect()
    }
}

/// `floor(sqrt(count))`.
pub fn default_batches(count: usize) -> usize {
    let mut b = (count as f64).sqrt() as usize;
    while b * b > count {
        b -= 1;
    }
    while (b + 1) * (b + 1) <= count {
        b += 1;
    }
    b
}

/// Batch-means Monte Carlo standard error: the draws are cut into `b`
/// consecutive batches of `floor(len / b)` (trailing remainder dropped) and
/// the result is `sqrt(var(batch means) / b)`.
pub fn bmse(draws: &[f64], b: usize) -> Result<f64> {
    let needed = b.max(2);
    if b < 2 || draws.len() < needed {
        return Err(Error::TooFewDraws {
            needed,
            got: draws.len(),
        });
    }
    let m = draws.len() / b;
    let means: Vec<f64> = draws[..b * m]
        .chunks_exact(m)
        .map(|c| c.iter().sum::<f64>() / m as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>() / (b - 1) as f64;
    Ok((var / b as f64).sqrt())
}

/// Diagonal mass `m_i = 1 / max(var_i, floor)` from pilot draws, plus the
/// number of coordinates whose variance hit the floor.
pub fn tune_mass(pilot: &SampleStore, floor: f64) -> (Vec<f64>, usize) {
    let mut floored = 0;
    let mass = pilot
        .variance()
        .into_iter()
        .map(|v| {
            if !(v >= floor) {
                floored += 1;
                1.0 / floor
            } else {
                1.0 / v
            }
        })
        .collect();
    (mass, floored)
}
