use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Offsets of the parameter blocks in the stacked vector
/// `θ = (w_1..w_K, a_1..a_P, α, β, λ)`, each image row stored contiguously.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub k: usize,
    pub p: usize,
    pub n: usize,
}

/// A named block of the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    W,
    A,
    Alpha,
    Beta,
    Lambda,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::W => "w",
            Block::A => "a",
            Block::Alpha => "alpha",
            Block::Beta => "beta",
            Block::Lambda => "lambda",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "w" => Block::W,
            "a" => Block::A,
            "alpha" => Block::Alpha,
            "beta" => Block::Beta,
            "lambda" => Block::Lambda,
            _ => return None,
        })
    }
}

impl Layout {
    pub fn new(k: usize, p: usize, n: usize) -> Self {
        Self { k, p, n }
    }

    /// `R = (K + P + 1) N + K + P`.
    pub fn dim(&self) -> usize {
        (self.k + self.p + 1) * self.n + self.k + self.p
    }

    pub fn w(&self, k: usize, n: usize) -> usize {
        k * self.n + n
    }
    pub fn a(&self, p: usize, n: usize) -> usize {
        (self.k + p) * self.n + n
    }
    pub fn alpha(&self, k: usize) -> usize {
        (self.k + self.p) * self.n + k
    }
    pub fn beta(&self, p: usize) -> usize {
        (self.k + self.p) * self.n + self.k + p
    }
    pub fn lambda(&self, n: usize) -> usize {
        (self.k + self.p) * self.n + self.k + self.p + n
    }

    /// Block, row within the block, and voxel (for image blocks) of a flat index.
    pub fn locate(&self, i: usize) -> (Block, usize, Option<usize>) {
        let img = (self.k + self.p) * self.n;
        if i < self.k * self.n {
            (Block::W, i / self.n, Some(i % self.n))
        } else if i < img {
            let j = i - self.k * self.n;
            (Block::A, j / self.n, Some(j % self.n))
        } else if i < img + self.k {
            (Block::Alpha, i - img, None)
        } else if i < img + self.k + self.p {
            (Block::Beta, i - img - self.k, None)
        } else {
            (Block::Lambda, 0, Some(i - img - self.k - self.p))
        }
    }

    pub fn block_range(&self, block: Block) -> core::ops::Range<usize> {
        let img = (self.k + self.p) * self.n;
        match block {
            Block::W => 0..self.k * self.n,
            Block::A => self.k * self.n..img,
            Block::Alpha => img..img + self.k,
            Block::Beta => img + self.k..img + self.k + self.p,
            Block::Lambda => img + self.k + self.p..self.dim(),
        }
    }
}

/// Full parameter vector, stored flat in the stacking order of [`Layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    layout: Layout,
    theta: Vec<f64>,
}

impl ParamState {
    pub fn zeros(k: usize, p: usize, n: usize) -> Self {
        let layout = Layout::new(k, p, n);
        Self {
            theta: vec![0.0; layout.dim()],
            layout,
        }
    }

    /// Zero images with all precisions set to one.
    pub fn unit(k: usize, p: usize, n: usize) -> Self {
        let mut s = Self::zeros(k, p, n);
        for b in [Block::Alpha, Block::Beta, Block::Lambda] {
            let r = s.layout.block_range(b);
            s.theta[r].iter_mut().for_each(|v| *v = 1.0);
        }
        s
    }

    pub fn unflatten(k: usize, p: usize, n: usize, theta: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(k, p, n);
        if theta.len() != layout.dim() {
            return Err(Error::LengthMismatch {
                what: "parameter vector",
                expected: layout.dim(),
                got: theta.len(),
            });
        }
        Ok(Self { layout, theta })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.theta.clone()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn w(&self, k: usize) -> &[f64] {
        let s = self.layout.w(k, 0);
        &self.theta[s..s + self.layout.n]
    }
    pub fn w_mut(&mut self, k: usize) -> &mut [f64] {
        let s = self.layout.w(k, 0);
        &mut self.theta[s..s + self.layout.n]
    }
    pub fn a(&self, p: usize) -> &[f64] {
        let s = self.layout.a(p, 0);
        &self.theta[s..s + self.layout.n]
    }
    pub fn a_mut(&mut self, p: usize) -> &mut [f64] {
        let s = self.layout.a(p, 0);
        &mut self.theta[s..s + self.layout.n]
    }
    pub fn alpha(&self) -> &[f64] {
        &self.theta[self.layout.block_range(Block::Alpha)]
    }
    pub fn alpha_mut(&mut self) -> &mut [f64] {
        let r = self.layout.block_range(Block::Alpha);
        &mut self.theta[r]
    }
    pub fn beta(&self) -> &[f64] {
        &self.theta[self.layout.block_range(Block::Beta)]
    }
    pub fn beta_mut(&mut self) -> &mut [f64] {
        let r = self.layout.block_range(Block::Beta);
        &mut self.theta[r]
    }
    pub fn lambda(&self) -> &[f64] {
        &self.theta[self.layout.block_range(Block::Lambda)]
    }
    pub fn lambda_mut(&mut self) -> &mut [f64] {
        let r = self.layout.block_range(Block::Lambda);
        &mut self.theta[r]
    }

    /// Regression coefficients of one voxel (a column of `W`).
    pub fn w_voxel(&self, n: usize, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.theta[self.layout.w(k, n)];
        }
    }

    pub fn a_voxel(&self, n: usize, out: &mut [f64]) {
        for (p, o) in out.iter_mut().enumerate() {
            *o = self.theta[self.layout.a(p, n)];
        }
    }

    /// All precisions strictly positive and finite, images finite.
    pub fn is_valid(&self) -> bool {
        let pos = self.layout.block_range(Block::Alpha).start;
        self.theta[..pos].iter().all(|v| v.is_finite())
            && self.theta[pos..].iter().all(|v| *v > 0.0 && v.is_finite())
    }
}
