use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::model::{Block, Layout, ParamState};
use crate::special::{digamma, ln_gamma};

/// A Gamma factor (shape/rate), or a precision held fixed at a value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaFactor {
    Gamma { shape: f64, rate: f64 },
    Fixed(f64),
}

impl GammaFactor {
    pub fn mean(&self) -> f64 {
        match *self {
            GammaFactor::Gamma { shape, rate } => shape / rate,
            GammaFactor::Fixed(v) => v,
        }
    }

    /// `E[log x]`.
    pub fn mean_log(&self) -> f64 {
        match *self {
            GammaFactor::Gamma { shape, rate } => digamma(shape) - rate.ln(),
            GammaFactor::Fixed(v) => v.ln(),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            GammaFactor::Gamma { shape, rate } => shape / (rate * rate),
            GammaFactor::Fixed(_) => 0.0,
        }
    }

    /// Differential entropy; a fixed value contributes nothing.
    pub fn entropy(&self) -> f64 {
        match *self {
            GammaFactor::Gamma { shape, rate } => {
                shape - rate.ln() + ln_gamma(shape) + (1.0 - shape) * digamma(shape)
            }
            GammaFactor::Fixed(_) => 0.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            GammaFactor::Gamma { shape, rate } => shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite(),
            GammaFactor::Fixed(v) => v > 0.0 && v.is_finite(),
        }
    }
}

/// Mean-field posterior: per-voxel Gaussian factors for `w_n` and `a_n` and
/// Gamma factors for every precision.
///
/// Means are stored image-wise (`w_mean[k*N + n]`, like the parameter
/// vector) so spatial neighbour sums read contiguous rows; covariances are
/// stored per voxel (`w_cov[n*K*K ..]`).
#[derive(Debug, Clone, PartialEq)]
pub struct VBPosterior {
    pub(crate) layout: Layout,
    pub(crate) w_mean: Vec<f64>,
    pub(crate) w_cov: Vec<f64>,
    pub(crate) a_mean: Vec<f64>,
    pub(crate) a_cov: Vec<f64>,
    pub(crate) alpha: Vec<GammaFactor>,
    pub(crate) beta: Vec<GammaFactor>,
    pub(crate) lambda: Vec<GammaFactor>,
    pub(crate) fixed: Vec<Block>,
    pub(crate) free_energy_trace: Vec<f64>,
}

impl VBPosterior {
    /// Starts from point values: means from `state`, zero covariances and
    /// Gamma factors with the update shapes centred on the state's
    /// precisions. Blocks in `fixed` are never updated; fixed precisions are
    /// held at the state's values.
    pub fn from_state(state: &ParamState, shapes: [f64; 3], fixed: &[Block]) -> Self {
        let layout = state.layout();
        let (k, p, n) = (layout.k, layout.p, layout.n);
        let gamma = |block: Block, shape: f64, v: f64| {
            if fixed.contains(&block) {
                GammaFactor::Fixed(v)
            } else {
                GammaFactor::Gamma { shape, rate: shape / v }
            }
        };
        Self {
            layout,
            w_mean: state.as_slice()[layout.block_range(Block::W)].to_vec(),
            w_cov: vec![0.0; n * k * k],
            a_mean: state.as_slice()[layout.block_range(Block::A)].to_vec(),
            a_cov: vec![0.0; n * p * p],
            alpha: state.alpha().iter().map(|&v| gamma(Block::Alpha, shapes[0], v)).collect(),
            beta: state.beta().iter().map(|&v| gamma(Block::Beta, shapes[1], v)).collect(),
            lambda: state.lambda().iter().map(|&v| gamma(Block::Lambda, shapes[2], v)).collect(),
            fixed: fixed.to_vec(),
            free_energy_trace: Vec::new(),
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn fixed_blocks(&self) -> &[Block] {
        &self.fixed
    }

    pub fn is_fixed(&self, block: Block) -> bool {
        self.fixed.contains(&block)
    }

    /// Mean image of regressor `k`.
    pub fn w_mean(&self, k: usize) -> &[f64] {
        let n = self.layout.n;
        &self.w_mean[k * n..(k + 1) * n]
    }

    pub fn a_mean(&self, p: usize) -> &[f64] {
        let n = self.layout.n;
        &self.a_mean[p * n..(p + 1) * n]
    }

    /// `K×K` covariance of `q(w_n)`.
    pub fn w_cov(&self, n: usize) -> &[f64] {
        let kk = self.layout.k * self.layout.k;
        &self.w_cov[n * kk..(n + 1) * kk]
    }

    pub fn a_cov(&self, n: usize) -> &[f64] {
        let pp = self.layout.p * self.layout.p;
        &self.a_cov[n * pp..(n + 1) * pp]
    }

    pub fn w_voxel_mean(&self, n: usize, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.w_mean[k * self.layout.n + n];
        }
    }

    pub fn a_voxel_mean(&self, n: usize, out: &mut [f64]) {
        for (p, o) in out.iter_mut().enumerate() {
            *o = self.a_mean[p * self.layout.n + n];
        }
    }

    pub fn alpha(&self) -> &[GammaFactor] {
        &self.alpha
    }

    pub fn beta(&self) -> &[GammaFactor] {
        &self.beta
    }

    pub fn lambda(&self) -> &[GammaFactor] {
        &self.lambda
    }

    pub fn free_energy_trace(&self) -> &[f64] {
        &self.free_energy_trace
    }

    /// Parameter vector of the factor means.
    pub fn mean_state(&self) -> ParamState {
        let mut theta = Vec::with_capacity(self.layout.dim());
        theta.extend_from_slice(&self.w_mean);
        theta.extend_from_slice(&self.a_mean);
        theta.extend(self.alpha.iter().map(GammaFactor::mean));
        theta.extend(self.beta.iter().map(GammaFactor::mean));
        theta.extend(self.lambda.iter().map(GammaFactor::mean));
        ParamState::unflatten(self.layout.k, self.layout.p, self.layout.n, theta)
            .expect("layout-consistent vector")
    }

    /// Marginal variances in parameter-vector order.
    pub fn marginal_variances(&self) -> Vec<f64> {
        let Layout { k, p, n } = self.layout;
        let mut var = vec![0.0; self.layout.dim()];
        for v in 0..n {
            for kk in 0..k {
                var[self.layout.w(kk, v)] = self.w_cov(v)[kk * k + kk];
            }
            for pp in 0..p {
                var[self.layout.a(pp, v)] = self.a_cov(v)[pp * p + pp];
            }
        }
        for (i, g) in self.alpha.iter().enumerate() {
            var[self.layout.alpha(i)] = g.variance();
        }
        for (i, g) in self.beta.iter().enumerate() {
            var[self.layout.beta(i)] = g.variance();
        }
        for (i, g) in self.lambda.iter().enumerate() {
            var[self.layout.lambda(i)] = g.variance();
        }
        var
    }

    /// Every Gamma factor positive and finite, every covariance symmetric
    /// with a positive diagonal (zero for fixed blocks), means finite.
    pub fn is_valid(&self) -> bool {
        let Layout { k, p, n } = self.layout;
        let cov_ok = |cov: &[f64], d: usize, fixed: bool| {
            (0..n).all(|v| {
                let c = &cov[v * d * d..(v + 1) * d * d];
                (0..d).all(|i| {
                    let diag = c[i * d + i];
                    let diag_ok = if fixed { diag == 0.0 } else { diag > 0.0 && diag.is_finite() };
                    diag_ok && (0..d).all(|j| c[i * d + j] == c[j * d + i])
                })
            })
        };
        self.w_mean.iter().chain(&self.a_mean).all(|v| v.is_finite())
            && cov_ok(&self.w_cov, k, self.is_fixed(Block::W))
            && cov_ok(&self.a_cov, p, self.is_fixed(Block::A))
            && self.alpha.iter().chain(&self.beta).chain(&self.lambda).all(GammaFactor::is_valid)
    }
}
