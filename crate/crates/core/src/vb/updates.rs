use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_traits::Float;

use super::factors::{GammaFactor, VBPosterior};
use crate::dense::Cholesky;
use crate::error::{Error, Result};
use crate::lattice::SpatialKernel;
use crate::model::{Block, HyperPriors, Layout, SuffStats};
use crate::special::pairwise_sum;

/// One factor of the mean-field posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    W(usize),
    A(usize),
    Alpha(usize),
    Beta(usize),
    Lambda(usize),
}

/// Data, kernel and hyperpriors shared by all updates.
#[derive(Debug, Clone, Copy)]
pub struct VbModel<'a> {
    pub stats: &'a SuffStats,
    pub kernel: &'a SpatialKernel,
    pub hp: HyperPriors,
}

impl<'a> VbModel<'a> {
    pub fn new(stats: &'a SuffStats, kernel: &'a SpatialKernel, hp: &HyperPriors) -> Result<Self> {
        hp.validate()?;
        if kernel.n() != stats.n() {
            return Err(Error::LengthMismatch {
                what: "kernel voxels",
                expected: stats.n(),
                got: kernel.n(),
            });
        }
        Ok(Self {
            stats,
            kernel,
            hp: *hp,
        })
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.stats.k(), self.stats.p(), self.stats.n())
    }

    /// Shapes of the `α`, `β` and `λ` updates; they do not depend on `q`.
    pub fn gamma_shapes(&self) -> [f64; 3] {
        let nf = self.stats.n() as f64;
        [
            self.hp.q1 + nf / 2.0,
            self.hp.r1 + nf / 2.0,
            self.hp.u1 + self.stats.t_eff() as f64 / 2.0,
        ]
    }

    /// `E[a* a*ᵀ]` for voxel `n`, `(P+1)²`.
    fn second_moment_ar(&self, q: &VBPosterior, n: usize, out: &mut [f64]) {
        let p = self.stats.p();
        let m = p + 1;
        let mut mu = vec![-1.0; m];
        q.a_voxel_mean(n, &mut mu[1..]);
        let cov = q.a_cov(n);
        for i in 0..m {
            for j in 0..m {
                let c = if i > 0 && j > 0 { cov[(i - 1) * p + (j - 1)] } else { 0.0 };
                out[i * m + j] = mu[i] * mu[j] + c;
            }
        }
    }

    /// `E_w[F_n]`, `(P+1)²`.
    fn expected_residual_form(&self, q: &VBPosterior, n: usize, out: &mut [f64]) {
        let (k, m) = (self.stats.k(), self.stats.p() + 1);
        let mut mu = vec![0.0; k];
        q.w_voxel_mean(n, &mut mu);
        self.stats.residual_form(n, &mu, out);
        let cov = q.w_cov(n);
        for lp in 0..m {
            for lq in 0..m {
                let c = self.stats.cxx(lp, lq);
                let mut tr = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        tr += c[a * k + b] * cov[b * k + a];
                    }
                }
                out[lp * m + lq] += tr;
            }
        }
    }

    /// `E[a*ᵀ F_n a*]`.
    pub fn expected_residual_quadratic(&self, q: &VBPosterior, n: usize) -> f64 {
        let m = self.stats.p() + 1;
        let mut m2 = vec![0.0; m * m];
        let mut f = vec![0.0; m * m];
        self.second_moment_ar(q, n, &mut m2);
        self.expected_residual_form(q, n, &mut f);
        m2.iter().zip(&f).map(|(a, b)| a * b).sum()
    }

    /// `Σ_{m≠n} (SᵀS)_{nm} img_m`.
    fn neighbour_sum(&self, img: &[f64], n: usize) -> f64 {
        let (cols, vals) = self.kernel.sts().row(n);
        cols.iter()
            .zip(vals)
            .filter(|(c, _)| **c != n)
            .map(|(c, v)| v * img[*c])
            .sum()
    }

    /// `E[v SᵀS vᵀ]` for an image with voxel-wise independent entries.
    fn expected_prior_quadratic(&self, mean: &[f64], var_of: impl Fn(usize) -> f64) -> f64 {
        let diag = self.kernel.sts_diag();
        let trace: Vec<f64> = (0..mean.len()).map(|n| diag[n] * var_of(n)).collect();
        self.kernel.quad_form_unchecked(mean) + pairwise_sum(&trace)
    }

    pub fn expected_w_quadratic(&self, q: &VBPosterior, k: usize) -> f64 {
        let kk = self.stats.k();
        self.expected_prior_quadratic(q.w_mean(k), |n| q.w_cov(n)[k * kk + k])
    }

    pub fn expected_a_quadratic(&self, q: &VBPosterior, p: usize) -> f64 {
        let pp = self.stats.p();
        self.expected_prior_quadratic(q.a_mean(p), |n| q.a_cov(n)[p * pp + p])
    }

    fn update_w(&self, q: &mut VBPosterior, n: usize) -> Result<()> {
        let (k, m) = (self.stats.k(), self.stats.p() + 1);
        let mut m2 = vec![0.0; m * m];
        self.second_moment_ar(q, n, &mut m2);
        let lam = q.lambda[n].mean();
        let diag = self.kernel.sts_diag()[n];
        let mut prec = vec![0.0; k * k];
        let mut h = vec![0.0; k];
        for lp in 0..m {
            for lq in 0..m {
                let wgt = m2[lp * m + lq];
                for (pr, c) in prec.iter_mut().zip(self.stats.cxx(lp, lq)) {
                    *pr += lam * wgt * c;
                }
                for (hi, c) in h.iter_mut().zip(self.stats.cyx(n, lp, lq)) {
                    *hi += lam * wgt * c;
                }
            }
        }
        symmetrize(&mut prec, k);
        for kk in 0..k {
            let a = q.alpha[kk].mean();
            prec[kk * k + kk] += a * diag;
            h[kk] -= a * self.neighbour_sum(q.w_mean(kk), n);
        }
        let chol = Cholesky::new(&prec, k).map_err(|_| Error::NotPositiveDefinite("q(w) precision"))?;
        chol.solve_in_place(&mut h);
        for (kk, v) in h.iter().enumerate() {
            q.w_mean[kk * self.stats.n() + n] = *v;
        }
        let kk2 = k * k;
        q.w_cov[n * kk2..(n + 1) * kk2].copy_from_slice(&chol.inverse());
        Ok(())
    }

    fn update_a(&self, q: &mut VBPosterior, n: usize) -> Result<()> {
        let (p, m) = (self.stats.p(), self.stats.p() + 1);
        let mut f = vec![0.0; m * m];
        self.expected_residual_form(q, n, &mut f);
        let lam = q.lambda[n].mean();
        let diag = self.kernel.sts_diag()[n];
        let mut prec = vec![0.0; p * p];
        let mut h = vec![0.0; p];
        for i in 0..p {
            for j in 0..p {
                prec[i * p + j] = lam * 0.5 * (f[(i + 1) * m + j + 1] + f[(j + 1) * m + i + 1]);
            }
            let b = q.beta[i].mean();
            prec[i * p + i] += b * diag;
            h[i] = lam * 0.5 * (f[(i + 1) * m] + f[i + 1]) - b * self.neighbour_sum(q.a_mean(i), n);
        }
        let chol = Cholesky::new(&prec, p).map_err(|_| Error::NotPositiveDefinite("q(a) precision"))?;
        chol.solve_in_place(&mut h);
        for (i, v) in h.iter().enumerate() {
            q.a_mean[i * self.stats.n() + n] = *v;
        }
        q.a_cov[n * p * p..(n + 1) * p * p].copy_from_slice(&chol.inverse());
        Ok(())
    }

    /// Replaces one factor by its coordinate-ascent optimum given all
    /// others. Factors of fixed blocks are left untouched.
    pub fn update(&self, q: &mut VBPosterior, factor: Factor) -> Result<()> {
        let [sa, sb, sl] = self.gamma_shapes();
        match factor {
            Factor::W(n) if !q.is_fixed(Block::W) => self.update_w(q, n),
            Factor::A(n) if !q.is_fixed(Block::A) => self.update_a(q, n),
            Factor::Alpha(k) if !q.is_fixed(Block::Alpha) => {
                let rate = 1.0 / self.hp.q2 + 0.5 * self.expected_w_quadratic(q, k);
                q.alpha[k] = GammaFactor::Gamma { shape: sa, rate };
                Ok(())
            }
            Factor::Beta(p) if !q.is_fixed(Block::Beta) => {
                let rate = 1.0 / self.hp.r2 + 0.5 * self.expected_a_quadratic(q, p);
                q.beta[p] = GammaFactor::Gamma { shape: sb, rate };
                Ok(())
            }
            Factor::Lambda(n) if !q.is_fixed(Block::Lambda) => {
                let rate = 1.0 / self.hp.u2 + 0.5 * self.expected_residual_quadratic(q, n);
                q.lambda[n] = GammaFactor::Gamma { shape: sl, rate };
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `E_q[log p(Y, θ)]` with the constants of the log-posterior dropped.
    pub fn expected_log_joint(&self, q: &VBPosterior) -> f64 {
        let hp = &self.hp;
        let nf = self.stats.n() as f64;
        let half_t = self.stats.t_eff() as f64 / 2.0;
        let mut terms = Vec::with_capacity(self.stats.n() + self.stats.k() + self.stats.p());
        for (n, lam) in q.lambda.iter().enumerate() {
            let eq = self.expected_residual_quadratic(q, n);
            terms.push(-0.5 * lam.mean() * eq + (half_t + hp.u1 - 1.0) * lam.mean_log() - lam.mean() / hp.u2);
        }
        for (k, a) in q.alpha.iter().enumerate() {
            let e = self.expected_w_quadratic(q, k);
            terms.push(-0.5 * a.mean() * e + (nf / 2.0 + hp.q1 - 1.0) * a.mean_log() - a.mean() / hp.q2);
        }
        for (p, b) in q.beta.iter().enumerate() {
            let e = self.expected_a_quadratic(q, p);
            terms.push(-0.5 * b.mean() * e + (nf / 2.0 + hp.r1 - 1.0) * b.mean_log() - b.mean() / hp.r2);
        }
        pairwise_sum(&terms)
    }

    /// Entropy of `q`; fixed blocks contribute nothing.
    pub fn entropy(&self, q: &VBPosterior) -> Result<f64> {
        let (k, p, n) = (self.stats.k(), self.stats.p(), self.stats.n());
        let mut terms = Vec::with_capacity(2 * n + k + p + n);
        let gauss = |cov: &[f64], d: usize| -> Result<f64> {
            let c = Cholesky::new(cov, d).map_err(|_| Error::NotPositiveDefinite("factor covariance"))?;
            Ok(0.5 * (d as f64 * (2.0 * PI * core::f64::consts::E).ln() + c.log_det()))
        };
        if !q.is_fixed(Block::W) {
            for v in 0..n {
                terms.push(gauss(q.w_cov(v), k)?);
            }
        }
        if !q.is_fixed(Block::A) {
            for v in 0..n {
                terms.push(gauss(q.a_cov(v), p)?);
            }
        }
        terms.extend(q.alpha.iter().chain(&q.beta).chain(&q.lambda).map(GammaFactor::entropy));
        Ok(pairwise_sum(&terms))
    }

    /// Free energy `E_q[log p(Y, θ)] + H[q]`, a lower bound on the log
    /// evidence up to the dropped constant.
    pub fn free_energy(&self, q: &VBPosterior) -> Result<f64> {
        Ok(self.expected_log_joint(q) + self.entropy(q)?)
    }
}

fn symmetrize(a: &mut [f64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = s;
            a[j * n + i] = s;
        }
    }
}

/// Free-function form of [`VbModel::update`].
pub fn vb_update_factor(q: &mut VBPosterior, factor: Factor, model: &VbModel<'_>) -> Result<()> {
    model.update(q, factor)
}

/// Free-function form of [`VbModel::free_energy`].
pub fn free_energy(q: &VBPosterior, model: &VbModel<'_>) -> Result<f64> {
    model.free_energy(q)
}
