//! Unnormalized log-posterior and its gradient.
//!
//! Per voxel the likelihood is `−(λ/2)·a*ᵀ F(w) a* + ((T−P)/2)·log λ`; the
//! priors contribute `−(α_k/2)·w_k SᵀS w_kᵀ + (N/2)·log α_k` per regressor,
//! the same for each AR order with β, and Gamma terms for every precision.
//! Additive constants (including `log|SᵀS|`) are dropped, so values are only
//! comparable for a fixed dataset and kernel.
//!
//! Gradient blocks, with `a*` weights `ω_pq = a*_p a*_q`:
//!
//! * `∂/∂w_n = −λ_n Σ_pq ω_pq (Cxx[p][q] w_n − Cyx[p][q]) − α ∘ (SᵀS w)_n`
//! * `∂/∂a_pn = −λ_n (F_n a*_n)_p − β_p (SᵀS a_p)_n`
//! * `∂/∂α_k = −½ w_k SᵀS w_kᵀ + (N/2 + q1 − 1)/α_k − 1/q2`
//! * `∂/∂β_p` likewise with `(r1, r2)`
//! * `∂/∂λ_n = −½ a*ᵀ F_n a* + ((T−P)/2 + u1 − 1)/λ_n − 1/u2`

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use super::stats::augmented_ar;
use super::{HyperPriors, ParamState, SuffStats};
use crate::error::{Error, Result};
use crate::lattice::SpatialKernel;
use crate::special::pairwise_sum;

pub fn log_posterior(
    state: &ParamState,
    stats: &SuffStats,
    kernel: &SpatialKernel,
    hp: &HyperPriors,
) -> f64 {
    PosteriorEvaluator::new(stats, kernel, hp).log_posterior(state)
}

pub fn grad_log_posterior(
    state: &ParamState,
    stats: &SuffStats,
    kernel: &SpatialKernel,
    hp: &HyperPriors,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; state.dim()];
    PosteriorEvaluator::new(stats, kernel, hp).log_posterior_and_grad(state.as_slice(), &mut grad)?;
    Ok(grad)
}

/// Evaluates the posterior repeatedly with reusable scratch space.
#[derive(Debug, Clone)]
pub struct PosteriorEvaluator<'a> {
    stats: &'a SuffStats,
    kernel: &'a SpatialKernel,
    hp: HyperPriors,
    terms: Vec<f64>,
    f: Vec<f64>,
    astar: Vec<f64>,
    w: Vec<f64>,
    cw: Vec<f64>,
    img: Vec<f64>,
}

impl<'a> PosteriorEvaluator<'a> {
    pub fn new(stats: &'a SuffStats, kernel: &'a SpatialKernel, hp: &HyperPriors) -> Self {
        let (k, p, n) = (stats.k(), stats.p(), stats.n());
        let m = p + 1;
        Self {
            stats,
            kernel,
            hp: *hp,
            terms: vec![0.0; n],
            f: vec![0.0; m * m],
            astar: vec![0.0; m],
            w: vec![0.0; k],
            cw: vec![0.0; m * m * k],
            img: vec![0.0; n],
        }
    }

    pub fn stats(&self) -> &SuffStats {
        self.stats
    }

    pub fn kernel(&self) -> &SpatialKernel {
        self.kernel
    }

    pub fn hyper(&self) -> &HyperPriors {
        &self.hp
    }

    fn check_dims(&self, theta: &[f64]) -> Result<()> {
        let layout = super::Layout::new(self.stats.k(), self.stats.p(), self.stats.n());
        if theta.len() != layout.dim() {
            return Err(Error::LengthMismatch {
                what: "parameter vector",
                expected: layout.dim(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    pub fn log_posterior(&mut self, state: &ParamState) -> f64 {
        self.log_density(state.as_slice())
    }

    /// Log-posterior of a flat parameter vector; `−∞` for an invalid state.
    pub fn log_density(&mut self, theta: &[f64]) -> f64 {
        if self.check_dims(theta).is_err() {
            return f64::NEG_INFINITY;
        }
        let (k, p, n) = (self.stats.k(), self.stats.p(), self.stats.n());
        let layout = super::Layout::new(k, p, n);
        if !precisions_valid(theta, layout) {
            return f64::NEG_INFINITY;
        }
        let hp = self.hp;
        let half_t = self.stats.t_eff() as f64 / 2.0;
        for v in 0..n {
            for kk in 0..k {
                self.w[kk] = theta[layout.w(kk, v)];
            }
            for pp in 0..p {
                self.astar[pp + 1] = theta[layout.a(pp, v)];
            }
            self.astar[0] = -1.0;
            self.stats.residual_form(v, &self.w, &mut self.f);
            let q = crate::dense::bilinear(&self.f, &self.astar, &self.astar);
            let lam = theta[layout.lambda(v)];
            let ln_lam = lam.ln();
            self.terms[v] =
                -0.5 * lam * q + half_t * ln_lam + (hp.u1 - 1.0) * ln_lam - lam / hp.u2;
        }
        let mut total = pairwise_sum(&self.terms);
        total += self.prior_terms(theta, layout);
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    fn prior_terms(&self, theta: &[f64], layout: super::Layout) -> f64 {
        let hp = self.hp;
        let half_n = layout.n as f64 / 2.0;
        let mut total = 0.0;
        for kk in 0..layout.k {
            let row = &theta[layout.w(kk, 0)..layout.w(kk, 0) + layout.n];
            let alpha = theta[layout.alpha(kk)];
            let la = alpha.ln();
            total += -0.5 * alpha * self.kernel.quad_form_unchecked(row)
                + half_n * la
                + (hp.q1 - 1.0) * la
                - alpha / hp.q2;
        }
        for pp in 0..layout.p {
            let row = &theta[layout.a(pp, 0)..layout.a(pp, 0) + layout.n];
            let beta = theta[layout.beta(pp)];
            let lb = beta.ln();
            total += -0.5 * beta * self.kernel.quad_form_unchecked(row)
                + half_n * lb
                + (hp.r1 - 1.0) * lb
                - beta / hp.r2;
        }
        total
    }

    /// Log-posterior and its gradient. An invalid state yields
    /// `Error::InvalidState` and leaves `grad` unspecified.
    pub fn log_posterior_and_grad(&mut self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_dims(theta)?;
        let (k, p, n) = (self.stats.k(), self.stats.p(), self.stats.n());
        let layout = super::Layout::new(k, p, n);
        if grad.len() != layout.dim() {
            return Err(Error::LengthMismatch {
                what: "gradient buffer",
                expected: layout.dim(),
                got: grad.len(),
            });
        }
        if !precisions_valid(theta, layout) {
            return Err(Error::InvalidState);
        }
        let m = p + 1;
        let hp = self.hp;
        let half_t = self.stats.t_eff() as f64 / 2.0;
        let stats = self.stats;

        for v in 0..n {
            for kk in 0..k {
                self.w[kk] = theta[layout.w(kk, v)];
            }
            for pp in 0..p {
                self.astar[pp + 1] = theta[layout.a(pp, v)];
            }
            self.astar[0] = -1.0;
            let lam = theta[layout.lambda(v)];

            // Cxx[p][q] w for every lag pair, reused by F and by ∂/∂w.
            for lp in 0..m {
                for lq in 0..m {
                    let c = stats.cxx(lp, lq);
                    let out = &mut self.cw[(lp * m + lq) * k..(lp * m + lq + 1) * k];
                    for a in 0..k {
                        let mut s = 0.0;
                        for b in 0..k {
                            s += c[a * k + b] * self.w[b];
                        }
                        out[a] = s;
                    }
                }
            }
            let cyy = stats.cyy(v);
            for lp in 0..m {
                for lq in lp..m {
                    let quad = crate::dense::dot(&self.w, &self.cw[(lp * m + lq) * k..(lp * m + lq + 1) * k]);
                    let lin = crate::dense::dot(stats.cyx(v, lp, lq), &self.w)
                        + crate::dense::dot(stats.cyx(v, lq, lp), &self.w);
                    let f = cyy[lp * m + lq] - lin + quad;
                    self.f[lp * m + lq] = f;
                    self.f[lq * m + lp] = f;
                }
            }

            // ∂/∂w_n from the likelihood.
            for kk in 0..k {
                let mut s = 0.0;
                for lp in 0..m {
                    for lq in 0..m {
                        let wgt = self.astar[lp] * self.astar[lq];
                        s += wgt
                            * (self.cw[(lp * m + lq) * k + kk] - stats.cyx(v, lp, lq)[kk]);
                    }
                }
                grad[layout.w(kk, v)] = -lam * s;
            }
            // F a*, then ∂/∂a_n and the quadratic form.
            let mut q = 0.0;
            for lp in 0..m {
                let mut fa = 0.0;
                for lq in 0..m {
                    fa += self.f[lp * m + lq] * self.astar[lq];
                }
                q += self.astar[lp] * fa;
                if lp > 0 {
                    grad[layout.a(lp - 1, v)] = -lam * fa;
                }
            }
            let ln_lam = lam.ln();
            self.terms[v] =
                -0.5 * lam * q + half_t * ln_lam + (hp.u1 - 1.0) * ln_lam - lam / hp.u2;
            grad[layout.lambda(v)] = -0.5 * q + (half_t + hp.u1 - 1.0) / lam - 1.0 / hp.u2;
        }
        let mut total = pairwise_sum(&self.terms);

        let half_n = n as f64 / 2.0;
        for kk in 0..k {
            let start = layout.w(kk, 0);
            let row = &theta[start..start + n];
            let alpha = theta[layout.alpha(kk)];
            self.kernel.precision_mul(row, &mut self.img);
            for v in 0..n {
                self.terms[v] = row[v] * self.img[v];
                grad[start + v] -= alpha * self.img[v];
            }
            let quad = pairwise_sum(&self.terms);
            let la = alpha.ln();
            total += -0.5 * alpha * quad + half_n * la + (hp.q1 - 1.0) * la - alpha / hp.q2;
            grad[layout.alpha(kk)] = -0.5 * quad + (half_n + hp.q1 - 1.0) / alpha - 1.0 / hp.q2;
        }
        for pp in 0..p {
            let start = layout.a(pp, 0);
            let row = &theta[start..start + n];
            let beta = theta[layout.beta(pp)];
            self.kernel.precision_mul(row, &mut self.img);
            for v in 0..n {
                self.terms[v] = row[v] * self.img[v];
                grad[start + v] -= beta * self.img[v];
            }
            let quad = pairwise_sum(&self.terms);
            let lb = beta.ln();
            total += -0.5 * beta * quad + half_n * lb + (hp.r1 - 1.0) * lb - beta / hp.r2;
            grad[layout.beta(pp)] = -0.5 * quad + (half_n + hp.r1 - 1.0) / beta - 1.0 / hp.r2;
        }
        if !total.is_finite() {
            return Err(Error::InvalidState);
        }
        Ok(total)
    }

    /// Per-voxel quadratic `a*ᵀ F_n a*` at the given state.
    pub fn residual_quadratic(&mut self, state: &ParamState, v: usize) -> f64 {
        state.w_voxel(v, &mut self.w);
        let p = self.stats.p();
        let mut a = vec![0.0; p];
        state.a_voxel(v, &mut a);
        augmented_ar(&a, &mut self.astar);
        self.stats.residual_form(v, &self.w, &mut self.f);
        crate::dense::bilinear(&self.f, &self.astar, &self.astar)
    }
}

fn precisions_valid(theta: &[f64], layout: super::Layout) -> bool {
    let start = layout.alpha(0);
    theta[..start].iter().all(|v| v.is_finite())
        && theta[start..].iter().all(|v| *v > 0.0 && v.is_finite())
}
