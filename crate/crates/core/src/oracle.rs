//! Slow, independent reference computations.
//!
//! Nothing here shares code paths with the fast implementations it checks:
//! kernels are rebuilt densely from voxel coordinates, the likelihood is
//! summed over time directly from residuals, and linear algebra uses
//! Gauss–Jordan elimination instead of Cholesky.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::lattice::Mask;
use crate::model::{Dataset, HyperPriors, ParamState};

/// Dense `S` from pairwise coordinate comparison.
pub fn dense_s(mask: &Mask) -> Vec<f64> {
    let n = mask.n_voxels();
    let deg = if mask.dims().len() == 2 { 4.0 } else { 6.0 };
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        let ci = mask.centroid(i);
        for j in 0..n {
            if i == j {
                s[i * n + j] = deg;
                continue;
            }
            let cj = mask.centroid(j);
            let manhattan: f64 = (0..3).map(|a| (ci[a] - cj[a]).abs()).sum();
            if manhattan == 1.0 {
                s[i * n + j] = -1.0;
            }
        }
    }
    s
}

/// Dense `SᵀS` by the textbook triple loop.
pub fn dense_sts(mask: &Mask) -> Vec<f64> {
    let s = dense_s(mask);
    let n = mask.n_voxels();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += s[k * n + i] * s[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

pub fn dense_quad(m: &[f64], v: &[f64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += v[i] * m[i * n + j] * v[j];
        }
    }
    acc
}

/// Log-likelihood summed directly over voxels and time points:
/// `Σ_n −(λ_n/2) Σ_t (e_t − Σ_p a_p e_{t−p})² + ((T−P)/2) log λ_n`,
/// with `e_t = y_t − x_t·w_n` using the full design for the lags.
pub fn direct_log_likelihood(state: &ParamState, data: &Dataset) -> f64 {
    let (t_len, n, k, p) = (data.t(), data.n(), data.k(), data.p());
    let mut total = 0.0;
    for v in 0..n {
        let e: Vec<f64> = (0..t_len)
            .map(|t| {
                let mut fit = 0.0;
                for kk in 0..k {
                    fit += data.x_row(t)[kk] * state.w(kk)[v];
                }
                data.y(t, v) - fit
            })
            .collect();
        let mut ss = 0.0;
        for t in p..t_len {
            let mut z = e[t];
            for pp in 0..p {
                z -= state.a(pp)[v] * e[t - 1 - pp];
            }
            ss += z * z;
        }
        let lam = state.lambda()[v];
        total += -0.5 * lam * ss + (t_len - p) as f64 / 2.0 * lam.ln();
    }
    total
}

/// Direct evaluation of the full unnormalized log-posterior with dense priors.
pub fn direct_log_posterior(state: &ParamState, data: &Dataset, sts: &[f64], hp: &HyperPriors) -> f64 {
    let (n, k, p) = (data.n(), data.k(), data.p());
    let mut total = direct_log_likelihood(state, data);
    let nf = n as f64;
    for kk in 0..k {
        let a = state.alpha()[kk];
        total += -0.5 * a * dense_quad(sts, state.w(kk)) + nf / 2.0 * a.ln() + (hp.q1 - 1.0) * a.ln()
            - a / hp.q2;
    }
    for pp in 0..p {
        let b = state.beta()[pp];
        total += -0.5 * b * dense_quad(sts, state.a(pp)) + nf / 2.0 * b.ln() + (hp.r1 - 1.0) * b.ln()
            - b / hp.r2;
    }
    for &l in state.lambda() {
        total += (hp.u1 - 1.0) * l.ln() - l / hp.u2;
    }
    total
}

/// `F_n[p][q] = Σ_{t=P+1..T} e_{t−p} e_{t−q}` summed directly.
pub fn direct_residual_form(data: &Dataset, v: usize, w: &[f64]) -> Vec<f64> {
    let (t_len, k, p) = (data.t(), data.k(), data.p());
    let e: Vec<f64> = (0..t_len)
        .map(|t| data.y(t, v) - (0..k).map(|kk| data.x_row(t)[kk] * w[kk]).sum::<f64>())
        .collect();
    let m = p + 1;
    let mut f = vec![0.0; m * m];
    for t in p..t_len {
        for a in 0..m {
            for b in 0..m {
                f[a * m + b] += e[t - a] * e[t - b];
            }
        }
    }
    f
}

/// Gauss–Jordan inverse with partial pivoting; `None` if singular.
pub fn gauss_jordan_inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x * n + col].abs().total_cmp(&m[y * n + col].abs()))?;
        if m[piv * n + col].abs() < 1e-300 {
            return None;
        }
        for j in 0..n {
            m.swap(col * n + j, piv * n + j);
            inv.swap(col * n + j, piv * n + j);
        }
        let d = m[col * n + col];
        for j in 0..n {
            m[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        m[r * n + j] -= f * m[col * n + j];
                        inv[r * n + j] -= f * inv[col * n + j];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Exact Gaussian posterior of `W` when `A = 0` and `λ`, `α` are fixed.
/// Returns `(mean, covariance)` over the `K·N` vector ordered like the `W`
/// block of the parameter vector (row `k` contiguous).
pub fn gmrf_posterior(data: &Dataset, sts: &[f64], lambda: &[f64], alpha: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (t_len, n, k, p) = (data.t(), data.n(), data.k(), data.p());
    let dim = k * n;
    let mut prec = vec![0.0; dim * dim];
    let mut lin = vec![0.0; dim];
    for v in 0..n {
        for t in p..t_len {
            let x = data.x_row(t);
            for a in 0..k {
                lin[a * n + v] += lambda[v] * x[a] * data.y(t, v);
                for b in 0..k {
                    prec[(a * n + v) * dim + b * n + v] += lambda[v] * x[a] * x[b];
                }
            }
        }
    }
    for kk in 0..k {
        for i in 0..n {
            for j in 0..n {
                prec[(kk * n + i) * dim + kk * n + j] += alpha[kk] * sts[i * n + j];
            }
        }
    }
    let cov = gauss_jordan_inverse(&prec, dim).expect("posterior precision must be invertible");
    let mut mean = vec![0.0; dim];
    for i in 0..dim {
        mean[i] = (0..dim).map(|j| cov[i * dim + j] * lin[j]).sum();
    }
    (mean, cov)
}

/// Moran's I by an explicit double loop over voxel pairs.
pub fn moran_brute(values: &[f64], mask: &Mask) -> f64 {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let (mut wsum, mut cross, mut sq) = (0.0, 0.0, 0.0);
    for i in 0..n {
        sq += (values[i] - mean) * (values[i] - mean);
        let ci = mask.centroid(i);
        for j in 0..n {
            if i == j {
                continue;
            }
            let cj = mask.centroid(j);
            let d = ((ci[0] - cj[0]).powi(2) + (ci[1] - cj[1]).powi(2) + (ci[2] - cj[2]).powi(2)).sqrt();
            let w = 1.0 / d;
            wsum += w;
            cross += w * (values[i] - mean) * (values[j] - mean);
        }
    }
    n as f64 / wsum * cross / sq
}

/// Scalar leapfrog for a 1-D standard Gaussian (`U = θ²/2`, unit mass),
/// written out step by step.
pub fn scalar_gaussian_leapfrog(theta: f64, xi: f64, delta: f64, steps: usize) -> (f64, f64) {
    let mut q = theta;
    let mut r = xi - 0.5 * delta * q;
    for l in 1..=steps {
        q += delta * r;
        let h = if l < steps { delta } else { 0.5 * delta };
        r -= h * q;
    }
    (q, r)
}

/// Central finite-difference gradient of any scalar function.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(x: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let up = f(&xp);
        xp[i] = orig - h;
        let down = f(&xp);
        xp[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    g
}
