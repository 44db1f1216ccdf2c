//! Per-voxel least-squares starting values.

use alloc::vec;

use super::{Dataset, ParamState};
use crate::dense::{dependent_columns, Cholesky};
use crate::error::{Error, Result};
use crate::lattice::SpatialKernel;

const PRECISION_CLAMP: (f64, f64) = (1e-6, 1e6);
const LAMBDA_CLAMP: (f64, f64) = (1e-8, 1e8);

/// OLS starting state: `W` from regressing `y_{P+1:T}` on the trimmed design,
/// `A` from regressing the residuals on their own lags, `λ` from the
/// reciprocal innovation variance, and `α_k = N / (w_k SᵀS w_kᵀ)` (likewise
/// `β`), clamped to `[1e-6, 1e6]`.
pub fn ols_init(data: &Dataset, kernel: &SpatialKernel) -> Result<ParamState> {
    let (t_len, n, k, p) = (data.t(), data.n(), data.k(), data.p());
    if kernel.n() != n {
        return Err(Error::LengthMismatch {
            what: "kernel voxels",
            expected: n,
            got: kernel.n(),
        });
    }
    let mut gram = vec![0.0; k * k];
    for t in p..t_len {
        let x = data.x_row(t);
        for a in 0..k {
            for b in 0..k {
                gram[a * k + b] += x[a] * x[b];
            }
        }
    }
    let dep = dependent_columns(&gram, k, 1e-10);
    if !dep.is_empty() {
        return Err(Error::RankDeficient { columns: dep });
    }
    let chol = Cholesky::new(&gram, k)?;

    let mut state = ParamState::zeros(k, p, n);
    let layout = state.layout();
    let mut rhs = vec![0.0; k];
    let mut resid = vec![0.0; t_len];
    let mut ar_gram = vec![0.0; p * p];
    let mut ar_rhs = vec![0.0; p];
    for v in 0..n {
        rhs.iter_mut().for_each(|r| *r = 0.0);
        for t in p..t_len {
            let y = data.y(t, v);
            for (r, x) in rhs.iter_mut().zip(data.x_row(t)) {
                *r += x * y;
            }
        }
        chol.solve_in_place(&mut rhs);
        for (kk, w) in rhs.iter().enumerate() {
            state.as_mut_slice()[layout.w(kk, v)] = *w;
        }
        for (t, r) in resid.iter_mut().enumerate() {
            *r = data.y(t, v) - crate::dense::dot(data.x_row(t), &rhs);
        }

        ar_gram.iter_mut().for_each(|g| *g = 0.0);
        ar_rhs.iter_mut().for_each(|g| *g = 0.0);
        for t in p..t_len {
            for i in 0..p {
                ar_rhs[i] += resid[t - 1 - i] * resid[t];
                for j in 0..p {
                    ar_gram[i * p + j] += resid[t - 1 - i] * resid[t - 1 - j];
                }
            }
        }
        let a = match Cholesky::new(&ar_gram, p) {
            Ok(c) => {
                c.solve_in_place(&mut ar_rhs);
                ar_rhs.clone()
            }
            Err(_) => vec![0.0; p],
        };
        let mut ss = 0.0;
        for t in p..t_len {
            let mut z = resid[t];
            for (i, ai) in a.iter().enumerate() {
                z -= ai * resid[t - 1 - i];
            }
            ss += z * z;
        }
        for (i, ai) in a.iter().enumerate() {
            state.as_mut_slice()[layout.a(i, v)] = *ai;
        }
        let var = ss / data.t_eff() as f64;
        let lam = if var > 0.0 { 1.0 / var } else { LAMBDA_CLAMP.1 };
        state.lambda_mut()[v] = lam.clamp(LAMBDA_CLAMP.0, LAMBDA_CLAMP.1);
    }

    let nf = n as f64;
    for kk in 0..k {
        let q = kernel.quad_form_unchecked(state.w(kk));
        state.alpha_mut()[kk] = moment_precision(nf, q);
    }
    for pp in 0..p {
        let q = kernel.quad_form_unchecked(state.a(pp));
        state.beta_mut()[pp] = moment_precision(nf, q);
    }
    Ok(state)
}

fn moment_precision(n: f64, quad: f64) -> f64 {
    let v = if quad > 0.0 { n / quad } else { PRECISION_CLAMP.1 };
    if v.is_finite() {
        v.clamp(PRECISION_CLAMP.0, PRECISION_CLAMP.1)
    } else {
        PRECISION_CLAMP.1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Mask;
    use alloc::vec::Vec;
    use approx::assert_relative_eq;

    fn design(t: usize) -> Vec<f64> {
        let mut x = Vec::new();
        for i in 0..t {
            x.push(1.0);
            x.push((i as f64 * 0.4).sin());
            x.push(((i * 13) % 7) as f64 / 7.0);
        }
        x
    }

    #[test]
    fn recovers_noiseless_weights() {
        let (t, n) = (40, 4);
        let x = design(t);
        let w_true = [[2.0, -1.0, 0.5], [0.0, 3.0, 1.0], [-2.0, 0.2, 0.0], [1.0, 1.0, 1.0]];
        let mut y = vec![0.0; t * n];
        for ti in 0..t {
            for v in 0..n {
                y[ti * n + v] = (0..3).map(|kk| x[ti * 3 + kk] * w_true[v][kk]).sum();
            }
        }
        let data = Dataset::new(y, x, t, n, 3, 1).unwrap();
        let kernel = SpatialKernel::build(&Mask::full(&[2, 2]).unwrap(), 2).unwrap();
        let s = ols_init(&data, &kernel).unwrap();
        for v in 0..n {
            for kk in 0..3 {
                assert_relative_eq!(s.w(kk)[v], w_true[v][kk], epsilon = 1e-8, max_relative = 1e-8);
            }
        }
        assert!(s.is_valid());
    }

    #[test]
    fn constant_series_fits_intercept() {
        let (t, n) = (30, 2);
        let data = Dataset::new(vec![5.0; t * n], design(t), t, n, 3, 2).unwrap();
        let kernel = SpatialKernel::build(&Mask::full(&[1, 2]).unwrap(), 2).unwrap();
        let s = ols_init(&data, &kernel).unwrap();
        for v in 0..n {
            assert_relative_eq!(s.w(0)[v], 5.0, epsilon = 1e-10);
            assert!(s.w(1)[v].abs() < 1e-10 && s.w(2)[v].abs() < 1e-10);
        }
        assert!(s.is_valid());
    }

    #[test]
    fn rank_deficient_design_lists_columns() {
        let t = 10;
        let mut x = Vec::new();
        for i in 0..t {
            let a = i as f64;
            x.extend_from_slice(&[1.0, a, 2.0 * a + 1.0]);
        }
        let data = Dataset::new(vec![0.5; t], x, t, 1, 3, 1).unwrap();
        let kernel = SpatialKernel::build(&Mask::full(&[1, 1]).unwrap(), 2).unwrap();
        assert_eq!(
            ols_init(&data, &kernel).unwrap_err(),
            Error::RankDeficient { columns: vec![2] }
        );
    }
}
