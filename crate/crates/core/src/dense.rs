//! Small dense linear algebra on row-major `n×n` slices.
//!
//! Only what the per-voxel K×K and P×P systems need: Cholesky, solves,
//! inverses and log-determinants.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn new(a: &[f64], n: usize) -> Result<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite("cholesky pivot"));
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor(&self) -> &[f64] {
        &self.l
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀ x = b` in place; with `b` standard normal, `x` has covariance `A⁻¹`.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>() * 2.0
    }

    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        // Symmetrize away rounding asymmetry.
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (inv[i * n + j] + inv[j * n + i]);
                inv[i * n + j] = m;
                inv[j * n + i] = m;
            }
        }
        inv
    }
}

/// Columns of a Gram matrix that are (numerically) linear combinations of
/// earlier columns, found by a Cholesky pass that skips tiny pivots.
pub fn dependent_columns(gram: &[f64], n: usize, rel_tol: f64) -> Vec<usize> {
    let mut l = vec![0.0; n * n];
    let mut dependent = Vec::new();
    for j in 0..n {
        let mut d = gram[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        let scale = gram[j * n + j].abs().max(f64::MIN_POSITIVE);
        if d <= rel_tol * scale {
            dependent.push(j);
            continue;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = gram[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    dependent
}

/// `xᵀ A y` for row-major `A`.
pub fn bilinear(a: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        let row = &a[i * y.len()..(i + 1) * y.len()];
        s += x[i] * dot(row, y);
    }
    s
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y = A x` for row-major `A` with `y.len()` rows.
pub fn mat_vec(a: &[f64], x: &[f64], y: &mut [f64]) {
    let m = x.len();
    for (i, yi) in y.iter_mut().enumerate() {
        *yi = dot(&a[i * m..(i + 1) * m], x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_solve_and_inverse() {
        let a = [4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let ch = Cholesky::new(&a, 3).unwrap();
        let mut b = [1.0, -2.0, 0.5];
        ch.solve_in_place(&mut b);
        let mut back = [0.0; 3];
        mat_vec(&a, &b, &mut back);
        assert_relative_eq!(back[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(back[1], -2.0, epsilon = 1e-14);
        assert_relative_eq!(back[2], 0.5, epsilon = 1e-14);
        let inv = ch.inverse();
        let mut id = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                id[i * 3 + j] = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(id[i * 3 + j], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-14);
            }
        }
        // det = 4(15-1) - 2(6-0.6) + 0.6(2-3) = 56 - 10.8 - 0.6
        assert_relative_eq!(ch.log_det(), 44.6f64.ln(), epsilon = 1e-13);
    }

    #[test]
    fn rejects_indefinite() {
        assert!(Cholesky::new(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
    }

    #[test]
    fn finds_dependent_column() {
        // columns: c0, c1, c0 + c1
        let x = [[1.0, 0.0, 1.0], [1.0, 1.0, 2.0], [1.0, 2.0, 3.0], [1.0, 5.0, 6.0]];
        let mut g = [0.0; 9];
        for r in &x {
            for i in 0..3 {
                for j in 0..3 {
                    g[i * 3 + j] += r[i] * r[j];
                }
            }
        }
        assert_eq!(dependent_columns(&g, 3, 1e-10), alloc::vec![2]);
    }
}
