//! Lag cross-product statistics.
//!
//! With `e_t = y_t − x_t·w` the residual of one voxel, the AR likelihood
//! depends on the data only through
//! `F[p][q] = Σ_{t=P+1..T} e_{t−p} e_{t−q}`, which is bilinear in `(1, w)`:
//!
//! ```text
//! F[p][q] = Cyy[p][q] − Cyx[p][q]·w − Cyx[q][p]·w + wᵀ Cxx[p][q] w
//! ```
//!
//! with the three tensors accumulated once over `t`. Evaluating the
//! likelihood afterwards costs `O(N K² P²)` regardless of `T`.

use alloc::vec;
use alloc::vec::Vec;

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    n: usize,
    k: usize,
    p: usize,
    t_eff: usize,
    /// `[n][p][q]`
    cyy: Vec<f64>,
    /// `[n][p][q][k]`
    cyx: Vec<f64>,
    /// `[p][q][k][k']`
    cxx: Vec<f64>,
}

pub fn precompute_suffstats(data: &Dataset) -> Result<SuffStats> {
    SuffStats::new(data)
}

impl SuffStats {
    pub fn new(data: &Dataset) -> Result<Self> {
        let (t_len, n, k, p) = (data.t(), data.n(), data.k(), data.p());
        for t in 0..t_len {
            for v in 0..n {
                if !data.y(t, v).is_finite() {
                    return Err(Error::NonFiniteData { voxel: v, time: t });
                }
            }
        }
        let m = p + 1;
        let mut cyy = vec![0.0; n * m * m];
        let mut cyx = vec![0.0; n * m * m * k];
        let mut cxx = vec![0.0; m * m * k * k];
        for t in p..t_len {
            for lp in 0..m {
                let xp = data.x_row(t - lp);
                for lq in 0..m {
                    let xq = data.x_row(t - lq);
                    let block = &mut cxx[(lp * m + lq) * k * k..(lp * m + lq + 1) * k * k];
                    for a in 0..k {
                        for b in 0..k {
                            block[a * k + b] += xp[a] * xq[b];
                        }
                    }
                }
            }
            for v in 0..n {
                for lp in 0..m {
                    let yp = data.y(t - lp, v);
                    for lq in 0..m {
                        cyy[(v * m + lp) * m + lq] += yp * data.y(t - lq, v);
                        let xq = data.x_row(t - lq);
                        let base = ((v * m + lp) * m + lq) * k;
                        for (c, &x) in cyx[base..base + k].iter_mut().zip(xq) {
                            *c += yp * x;
                        }
                    }
                }
            }
        }
        Ok(Self {
            n,
            k,
            p,
            t_eff: data.t_eff(),
            cyy,
            cyx,
            cxx,
        })
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
    /// `T − P`.
    pub fn t_eff(&self) -> usize {
        self.t_eff
    }

    /// `Cyy[p][q]` of voxel `n`, `(P+1)×(P+1)` row-major.
    pub fn cyy(&self, n: usize) -> &[f64] {
        let m = self.p + 1;
        &self.cyy[n * m * m..(n + 1) * m * m]
    }

    /// `Cyx[p][q][·]` of voxel `n`.
    pub fn cyx(&self, n: usize, lp: usize, lq: usize) -> &[f64] {
        let m = self.p + 1;
        let base = ((n * m + lp) * m + lq) * self.k;
        &self.cyx[base..base + self.k]
    }

    /// `Cxx[p][q]`, `K×K` row-major.
    pub fn cxx(&self, lp: usize, lq: usize) -> &[f64] {
        let m = self.p + 1;
        let kk = self.k * self.k;
        &self.cxx[(lp * m + lq) * kk..(lp * m + lq + 1) * kk]
    }

    /// Residual lag matrix `F_n(w)`, written into `out` (`(P+1)²`).
    pub fn residual_form(&self, n: usize, w: &[f64], out: &mut [f64]) {
        let m = self.p + 1;
        let cyy = self.cyy(n);
        for lp in 0..m {
            for lq in lp..m {
                let c = self.cxx(lp, lq);
                let mut quad = 0.0;
                for a in 0..self.k {
                    let mut s = 0.0;
                    for b in 0..self.k {
                        s += c[a * self.k + b] * w[b];
                    }
                    quad += w[a] * s;
                }
                let lin = crate::dense::dot(self.cyx(n, lp, lq), w)
                    + crate::dense::dot(self.cyx(n, lq, lp), w);
                let f = cyy[lp * m + lq] - lin + quad;
                out[lp * m + lq] = f;
                out[lq * m + lp] = f;
            }
        }
    }
}

/// `a* = (−1, a_1, …, a_P)`.
pub(crate) fn augmented_ar(a: &[f64], out: &mut [f64]) {
    out[0] = -1.0;
    out[1..].copy_from_slice(a);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_hand_example() {
        let d = Dataset::new(vec![1.0, 2.0, 3.0], vec![1.0; 3], 3, 1, 1, 1).unwrap();
        let s = SuffStats::new(&d).unwrap();
        // t ∈ {2, 3}: y_t y_t = 4 + 9, y_t y_{t-1} = 2 + 6, y_{t-1}² = 1 + 4
        assert_eq!(s.cyy(0), &[13.0, 8.0, 8.0, 5.0]);
        assert_eq!(s.cyx(0, 0, 0), &[5.0]);
        assert_eq!(s.cyx(0, 1, 0), &[3.0]);
        assert_eq!(s.cxx(0, 1), &[2.0]);
        assert_eq!(s.t_eff(), 2);
    }

    #[test]
    fn zero_series_leaves_design_products() {
        let x: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let zero = Dataset::new(vec![0.0; 12], x.clone(), 6, 2, 2, 2).unwrap();
        let other = Dataset::new((0..12).map(|i| i as f64).collect(), x, 6, 2, 2, 2).unwrap();
        let a = SuffStats::new(&zero).unwrap();
        let b = SuffStats::new(&other).unwrap();
        assert!(a.cyy.iter().all(|v| *v == 0.0));
        assert!(a.cyx.iter().all(|v| *v == 0.0));
        assert_eq!(a.cxx, b.cxx);
    }

    #[test]
    fn reports_non_finite_location() {
        let mut y = vec![0.0; 8];
        y[2 * 2 + 1] = f64::NAN;
        let d = Dataset::new(y, vec![1.0; 4], 4, 2, 1, 1).unwrap();
        assert_eq!(
            SuffStats::new(&d).unwrap_err(),
            Error::NonFiniteData { voxel: 1, time: 2 }
        );
    }

    #[test]
    fn symmetry_of_tensors() {
        let t = 20;
        let y: Vec<f64> = (0..t * 3).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let x: Vec<f64> = (0..t * 2).map(|i| ((i * 104_729) % 37) as f64 / 18.0).collect();
        let d = Dataset::new(y, x, t, 3, 2, 2).unwrap();
        let s = SuffStats::new(&d).unwrap();
        for n in 0..3 {
            let c = s.cyy(n);
            for a in 0..3 {
                for b in 0..3 {
                    assert_eq!(c[a * 3 + b], c[b * 3 + a]);
                }
            }
        }
        for lp in 0..3 {
            for lq in 0..3 {
                for a in 0..2 {
                    for b in 0..2 {
                        assert_eq!(s.cxx(lp, lq)[a * 2 + b], s.cxx(lq, lp)[b * 2 + a]);
                    }
                }
            }
        }
    }
}
