//! Scalar special functions and reduction helpers.

use num_traits::Float;

/// Digamma function ψ(x) for x > 0.
pub fn digamma(mut x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Asymptotic series in 1/x², Bernoulli coefficients.
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    acc + x.ln() - 0.5 * inv - series
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Upper tail P(Z > z) of the standard normal.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / core::f64::consts::SQRT_2)
}

/// Pairwise (cascade) summation; the split points depend only on the length,
/// so the rounding is reproducible.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if v.len() <= BLOCK {
        let mut s = 0.0;
        for &x in v {
            s += x;
        }
        s
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

/// Linear-interpolation quantile of already sorted data, `q` in [0, 1].
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn mean(v: &[f64]) -> f64 {
    pairwise_sum(v) / v.len() as f64
}

/// Unbiased sample variance (n − 1 denominator).
pub fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    let mut ss = 0.0;
    for &x in v {
        ss += (x - m) * (x - m);
    }
    ss / (v.len() as f64 - 1.0)
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn digamma_known_values() {
        let euler = 0.577_215_664_901_532_9;
        assert_relative_eq!(digamma(1.0), -euler, epsilon = 1e-13);
        assert_relative_eq!(digamma(0.5), -euler - 2.0 * core::f64::consts::LN_2, epsilon = 1e-13);
        // ψ(x+1) = ψ(x) + 1/x
        for &x in &[0.01, 0.3, 2.5, 17.0, 250.0] {
            assert_relative_eq!(digamma(x + 1.0), digamma(x) + 1.0 / x, max_relative = 1e-12);
        }
    }

    #[test]
    fn digamma_matches_lgamma_derivative() {
        for &x in &[0.05, 0.7, 3.3, 40.0, 1200.5] {
            let h = 1e-5 * x.max(1.0);
            let fd = (ln_gamma(x + h) - ln_gamma(x - h)) / (2.0 * h);
            assert_relative_eq!(digamma(x), fd, max_relative = 1e-7, epsilon = 1e-8);
        }
    }

    #[test]
    fn normal_tail_symmetry() {
        assert_relative_eq!(normal_sf(0.0), 0.5, epsilon = 1e-16);
        assert_relative_eq!(normal_sf(1.959_963_984_540_054), 0.025, epsilon = 1e-12);
        assert_relative_eq!(normal_sf(-1.3) + normal_sf(1.3), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn pairwise_matches_naive_on_exact_values() {
        let v: alloc::vec::Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn quantile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(sorted_quantile(&s, 0.5), 3.0);
        assert_eq!(sorted_quantile(&s, 0.9), 4.6);
        assert_eq!(sorted_quantile(&s, 1.0), 5.0);
    }
}
