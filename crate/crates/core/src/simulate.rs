//! Synthetic data drawn exactly from the model.
//!
//! A scenario fixes the precisions; [`draw_truth`] draws the coefficient
//! images once from their GMRF priors, and [`generate_replicate`] adds fresh
//! AR noise for each replicate. Truth uses stream 0 of a ChaCha generator
//! seeded by the scenario seed and replicate `j` uses stream `j + 1`, so any
//! replicate can be regenerated on its own.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::dense::Cholesky;
use crate::error::{Error, Result};
use crate::lattice::{Mask, SpatialKernel};
use crate::model::Dataset;

/// Noise precision of each voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    Fixed(f64),
    /// Gamma with mean `shape · scale`.
    Gamma { shape: f64, scale: f64 },
}

/// How the first `P` noise values of each series are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialNoise {
    /// A draw from the stationary marginal when the AR process is
    /// stationary, otherwise the burn-in rule.
    #[default]
    Stationary,
    /// Always zero start with a discarded burn-in of `10·P` steps.
    BurnIn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub name: String,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: LambdaSpec,
    pub replicates: usize,
    pub seed: u64,
    pub initial_noise: InitialNoise,
}

impl SimScenario {
    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: &f64| *v > 0.0 && v.is_finite();
        if self.alpha.is_empty() || self.beta.is_empty() {
            return Err(Error::InvalidConfig("scenario needs K ≥ 1 and P ≥ 1".into()));
        }
        if !self.alpha.iter().all(positive) || !self.beta.iter().all(positive) {
            return Err(Error::InvalidConfig("scenario precisions must be positive".into()));
        }
        let lam_ok = match self.lambda {
            LambdaSpec::Fixed(v) => positive(&v),
            LambdaSpec::Gamma { shape, scale } => positive(&shape) && positive(&scale),
        };
        if !lam_ok {
            return Err(Error::InvalidConfig("noise precision must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("at least one replicate is required".into()));
        }
        Ok(())
    }
}

/// Problem size of the presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// 20×20 full grid, 20 replicates.
    Desk,
    /// 53×63 head-shaped mask with 2087 voxels, 100 replicates.
    Full,
}

impl Scale {
    pub fn replicates(self) -> usize {
        match self {
            Scale::Desk => 20,
            Scale::Full => 100,
        }
    }

    pub fn mask(self) -> Mask {
        match self {
            Scale::Desk => Mask::full(&[20, 20]).expect("non-empty grid"),
            Scale::Full => brain_mask(),
        }
    }
}

/// Number of voxels in [`brain_mask`].
pub const BRAIN_VOXELS: usize = 2087;

/// A 53×63 axial-slice mask: the 2087 cells with the smallest score under a
/// slightly egg-shaped ellipse (wider at the back), ties broken by cell index.
pub fn brain_mask() -> Mask {
    let (nx, ny) = (53usize, 63usize);
    let (cx, cy) = (26.0, 31.0);
    let mut scored: Vec<(f64, usize)> = (0..nx * ny)
        .map(|cell| {
            let x = (cell / ny) as f64 - cx;
            let y = (cell % ny) as f64 - cy;
            let half_width = 23.5 * (1.0 - 0.08 * y / 31.0);
            let s = (x / half_width).powi(2) + (y / 29.5).powi(2);
            (s, cell)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut inside = vec![false; nx * ny];
    for &(_, cell) in scored.iter().take(BRAIN_VOXELS) {
        inside[cell] = true;
    }
    Mask::new(vec![nx, ny], inside).expect("non-empty mask")
}

/// The three simulation studies with the given replicate count and seed.
///
/// * `study1`: `K = 5`, `P = 1`, `α = 1`, `β = 1000`, `λ ~ G(10, 10)`;
/// * `study2`: `K = 13`, `P = 3`, `α` in groups of three at 0.1, 0.5, 1, 2
///   plus 1 for the constant, `β = (1000, 2000, 5000)`, `λ ~ G(10, 10)`;
/// * `study3`: `K = 5`, `P = 1`, `α = (100, 100, 100, 100, 0.01)`,
///   `β = 400`, `λ = 0.1`.
pub fn preset_scenarios(replicates: usize, seed: u64) -> [SimScenario; 3] {
    let lam_gamma = LambdaSpec::Gamma {
        shape: 10.0,
        scale: 10.0,
    };
    let mk = |name: &str, alpha: Vec<f64>, beta: Vec<f64>, lambda| SimScenario {
        name: name.into(),
        alpha,
        beta,
        lambda,
        replicates,
        seed,
        initial_noise: InitialNoise::Stationary,
    };
    let mut a2 = Vec::new();
    for v in [0.1, 0.5, 1.0, 2.0] {
        a2.extend([v; 3]);
    }
    a2.push(1.0);
    [
        mk("study1", vec![1.0; 5], vec![1000.0], lam_gamma),
        mk("study2", a2, vec![1000.0, 2000.0, 5000.0], lam_gamma),
        mk(
            "study3",
            vec![100.0, 100.0, 100.0, 100.0, 0.01],
            vec![400.0],
            LambdaSpec::Fixed(0.1),
        ),
    ]
}

/// Looks up a preset by name (`study1`, `study2`, `study3`).
pub fn preset(name: &str, replicates: usize, seed: u64) -> Option<SimScenario> {
    preset_scenarios(replicates, seed).into_iter().find(|s| s.name == name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `K×N`, row `k` contiguous.
    pub w: Vec<f64>,
    /// `P×N`.
    pub a: Vec<f64>,
    pub lambda: Vec<f64>,
    pub k: usize,
    pub p: usize,
    pub n: usize,
    /// Seed from which replicate noise streams are derived.
    pub noise_seed: u64,
    pub initial_noise: InitialNoise,
}

impl GroundTruth {
    pub fn w_row(&self, k: usize) -> &[f64] {
        &self.w[k * self.n..(k + 1) * self.n]
    }

    pub fn a_row(&self, p: usize) -> &[f64] {
        &self.a[p * self.n..(p + 1) * self.n]
    }

    /// Stacked parameter vector `(W, A, α, β, λ)` with the scenario's
    /// precisions, for comparing against posterior summaries.
    pub fn theta(&self, alpha: &[f64], beta: &[f64]) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.w.len() + self.a.len() + alpha.len() + beta.len() + self.n);
        t.extend_from_slice(&self.w);
        t.extend_from_slice(&self.a);
        t.extend_from_slice(alpha);
        t.extend_from_slice(beta);
        t.extend_from_slice(&self.lambda);
        t
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Draws `W`, `A` and `λ`: `w_k = S⁻¹ z / √α_k` with white `z`, so that
/// `Cov(w_k) = (SᵀS)⁻¹ / α_k`, and likewise `a_p` with `β_p`.
pub fn draw_truth(scenario: &SimScenario, kernel: &SpatialKernel) -> Result<GroundTruth> {
    scenario.validate()?;
    let n = kernel.n();
    let chol = kernel.factor_s()?;
    let mut rng = stream(scenario.seed, 0);
    let draw_image = |precision: f64, rng: &mut ChaCha8Rng| {
        let mut z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        chol.solve_in_place(&mut z);
        let s = precision.sqrt();
        z.iter_mut().for_each(|v| *v /= s);
        z
    };
    let mut w = Vec::with_capacity(scenario.k() * n);
    for &a in &scenario.alpha {
        w.extend(draw_image(a, &mut rng));
    }
    let mut a = Vec::with_capacity(scenario.p() * n);
    for &b in &scenario.beta {
        a.extend(draw_image(b, &mut rng));
    }
    let lambda = match scenario.lambda {
        LambdaSpec::Fixed(v) => vec![v; n],
        LambdaSpec::Gamma { shape, scale } => {
            let g = Gamma::new(shape, scale).map_err(|_| Error::InvalidConfig("bad Gamma parameters".into()))?;
            (0..n).map(|_| g.sample(&mut rng)).collect()
        }
    };
    Ok(GroundTruth {
        w,
        a,
        lambda,
        k: scenario.k(),
        p: scenario.p(),
        n,
        noise_seed: scenario.seed,
        initial_noise: scenario.initial_noise,
    })
}

/// Whether `e_t = Σ a_p e_{t−p} + z_t` is stationary, by the step-down
/// recursion to reflection coefficients (all must lie in `(−1, 1)`).
pub fn is_stationary(a: &[f64]) -> bool {
    let mut cur = a.to_vec();
    for m in (1..=cur.len()).rev() {
        let kappa = cur[m - 1];
        if !(kappa.abs() < 1.0) {
            return false;
        }
        let d = 1.0 - kappa * kappa;
        let prev: Vec<f64> = (0..m - 1).map(|j| (cur[j] + kappa * cur[m - 2 - j]) / d).collect();
        cur = prev;
    }
    true
}

/// Autocovariances `γ_0..γ_P` of a stationary AR(P) process with innovation
/// variance `sigma2`, from the Yule–Walker equations.
pub fn ar_autocovariance(a: &[f64], sigma2: f64) -> Result<Vec<f64>> {
    let p = a.len();
    let m = p + 1;
    // Unknowns γ_0..γ_P; row k: γ_k − Σ_j a_j γ_|k−j| = σ² δ_k0.
    let mut mat = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    rhs[0] = sigma2;
    for k in 0..m {
        mat[k * m + k] += 1.0;
        for j in 1..=p {
            let lag = k.abs_diff(j);
            mat[k * m + lag] -= a[j - 1];
        }
    }
    solve_dense(&mut mat, &mut rhs, m).ok_or(Error::NotPositiveDefinite("Yule-Walker system"))?;
    Ok(rhs)
}

/// Gaussian elimination with partial pivoting; the solution replaces `b`.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Option<()> {
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        for j in 0..n {
            a.swap(col * n + j, piv * n + j);
        }
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r * n + col] / a[col * n + col];
            for j in col..n {
                a[r * n + j] -= f * a[col * n + j];
            }
            b[r] -= f * b[col];
        }
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[i * n + j] * b[j];
        }
        b[i] = s / a[i * n + i];
    }
    Some(())
}

/// AR noise of length `t_len` for one voxel.
fn ar_noise(a: &[f64], lambda: f64, t_len: usize, init: InitialNoise, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let p = a.len();
    let sd = 1.0 / lambda.sqrt();
    let stationary_start = if init == InitialNoise::Stationary && is_stationary(a) {
        ar_autocovariance(a, sd * sd).ok().and_then(|gamma| {
            let mut cov = vec![0.0; p * p];
            for i in 0..p {
                for j in 0..p {
                    cov[i * p + j] = gamma[i.abs_diff(j)];
                }
            }
            Cholesky::new(&cov, p).ok()
        })
    } else {
        None
    };
    let (burn, mut e) = match stationary_start {
        Some(chol) => {
            let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            let l = chol.factor();
            let start: Vec<f64> = (0..p).map(|i| (0..=i).map(|j| l[i * p + j] * z[j]).sum()).collect();
            let mut e = Vec::with_capacity(t_len);
            e.extend(start);
            (0, e)
        }
        None => (10 * p, vec![0.0; p]),
    };
    let total = burn + t_len;
    while e.len() < total {
        let t = e.len();
        let mut v: f64 = sd * rng.sample::<f64, _>(StandardNormal);
        for (j, aj) in a.iter().enumerate() {
            v += aj * e[t - 1 - j];
        }
        e.push(v);
    }
    e.drain(..burn);
    e.truncate(t_len);
    e
}

/// Replicate `rep`: `y_t = x_t w_n + e_t` for every `t`, with `e` the AR
/// noise of each voxel. `x_full` is `T×K` row-major.
pub fn generate_replicate(truth: &GroundTruth, x_full: &[f64], t_len: usize, rep: u64) -> Result<Dataset> {
    let (k, p, n) = (truth.k, truth.p, truth.n);
    if x_full.len() != t_len * k {
        return Err(Error::LengthMismatch {
            what: "design matrix",
            expected: t_len * k,
            got: x_full.len(),
        });
    }
    let mut rng = stream(truth.noise_seed, rep + 1);
    let mut y = vec![0.0; t_len * n];
    let mut a = vec![0.0; p];
    let mut explosive = 0usize;
    for v in 0..n {
        for (j, aj) in a.iter_mut().enumerate() {
            *aj = truth.a[j * n + v];
        }
        if !is_stationary(&a) {
            explosive += 1;
        }
        let e = ar_noise(&a, truth.lambda[v], t_len, truth.initial_noise, &mut rng);
        for t in 0..t_len {
            let x = &x_full[t * k..(t + 1) * k];
            let fit: f64 = (0..k).map(|kk| x[kk] * truth.w[kk * n + v]).sum();
            y[t * n + v] = fit + e[t];
        }
    }
    if explosive > 0 {
        log::warn!("{explosive} voxels have non-stationary AR coefficients");
    }
    Dataset::new(y, x_full.to_vec(), t_len, n, k, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{dense_sts, gauss_jordan_inverse};

    fn scenario(alpha: Vec<f64>, beta: Vec<f64>, lambda: LambdaSpec, seed: u64) -> SimScenario {
        SimScenario {
            name: "t".into(),
            alpha,
            beta,
            lambda,
            replicates: 1,
            seed,
            initial_noise: InitialNoise::Stationary,
        }
    }

    #[test]
    fn presets_match_the_studies() {
        let [s1, s2, s3] = preset_scenarios(20, 0);
        assert_eq!(s1.alpha, vec![1.0; 5]);
        assert_eq!(s1.beta, vec![1000.0]);
        assert_eq!(s2.k(), 13);
        assert_eq!(s2.beta[2], 5000.0);
        assert_eq!(&s2.alpha[..4], &[0.1, 0.1, 0.1, 0.5]);
        assert_eq!(s3.alpha[4], 0.01);
        assert_eq!(s3.lambda, LambdaSpec::Fixed(0.1));
        assert_eq!(s3.beta, vec![400.0]);
        assert!(preset("study2", 5, 1).is_some() && preset("study4", 5, 1).is_none());
    }

    #[test]
    fn brain_mask_size() {
        let m = brain_mask();
        assert_eq!(m.dims(), &[53, 63]);
        assert_eq!(m.n_voxels(), 2087);
        assert_eq!(Scale::Desk.mask().n_voxels(), 400);
    }

    #[test]
    fn huge_precision_gives_tiny_images() {
        let kernel = SpatialKernel::build(&Mask::full(&[5, 5]).unwrap(), 2).unwrap();
        let s = scenario(vec![1e12, 1.0], vec![1e12], LambdaSpec::Fixed(1.0), 3);
        let truth = draw_truth(&s, &kernel).unwrap();
        assert!(truth.w_row(0).iter().all(|v| v.abs() < 1e-4));
        assert!(truth.a_row(0).iter().all(|v| v.abs() < 1e-4));
    }

    #[test]
    fn truth_is_deterministic() {
        let kernel = SpatialKernel::build(&Mask::full(&[4, 4]).unwrap(), 2).unwrap();
        let s = preset("study1", 2, 17).unwrap();
        assert_eq!(draw_truth(&s, &kernel).unwrap(), draw_truth(&s, &kernel).unwrap());
    }

    #[test]
    fn prior_covariance_matches_dense_inverse() {
        let mask = Mask::full(&[5, 5]).unwrap();
        let kernel = SpatialKernel::build(&mask, 2).unwrap();
        let n = 25;
        let cov = gauss_jordan_inverse(&dense_sts(&mask), n).unwrap();
        let draws = 4000;
        let mut acc = vec![0.0; n * n];
        for seed in 0..draws {
            let s = scenario(vec![1.0], vec![1.0], LambdaSpec::Fixed(1.0), seed);
            let w = draw_truth(&s, &kernel).unwrap().w;
            for i in 0..n {
                for j in 0..n {
                    acc[i * n + j] += w[i] * w[j];
                }
            }
        }
        // Diagonal entries within 15%; off-diagonals within 15% of the
        // diagonal scale, since some true covariances are close to zero.
        for i in 0..n {
            let d = cov[i * n + i];
            for j in 0..n {
                let emp = acc[i * n + j] / draws as f64;
                assert!((emp - cov[i * n + j]).abs() < 0.15 * d, "({i},{j}) {emp} vs {}", cov[i * n + j]);
            }
        }
    }

    #[test]
    fn prior_quadratic_has_mean_n() {
        let kernel = SpatialKernel::build(&Mask::full(&[6, 5]).unwrap(), 2).unwrap();
        let mut total = 0.0;
        for seed in 0..500 {
            let s = scenario(vec![4.0], vec![1.0], LambdaSpec::Fixed(1.0), 1000 + seed);
            let t = draw_truth(&s, &kernel).unwrap();
            total += 4.0 * kernel.quad_form(t.w_row(0)).unwrap();
        }
        let mean = total / 500.0;
        assert!((mean / 30.0 - 1.0).abs() < 0.1, "{mean}");
    }

    fn truth_1voxel(a: f64, lambda: f64) -> GroundTruth {
        GroundTruth {
            w: vec![2.0, -1.0],
            a: vec![a],
            lambda: vec![lambda],
            k: 2,
            p: 1,
            n: 1,
            noise_seed: 5,
            initial_noise: InitialNoise::Stationary,
        }
    }

    fn design(t: usize) -> Vec<f64> {
        (0..t).flat_map(|i| [1.0, (i as f64 * 0.3).sin()]).collect()
    }

    #[test]
    fn noiseless_replicate_is_the_fit() {
        let t = 30;
        let x = design(t);
        let d = generate_replicate(&truth_1voxel(0.0, 1e30), &x, t, 0).unwrap();
        for ti in 1..t {
            let fit = 2.0 * x[ti * 2] - x[ti * 2 + 1];
            assert!((d.y(ti, 0) - fit).abs() < 1e-12);
        }
    }

    #[test]
    fn white_noise_variance() {
        let t = 2000;
        let x = design(t);
        let d = generate_replicate(&truth_1voxel(0.0, 4.0), &x, t, 1).unwrap();
        let resid: Vec<f64> = (0..t).map(|ti| d.y(ti, 0) - 2.0 * x[ti * 2] + x[ti * 2 + 1]).collect();
        let var = crate::special::sample_variance(&resid);
        assert!((var / 0.25 - 1.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn ar1_lag_one_autocorrelation() {
        let t = 20_000;
        let x = design(t);
        let d = generate_replicate(&truth_1voxel(0.5, 1.0), &x, t, 2).unwrap();
        let e: Vec<f64> = (0..t).map(|ti| d.y(ti, 0) - 2.0 * x[ti * 2] + x[ti * 2 + 1]).collect();
        let r = crate::special::pearson(&e[1..], &e[..t - 1]).unwrap();
        assert!((r - 0.5).abs() < 0.05, "{r}");
    }

    #[test]
    fn replicates_are_distinct_but_reproducible() {
        let t = 40;
        let x = design(t);
        let truth = truth_1voxel(0.3, 1.0);
        let a = generate_replicate(&truth, &x, t, 0).unwrap();
        let b = generate_replicate(&truth, &x, t, 1).unwrap();
        assert_ne!(a.series(), b.series());
        assert_eq!(a.series(), generate_replicate(&truth, &x, t, 0).unwrap().series());
    }

    #[test]
    fn stationarity_check() {
        assert!(is_stationary(&[0.5]));
        assert!(!is_stationary(&[1.2]));
        assert!(is_stationary(&[0.5, 0.3]));
        assert!(!is_stationary(&[0.5, 0.6]));
        assert!(!is_stationary(&[0.1, -1.0]));
    }

    #[test]
    fn ar1_autocovariance_closed_form() {
        let g = ar_autocovariance(&[0.5], 1.0).unwrap();
        assert!((g[0] - 1.0 / 0.75).abs() < 1e-12);
        assert!((g[1] - 0.5 / 0.75).abs() < 1e-12);
    }

    #[test]
    fn explosive_ar_still_generates() {
        let t = 30;
        let x = design(t);
        let mut truth = truth_1voxel(1.5, 1.0);
        truth.initial_noise = InitialNoise::Stationary;
        let d = generate_replicate(&truth, &x, t, 0);
        assert!(d.is_ok());
    }
}
