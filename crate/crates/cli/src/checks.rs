//! Oracle and invariant checks run by `glmar check`.

use std::time::Instant;

use glmar_core::dense::Cholesky;
use glmar_core::hmc::{run_hmc, HmcConfig, Parameterization};
use glmar_core::lattice::{Mask, SpatialKernel};
use glmar_core::metrics::{
    morans_i, ppm_from_samples, ppm_gaussian, summary_stats, Contrast, EffectThreshold, Image, MoranWeights,
    ReplicateSet,
};
use glmar_core::model::{ols_init, Block, Dataset, HyperPriors, Layout, ParamState, PosteriorEvaluator, SuffStats};
use glmar_core::oracle::{
    central_difference, dense_sts, direct_log_likelihood, direct_log_posterior, gmrf_posterior, moran_brute,
};
use glmar_core::simulate::{GroundTruth, InitialNoise};
use glmar_core::summary::PosteriorSummary;
use glmar_core::vb::{free_energy, run_vb, run_vb_from, sweep, VBConfig, VbModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: f64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{} {:<28} {:>8.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.elapsed,
            self.detail
        )
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f();
    CheckResult {
        name,
        passed,
        detail,
        elapsed: start.elapsed().as_secs_f64(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

/// A 2-D or 3-D mask with at most `max_n` voxels and random holes.
fn random_mask(r: &mut ChaCha8Rng, max_n: usize) -> Mask {
    loop {
        let dims: Vec<usize> = if r.random_bool(0.7) {
            vec![r.random_range(1..=7), r.random_range(2..=8)]
        } else {
            vec![r.random_range(1..=3), r.random_range(1..=4), r.random_range(2..=4)]
        };
        let cells: usize = dims.iter().product();
        let keep = r.random_range(0.6..1.0);
        let inside: Vec<bool> = (0..cells).map(|_| r.random_bool(keep)).collect();
        let n = inside.iter().filter(|b| **b).count();
        if (1..=max_n).contains(&n) {
            return Mask::new(dims, inside).expect("non-empty mask");
        }
    }
}

/// Design with a trailing constant column.
fn random_design(r: &mut ChaCha8Rng, t: usize, k: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(t * k);
    for tt in 0..t {
        for kk in 0..k {
            x.push(if kk + 1 == k {
                1.0
            } else {
                ((tt * (kk + 1)) as f64 * 0.3).sin() + 0.5 * normal(r)
            });
        }
    }
    x
}

struct Instance {
    mask: Mask,
    kernel: SpatialKernel,
    data: Dataset,
    state: ParamState,
}

/// T ≤ 64, N ≤ 50, K ≤ 5, P ≤ 3 with white-noise data and a random valid
/// state.
fn random_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let mask = random_mask(&mut r, 50);
    let kernel = SpatialKernel::build(&mask, mask.dims().len()).expect("kernel");
    let n = mask.n_voxels();
    let k = r.random_range(1..=5);
    let p = r.random_range(1..=3);
    let t = r.random_range(p + k + 4..=64);
    let x = random_design(&mut r, t, k);
    let y: Vec<f64> = (0..t * n).map(|_| 2.0 * normal(&mut r)).collect();
    let data = Dataset::new(y, x, t, n, k, p).expect("dataset");
    let mut state = ParamState::zeros(k, p, n);
    for kk in 0..k {
        state.w_mut(kk).iter_mut().for_each(|v| *v = normal(&mut r));
    }
    for pp in 0..p {
        state.a_mut(pp).iter_mut().for_each(|v| *v = 0.3 * normal(&mut r));
    }
    let start = state.layout().alpha(0);
    for v in &mut state.as_mut_slice()[start..] {
        *v = (0.7 * normal(&mut r)).exp();
    }
    Instance {
        mask,
        kernel,
        data,
        state,
    }
}

/// Signal plus stationary AR(P) noise on a random mask of up to 30 voxels.
fn ar_instance(seed: u64, k: usize, p: usize) -> (SpatialKernel, Dataset) {
    let mut r = rng(seed);
    let mask = random_mask(&mut r, 30);
    let kernel = SpatialKernel::build(&mask, mask.dims().len()).expect("kernel");
    let n = mask.n_voxels();
    let t = r.random_range(4 * k + 20..=4 * k + 80);
    let x = random_design(&mut r, t, k);
    let mut y = vec![0.0; t * n];
    for v in 0..n {
        let w: Vec<f64> = (0..k).map(|_| normal(&mut r)).collect();
        let a: Vec<f64> = (0..p).map(|_| 0.4 / p as f64 * normal(&mut r).tanh()).collect();
        let sd = 0.5 + r.random::<f64>();
        let mut e = vec![0.0; t];
        for tt in 0..t {
            let mut ev = sd * normal(&mut r);
            for (pp, ap) in a.iter().enumerate() {
                if tt > pp {
                    ev += ap * e[tt - 1 - pp];
                }
            }
            e[tt] = ev;
            y[tt * n + v] = (0..k).map(|kk| x[tt * k + kk] * w[kk]).sum::<f64>() + ev;
        }
    }
    (kernel, Dataset::new(y, x, t, n, k, p).expect("dataset"))
}

/// Fast log-likelihood (posterior minus the directly evaluated prior)
/// against the per-time-point sum, on 200 instances.
pub fn likelihood_equivalence(seed: u64) -> CheckResult {
    timed("likelihood equivalence", || {
        let hp = HyperPriors::default();
        let mut worst = 0.0f64;
        for s in 0..200 {
            let inst = random_instance(seed.wrapping_add(s));
            let stats = SuffStats::new(&inst.data).expect("stats");
            let mut eval = PosteriorEvaluator::new(&stats, &inst.kernel, &hp);
            let direct_lik = direct_log_likelihood(&inst.state, &inst.data);
            let direct_prior =
                direct_log_posterior(&inst.state, &inst.data, &dense_sts(&inst.mask), &hp) - direct_lik;
            let fast_lik = eval.log_posterior(&inst.state) - direct_prior;
            worst = worst.max((fast_lik - direct_lik).abs() / direct_lik.abs().max(1.0));
        }
        (worst <= 1e-10, format!("max relative difference {worst:.2e} over 200 instances"))
    })
}

pub fn gradient_oracle(seed: u64) -> CheckResult {
    timed("gradient oracle", || {
        let hp = HyperPriors::default();
        let mut worst = 0.0f64;
        for s in 0..20 {
            let inst = random_instance(seed.wrapping_add(1000 + s));
            let stats = SuffStats::new(&inst.data).expect("stats");
            let mut eval = PosteriorEvaluator::new(&stats, &inst.kernel, &hp);
            let theta = inst.state.flatten();
            let mut grad = vec![0.0; theta.len()];
            if eval.log_posterior_and_grad(&theta, &mut grad).is_err() {
                return (false, format!("gradient failed on instance {s}"));
            }
            let fd = central_difference(&theta, 1e-5, |x| eval.log_density(x));
            for (g, f) in grad.iter().zip(&fd) {
                worst = worst.max((g - f).abs() / f.abs().max(1.0));
            }
        }
        (worst < 1e-4, format!("max relative error {worst:.2e} over 20 states"))
    })
}

/// Reduced model with a closed-form Gaussian posterior for `W`: 3×3 mask,
/// K = 2, T = 40, A frozen at zero, α and λ fixed.
pub struct GaussianOracle {
    pub coords: usize,
    pub hmc_within_3_bmse: usize,
    pub hmc_worst_var_rel: f64,
    pub vb_worst_mean_rel: f64,
    pub vb_var_ratio_range: (f64, f64),
    pub hmc_acceptance: f64,
}

pub fn gaussian_oracle_run(seed: u64) -> GaussianOracle {
    let (t, k, p) = (40, 2, 1);
    let mask = Mask::full(&[3, 3]).expect("grid");
    let n = mask.n_voxels();
    let kernel = SpatialKernel::build(&mask, 2).expect("kernel");
    let mut r = rng(seed.wrapping_add(0x6a5));
    let x = random_design(&mut r, t, k);
    let mut y = vec![0.0; t * n];
    for v in 0..n {
        let w = [1.0 + 0.2 * v as f64, 0.5];
        for tt in 0..t {
            y[tt * n + v] = x[tt * k] * w[0] + x[tt * k + 1] * w[1] + normal(&mut r);
        }
    }
    let data = Dataset::new(y, x, t, n, k, p).expect("dataset");
    let stats = SuffStats::new(&data).expect("stats");
    let hp = HyperPriors::default();
    let alpha = [2.0, 0.5];
    let lambda: Vec<f64> = (0..n).map(|v| 0.8 + 0.05 * v as f64).collect();

    let mut init = ols_init(&data, &kernel).expect("ols");
    init.a_mut(0).iter_mut().for_each(|a| *a = 0.0);
    init.alpha_mut().copy_from_slice(&alpha);
    init.beta_mut()[0] = 1.0;
    init.lambda_mut().copy_from_slice(&lambda);
    let frozen = [Block::A, Block::Alpha, Block::Beta, Block::Lambda];

    let (cf_mean, cf_cov) = gmrf_posterior(&data, &dense_sts(&mask), &lambda, &alpha);
    let dim = k * n;

    let cfg = HmcConfig {
        // Short trajectories: with the tuned mass the scaled posterior has
        // unit-order frequencies, and longer fixed-length trajectories come
        // close to a full period for some directions.
        step_size: 0.05,
        n_leapfrog: 2,
        n_iter: 100_000,
        n_burn: 20_000,
        tune_rounds: 2,
        seed,
        ..HmcConfig::default()
    };
    let fit = run_hmc(&stats, &kernel, &hp, &init, &frozen, Parameterization::Natural, &cfg, Some(&[]))
        .expect("hmc");
    let layout = init.layout();
    let var = fit.summary.variance.as_ref().expect("variances");
    let bmse = fit.summary.bmse.as_ref().expect("bmse");
    let mut within = 0;
    let mut worst_var = 0.0f64;
    for kk in 0..k {
        for v in 0..n {
            let i = layout.w(kk, v);
            let j = kk * n + v;
            if (fit.summary.mean[i] - cf_mean[j]).abs() <= 3.0 * bmse[i] {
                within += 1;
            }
            let cv = cf_cov[j * dim + j];
            worst_var = worst_var.max((var[i] - cv).abs() / cv);
        }
    }

    let vcfg = VBConfig {
        tol: 1e-13,
        max_iter: 5000,
        ..VBConfig::default()
    };
    let vb = run_vb_from(&stats, &kernel, &hp, &vcfg, &init, &frozen).expect("vb");
    let vvar = vb.summary.variance.as_ref().expect("variances");
    let mut worst_mean = 0.0f64;
    let mut ratio = (f64::INFINITY, 0.0f64);
    for kk in 0..k {
        for v in 0..n {
            let i = layout.w(kk, v);
            let j = kk * n + v;
            worst_mean = worst_mean.max((vb.summary.mean[i] - cf_mean[j]).abs() / cf_mean[j].abs());
            let q = vvar[i] / cf_cov[j * dim + j];
            ratio = (ratio.0.min(q), ratio.1.max(q));
        }
    }
    GaussianOracle {
        coords: dim,
        hmc_within_3_bmse: within,
        hmc_worst_var_rel: worst_var,
        vb_worst_mean_rel: worst_mean,
        vb_var_ratio_range: ratio,
        hmc_acceptance: fit.chain.acceptance_rate,
    }
}

pub fn gaussian_oracle(seed: u64) -> CheckResult {
    timed("gaussian posterior oracle", || {
        let g = gaussian_oracle_run(seed);
        let frac = g.hmc_within_3_bmse as f64 / g.coords as f64;
        let ok = frac >= 0.95 && g.hmc_worst_var_rel <= 0.15 && g.vb_worst_mean_rel <= 0.05;
        (
            ok,
            format!(
                "HMC means within 3 BMSE {}/{}; HMC variance max rel err {:.3}; VB mean max rel err {:.1e}; \
                 VB/exact variance ratio {:.3}..{:.3}; acceptance {:.2}",
                g.hmc_within_3_bmse,
                g.coords,
                g.hmc_worst_var_rel,
                g.vb_worst_mean_rel,
                g.vb_var_ratio_range.0,
                g.vb_var_ratio_range.1,
                g.hmc_acceptance
            ),
        )
    })
}

/// Free energy never decreases (slack 1e-8) on 20 instances spanning
/// K ∈ {2, 5, 13}, P ∈ {1, 3}; the converged fit survives one extra sweep.
pub fn vb_monotonicity(seed: u64) -> CheckResult {
    timed("vb monotonicity", || {
        let shapes = [(2, 1), (2, 3), (5, 1), (5, 3), (13, 1), (13, 3)];
        let hp = HyperPriors::default();
        let cfg = VBConfig::default();
        let mut worst_drop = 0.0f64;
        let mut worst_fixed = 0.0f64;
        let mut unconverged = 0;
        for i in 0..20u64 {
            let (k, p) = shapes[i as usize % shapes.len()];
            let (kernel, data) = ar_instance(seed.wrapping_add(7000 + i), k, p);
            let fit = match run_vb(&data, &kernel, &hp, &cfg) {
                Ok(f) => f,
                Err(e) => return (false, format!("instance {i}: {e}")),
            };
            for w in fit.posterior.free_energy_trace().windows(2) {
                worst_drop = worst_drop.max(w[0] - w[1]);
            }
            if !fit.report.converged {
                unconverged += 1;
                continue;
            }
            let stats = SuffStats::new(&data).expect("stats");
            let model = VbModel::new(&stats, &kernel, &hp).expect("model");
            let mut q = fit.posterior.clone();
            let before = free_energy(&q, &model).expect("free energy");
            let voxels: Vec<usize> = (0..kernel.n()).collect();
            sweep(&model, &mut q, &voxels).expect("sweep");
            let after = free_energy(&q, &model).expect("free energy");
            worst_fixed = worst_fixed.max((after - before).abs() / before.abs());
        }
        (
            worst_drop <= 1e-8 && worst_fixed < cfg.tol && unconverged == 0,
            format!(
                "largest decrease {worst_drop:.1e}; extra-sweep relative change {worst_fixed:.1e}; \
                 {unconverged} unconverged"
            ),
        )
    })
}

/// Sparse `SᵀS` is symmetric positive definite on random 2-D and 3-D masks.
pub fn kernel_spd(seed: u64) -> CheckResult {
    timed("kernel SPD", || {
        let mut r = rng(seed.wrapping_add(0x5bd));
        for i in 0..50 {
            let mask = random_mask(&mut r, 60);
            let kernel = SpatialKernel::build(&mask, mask.dims().len()).expect("kernel");
            let n = mask.n_voxels();
            let dense = kernel.sts().to_dense();
            let sym = (0..n).all(|a| (0..n).all(|b| dense[a * n + b] == dense[b * n + a]));
            if !sym || Cholesky::new(&dense, n).is_err() {
                return (false, format!("mask {i} ({n} voxels) is not SPD"));
            }
        }
        (true, "50 random masks".into())
    })
}

fn random_truth(r: &mut ChaCha8Rng, layout: Layout) -> GroundTruth {
    GroundTruth {
        w: (0..layout.k * layout.n).map(|_| normal(r)).collect(),
        a: (0..layout.p * layout.n).map(|_| 0.3 * normal(r)).collect(),
        lambda: vec![1.0; layout.n],
        k: layout.k,
        p: layout.p,
        n: layout.n,
        noise_seed: 0,
        initial_noise: InitialNoise::Stationary,
    }
}

/// Moran's I against the double loop, AMSE ≥ ASBIAS on random replicate
/// sets, and PPM probabilities non-increasing in γ_e.
pub fn metrics_oracles(seed: u64) -> CheckResult {
    timed("metrics oracles", || {
        let mut r = rng(seed.wrapping_add(0x3e7));
        let mut worst_moran = 0.0f64;
        for _ in 0..30 {
            let dims = vec![r.random_range(2..=14), r.random_range(2..=14)];
            let cells: usize = dims.iter().product();
            let inside: Vec<bool> = (0..cells).map(|_| r.random_bool(0.8)).collect();
            let Ok(mask) = Mask::new(dims, inside) else { continue };
            if mask.n_voxels() < 2 || mask.n_voxels() > 200 {
                continue;
            }
            let vals: Vec<f64> = (0..mask.n_voxels()).map(|_| normal(&mut r)).collect();
            let fast = morans_i(&vals, &MoranWeights::new(&mask)).expect("moran");
            let slow = moran_brute(&vals, &mask);
            worst_moran = worst_moran.max((fast - slow).abs() / slow.abs().max(1.0));
        }

        let mut amse_ok = true;
        for _ in 0..20 {
            let layout = Layout::new(r.random_range(1..=4), r.random_range(1..=2), r.random_range(2..=30));
            let truth = random_truth(&mut r, layout);
            let j = r.random_range(1..=6);
            let summaries: Vec<PosteriorSummary> = (0..j)
                .map(|_| {
                    let mut m = truth.theta(&vec![1.0; layout.k], &vec![1.0; layout.p]);
                    let shift = normal(&mut r);
                    m.iter_mut().for_each(|v| *v += shift + 0.5 * normal(&mut r));
                    PosteriorSummary::new("x", layout, m, None, None).expect("summary")
                })
                .collect();
            let set = ReplicateSet::new("x", summaries, vec![truth; j]).expect("set");
            for img in Image::all(layout) {
                let s = summary_stats(&set, img).expect("stats");
                amse_ok &= s.amse >= s.asbias - 1e-12 * s.asbias.abs();
            }
        }

        let mut ppm_ok = true;
        for _ in 0..10 {
            let (k, n) = (r.random_range(1..=4), r.random_range(1..=20));
            let c: Vec<f64> = (0..k).map(|_| normal(&mut r)).collect();
            let w_mean: Vec<f64> = (0..k * n).map(|_| normal(&mut r)).collect();
            let mut cov = vec![0.0; n * k * k];
            for v in 0..n {
                for a in 0..k {
                    cov[v * k * k + a * k + a] = 0.1 + r.random::<f64>();
                }
            }
            let samples: Vec<Vec<f64>> = (0..n).map(|_| (0..200).map(|_| normal(&mut r)).collect()).collect();
            let point = vec![0.0; n];
            let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
            for g in [-2.0, -1.0, -0.5, 0.0, 0.3, 1.0, 2.5] {
                let con = Contrast::new(c.clone(), EffectThreshold::Value(g), 0.9).expect("contrast");
                let pg = ppm_gaussian(&w_mean, &cov, n, &con).expect("ppm").probability;
                let ps = ppm_from_samples(&samples, &point, &con).expect("ppm").probability;
                if let Some((qg, qs)) = &prev {
                    ppm_ok &= pg.iter().zip(qg).all(|(a, b)| a <= b);
                    ppm_ok &= ps.iter().zip(qs).all(|(a, b)| a <= b);
                }
                prev = Some((pg, ps));
            }
        }
        (
            worst_moran <= 1e-12 && amse_ok && ppm_ok,
            format!(
                "Moran max rel diff {worst_moran:.1e}; AMSE >= ASBIAS {}; PPM monotone {}",
                if amse_ok { "yes" } else { "no" },
                if ppm_ok { "yes" } else { "no" }
            ),
        )
    })
}

pub fn all(seed: u64) -> Vec<CheckResult> {
    vec![
        likelihood_equivalence(seed),
        gradient_oracle(seed),
        kernel_spd(seed),
        gaussian_oracle(seed),
        vb_monotonicity(seed),
        metrics_oracles(seed),
    ]
}
