mod common;

use common::*;
use glmar_core::hmc::*;
use glmar_core::model::{HyperPriors, SuffStats};
use glmar_core::special::normal_sf;
use nalgebra::DMatrix;

/// Zero-mean Gaussian with covariance [[1, ρ·2], [ρ·2, 4]].
struct Correlated {
    rho: f64,
}

impl Target for Correlated {
    fn dim(&self) -> usize {
        2
    }
    fn log_density_and_grad(&mut self, x: &[f64], g: &mut [f64]) -> Option<f64> {
        let (s1, s2, r) = (1.0, 2.0, self.rho);
        let det = 1.0 - r * r;
        let (u, v) = (x[0] / s1, x[1] / s2);
        let q = (u * u - 2.0 * r * u * v + v * v) / det;
        g[0] = -(u - r * v) / (det * s1);
        g[1] = -(v - r * u) / (det * s2);
        Some(-0.5 * q)
    }
}

struct Diagonal {
    var: Vec<f64>,
}

impl Target for Diagonal {
    fn dim(&self) -> usize {
        self.var.len()
    }
    fn log_density_and_grad(&mut self, x: &[f64], g: &mut [f64]) -> Option<f64> {
        let mut lp = 0.0;
        for i in 0..x.len() {
            lp -= 0.5 * x[i] * x[i] / self.var[i];
            g[i] = -x[i] / self.var[i];
        }
        Some(lp)
    }
}

/// Non-Gaussian 3-D target with coupled quartic terms.
struct Quartic;

impl Target for Quartic {
    fn dim(&self) -> usize {
        3
    }
    fn log_density_and_grad(&mut self, x: &[f64], g: &mut [f64]) -> Option<f64> {
        let u = 0.25 * (x[0].powi(4) + x[1].powi(4) + x[2].powi(4)) + 0.5 * x[0] * x[1] + 0.3 * x[1] * x[2].powi(2);
        g[0] = -(x[0].powi(3) + 0.5 * x[1]);
        g[1] = -(x[1].powi(3) + 0.5 * x[0] + 0.3 * x[2].powi(2));
        g[2] = -(x[2].powi(3) + 0.6 * x[1] * x[2]);
        Some(-u)
    }
}

fn ks_normal(draws: &[f64], sd: f64) -> f64 {
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = 1.0 - normal_sf(x / sd);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn retained_draws_match_the_target_marginals() {
    let cfg = HmcConfig {
        step_size: 0.3,
        n_leapfrog: 7,
        n_iter: 11_000,
        n_burn: 1_000,
        seed: 3,
        ..HmcConfig::default()
    };
    let out = run_chain(&mut Correlated { rho: 0.5 }, vec![0.0, 0.0], &cfg, &[]).unwrap();
    assert_eq!(out.store.count(), 10_000);
    let d1 = ks_normal(&out.store.column(0), 1.0);
    let d2 = ks_normal(&out.store.column(1), 2.0);
    assert!(d1 < 0.05 && d2 < 0.05, "KS distances {d1} {d2}");
}

#[test]
fn exp_minus_delta_h_averages_to_one() {
    let cfg = HmcConfig {
        step_size: 0.9,
        n_leapfrog: 3,
        n_iter: 21_000,
        n_burn: 1_000,
        seed: 8,
        ..HmcConfig::default()
    };
    let out = run_chain(&mut Correlated { rho: 0.8 }, vec![0.0, 0.0], &cfg, &[]).unwrap();
    let dh = out.store.delta_h_trace();
    let m = dh.iter().map(|d| (-d).exp()).sum::<f64>() / dh.len() as f64;
    assert!(out.acceptance_rate < 0.95, "trajectories too accurate to test: {}", out.acceptance_rate);
    assert!((m - 1.0).abs() < 0.1, "E[exp(-dH)] = {m}");
}

#[test]
fn one_step_moves_every_coordinate() {
    let mut t = Diagonal { var: (1..=50).map(|i| i as f64 / 10.0).collect() };
    let start: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut state = HmcState::new(&mut t, start.clone(), 5).unwrap();
    let ones = vec![1.0; 50];
    let info = hmc_step(&mut t, &mut state, 0.05, 10, &ones, &ones);
    assert!(info.accepted);
    assert!(state.position.iter().zip(&start).all(|(a, b)| a != b));
}

#[test]
fn leapfrog_preserves_phase_space_volume() {
    let mut t = Quartic;
    let x0 = [0.3, -0.7, 0.5];
    let p0 = [0.4, 0.1, -0.6];
    let inv = [1.0, 0.5, 2.0];
    let map = |t: &mut Quartic, z: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; 3];
        t.log_density_and_grad(&z[..3], &mut g).unwrap();
        let out = leapfrog(t, &z[..3], &z[3..], &g, 0.1, 12, &inv);
        out.position.into_iter().chain(out.momentum).collect()
    };
    let z0: Vec<f64> = x0.iter().chain(&p0).copied().collect();
    let h = 1e-6;
    let mut jac = DMatrix::zeros(6, 6);
    for j in 0..6 {
        let mut zp = z0.clone();
        let mut zm = z0.clone();
        zp[j] += h;
        zm[j] -= h;
        let (fp, fm) = (map(&mut t, &zp), map(&mut t, &zm));
        for i in 0..6 {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let det = jac.determinant();
    assert!((det - 1.0).abs() < 1e-6, "det = {det}");
}

fn mean_abs_delta_h<T: Target>(t: &mut T, starts: &[Vec<f64>], delta: f64, steps: usize, seed: u64) -> f64 {
    let dim = t.dim();
    let ones = vec![1.0; dim];
    let mut total = 0.0;
    for (i, s) in starts.iter().enumerate() {
        let mut state = HmcState::new(t, s.clone(), seed + i as u64).unwrap();
        let info = hmc_step(t, &mut state, delta, steps, &ones, &ones);
        total += info.delta_h.abs();
    }
    total / starts.len() as f64
}

#[test]
fn energy_error_scales_with_step_squared() {
    let mut r = rng(21);
    let mut t = Correlated { rho: 0.3 };
    let starts: Vec<Vec<f64>> = (0..400).map(|_| vec![normal(&mut r), 2.0 * normal(&mut r)]).collect();
    // Same trajectory length at both step sizes; same momentum draws.
    let coarse = mean_abs_delta_h(&mut t, &starts, 0.2, 8, 100);
    let fine = mean_abs_delta_h(&mut t, &starts, 0.1, 16, 100);
    let ratio = coarse / fine;
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn energy_error_scaling_on_the_glm_ar_posterior() {
    let inst = random_instance(42);
    let stats = SuffStats::new(&inst.data).unwrap();
    let hp = HyperPriors::default();
    let mut target = GlmArTarget::new(&stats, &inst.kernel, &hp, &inst.state, &[], Parameterization::LogPrecision).unwrap();
    let start = target.position_of(&inst.state);
    let starts = vec![start; 200];
    let coarse = mean_abs_delta_h(&mut target, &starts, 2e-4, 10, 7);
    let fine = mean_abs_delta_h(&mut target, &starts, 1e-4, 20, 7);
    let ratio = coarse / fine;
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio} ({coarse:e} vs {fine:e})");
}

#[test]
fn adaptation_reaches_the_acceptance_band_on_most_seeds() {
    let mut hits = 0;
    for seed in 0..20 {
        let cfg = HmcConfig {
            step_size: 0.01,
            n_leapfrog: 10,
            n_iter: 3000,
            n_burn: 2000,
            seed,
            ..HmcConfig::default()
        };
        // Variances spread over [0.5, 2]; in 100 dimensions the 0.65 target
        // is reached well inside the leapfrog stability region.
        let mut t = Diagonal { var: (0..100).map(|i| 0.5 + 1.5 * i as f64 / 99.0).collect() };
        let out = run_chain(&mut t, vec![0.0; 100], &cfg, &[]).unwrap();
        if (0.55..=0.75).contains(&out.acceptance_rate) {
            hits += 1;
        }
    }
    assert!(hits >= 18, "{hits}/20 runs in [0.55, 0.75]");
}

fn ess(out: &ChainOutput, j: usize) -> f64 {
    let col = out.store.column(j);
    let b = default_batches(col.len());
    let se = bmse(&col, b).unwrap();
    out.store.variance()[j] / (se * se)
}

#[test]
fn mass_tuning_improves_effective_sample_size() {
    let base = HmcConfig {
        step_size: 0.05,
        n_leapfrog: 5,
        n_iter: 6000,
        n_burn: 2000,
        seed: 12,
        ..HmcConfig::default()
    };
    let tuned_cfg = HmcConfig { tune_rounds: 1, ..base.clone() };
    let untuned = run_chain(&mut Diagonal { var: vec![1.0, 100.0] }, vec![0.0, 0.0], &base, &[]).unwrap();
    let tuned = run_chain(&mut Diagonal { var: vec![1.0, 100.0] }, vec![0.0, 0.0], &tuned_cfg, &[]).unwrap();
    let (e0, e1) = (ess(&untuned, 1), ess(&tuned, 1));
    assert!(e1 > e0, "wide coordinate ESS untuned {e0} tuned {e1}");
    assert!((tuned.mass[1] - 0.01).abs() < 0.005, "tuned mass {}", tuned.mass[1]);
}

#[test]
fn duplicated_chain_bmse_within_root_two() {
    let cfg = HmcConfig {
        step_size: 0.4,
        n_leapfrog: 5,
        n_iter: 5000,
        n_burn: 1000,
        seed: 4,
        ..HmcConfig::default()
    };
    let out = run_chain(&mut Correlated { rho: 0.2 }, vec![0.0, 0.0], &cfg, &[]).unwrap();
    let x = out.store.column(0);
    let doubled: Vec<f64> = x.iter().flat_map(|v| [*v, *v]).collect();
    let b = 40;
    let a = bmse(&x, b).unwrap();
    let d = bmse(&doubled, b).unwrap();
    let ratio = d / a;
    assert!(ratio > 1.0 / 2f64.sqrt() && ratio < 2f64.sqrt(), "ratio {ratio}");
}

#[test]
fn run_hmc_is_deterministic() {
    let inst = random_instance(9);
    let stats = SuffStats::new(&inst.data).unwrap();
    let hp = HyperPriors::default();
    let cfg = HmcConfig {
        step_size: 1e-3,
        n_leapfrog: 10,
        n_iter: 120,
        n_burn: 60,
        seed: 99,
        ..HmcConfig::default()
    };
    let run = || {
        run_hmc(&stats, &inst.kernel, &hp, &inst.state, &[], Parameterization::Natural, &cfg, None).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.summary, b.summary);
    assert_eq!(a.chain.store.draws(), b.chain.store.draws());
}
