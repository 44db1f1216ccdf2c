mod common;

use common::*;
use glmar_core::hmc::{run_hmc, HmcConfig, Parameterization};
use glmar_core::lattice::SpatialKernel;
use glmar_core::model::{ols_init, Dataset, HyperPriors, SuffStats};
use glmar_core::vb::*;
use rand::Rng;

/// Data with signal and stationary AR noise.
fn generated(seed: u64, k: usize, p: usize) -> (SpatialKernel, Dataset) {
    let mut r = rng(seed);
    let mask = random_mask(&mut r, 30);
    let kernel = SpatialKernel::build(&mask, mask.dims().len()).unwrap();
    let n = mask.n_voxels();
    let t = r.random_range(4 * k + 20..=4 * k + 80);
    let mut x = Vec::with_capacity(t * k);
    for tt in 0..t {
        for kk in 0..k {
            x.push(if kk + 1 == k { 1.0 } else { ((tt * (kk + 1)) as f64 * 0.3).sin() + 0.5 * normal(&mut r) });
        }
    }
    let mut y = vec![0.0; t * n];
    for v in 0..n {
        let w: Vec<f64> = (0..k).map(|_| normal(&mut r)).collect();
        let a: Vec<f64> = (0..p).map(|_| 0.4 / p as f64 * normal(&mut r).tanh()).collect();
        let sd = 0.5 + r.random::<f64>();
        let mut e = vec![0.0; t];
        for tt in 0..t {
            let mut v_e = sd * normal(&mut r);
            for (pp, ap) in a.iter().enumerate() {
                if tt > pp {
                    v_e += ap * e[tt - 1 - pp];
                }
            }
            e[tt] = v_e;
            y[tt * n + v] = (0..k).map(|kk| x[tt * k + kk] * w[kk]).sum::<f64>() + e[tt];
        }
    }
    (kernel, Dataset::new(y, x, t, n, k, p).unwrap())
}

fn instances() -> Vec<(u64, usize, usize)> {
    let shapes = [(2, 1), (2, 3), (5, 1), (5, 3), (13, 1), (13, 3)];
    (0..20).map(|i| (7000 + i as u64, shapes[i % 6].0, shapes[i % 6].1)).collect()
}

#[test]
fn free_energy_never_decreases_on_20_instances() {
    let hp = HyperPriors::default();
    for (seed, k, p) in instances() {
        let (kernel, data) = generated(seed, k, p);
        let fit = run_vb(&data, &kernel, &hp, &VBConfig::default()).unwrap();
        let trace = fit.posterior.free_energy_trace();
        assert!(trace.len() >= 2, "seed {seed}");
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "seed {seed} (K={k}, P={p}): {} -> {}", w[0], w[1]);
        }
        assert!(fit.posterior.is_valid());
    }
}

#[test]
fn every_factor_update_is_an_ascent_step_and_stays_in_family() {
    let hp = HyperPriors::default();
    for (seed, k, p) in instances().into_iter().take(6) {
        let (kernel, data) = generated(seed, k, p);
        let stats = SuffStats::new(&data).unwrap();
        let model = VbModel::new(&stats, &kernel, &hp).unwrap();
        let init = ols_init(&data, &kernel).unwrap();
        let mut q = VBPosterior::from_state(&init, model.gamma_shapes(), &[]);
        let l = model.layout();
        let voxels: Vec<usize> = (0..l.n).collect();
        sweep(&model, &mut q, &voxels).unwrap();
        let mut f = free_energy(&q, &model).unwrap();
        for _ in 0..3 {
            let factors = (0..l.n)
                .map(Factor::W)
                .chain((0..l.n).map(Factor::A))
                .chain((0..l.k).map(Factor::Alpha))
                .chain((0..l.p).map(Factor::Beta))
                .chain((0..l.n).map(Factor::Lambda));
            for factor in factors {
                vb_update_factor(&mut q, factor, &model).unwrap();
                assert!(q.is_valid(), "seed {seed}: {factor:?} left its family");
                let next = free_energy(&q, &model).unwrap();
                assert!(next >= f - 1e-8 * f.abs().max(1.0), "seed {seed}: {factor:?} lowered F {f} -> {next}");
                f = next;
            }
        }
    }
}

#[test]
fn converged_fit_is_a_fixed_point() {
    let hp = HyperPriors::default();
    for (seed, k, p) in instances().into_iter().take(6) {
        let (kernel, data) = generated(seed, k, p);
        let cfg = VBConfig::default();
        let fit = run_vb(&data, &kernel, &hp, &cfg).unwrap();
        assert!(fit.report.converged, "seed {seed} did not converge");
        let stats = SuffStats::new(&data).unwrap();
        let model = VbModel::new(&stats, &kernel, &hp).unwrap();
        let mut q = fit.posterior.clone();
        let before = free_energy(&q, &model).unwrap();
        let voxels: Vec<usize> = (0..kernel.n()).collect();
        sweep(&model, &mut q, &voxels).unwrap();
        let after = free_energy(&q, &model).unwrap();
        assert!((after - before).abs() / before.abs() < cfg.tol, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn vb_and_hmc_summaries_share_a_schema() {
    let (kernel, data) = generated(11, 2, 1);
    let hp = HyperPriors::default();
    let vb = run_vb(&data, &kernel, &hp, &VBConfig::default()).unwrap();
    let stats = SuffStats::new(&data).unwrap();
    let cfg = HmcConfig {
        step_size: 1e-3,
        n_leapfrog: 5,
        n_iter: 40,
        n_burn: 20,
        ..HmcConfig::default()
    };
    let init = ols_init(&data, &kernel).unwrap();
    let hmc = run_hmc(&stats, &kernel, &hp, &init, &[], Parameterization::Natural, &cfg, None).unwrap();
    assert_eq!(vb.summary.layout, hmc.summary.layout);
    assert_eq!(vb.summary.mean.len(), hmc.summary.mean.len());
    assert_eq!(
        vb.summary.variance.as_ref().map(Vec::len),
        hmc.summary.variance.as_ref().map(Vec::len)
    );
}
