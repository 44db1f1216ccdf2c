#![allow(dead_code)]

use glmar_core::lattice::{Mask, SpatialKernel};
use glmar_core::model::{Dataset, ParamState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct Instance {
    pub mask: Mask,
    pub kernel: SpatialKernel,
    pub data: Dataset,
    pub state: ParamState,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// A 2-D or 3-D mask with up to `max_n` voxels and random holes.
pub fn random_mask(rng: &mut ChaCha8Rng, max_n: usize) -> Mask {
    loop {
        let dims: Vec<usize> = if rng.random_bool(0.7) {
            vec![rng.random_range(1..=7), rng.random_range(2..=8)]
        } else {
            vec![rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(2..=4)]
        };
        let cells: usize = dims.iter().product();
        let keep = rng.random_range(0.6..1.0);
        let inside: Vec<bool> = (0..cells).map(|_| rng.random_bool(keep)).collect();
        let n = inside.iter().filter(|b| **b).count();
        if n >= 1 && n <= max_n {
            return Mask::new(dims, inside).unwrap();
        }
    }
}

pub fn random_dataset(rng: &mut ChaCha8Rng, t: usize, n: usize, k: usize, p: usize) -> Dataset {
    let mut x = Vec::with_capacity(t * k);
    for _ in 0..t {
        for kk in 0..k {
            x.push(if kk + 1 == k { 1.0 } else { normal(rng) });
        }
    }
    let y: Vec<f64> = (0..t * n).map(|_| 2.0 * normal(rng)).collect();
    Dataset::new(y, x, t, n, k, p).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, k: usize, p: usize, n: usize) -> ParamState {
    let mut s = ParamState::zeros(k, p, n);
    for kk in 0..k {
        for v in s.w_mut(kk) {
            *v = normal(rng);
        }
    }
    for pp in 0..p {
        for v in s.a_mut(pp) {
            *v = 0.3 * normal(rng);
        }
    }
    let start = s.layout().alpha(0);
    for v in &mut s.as_mut_slice()[start..] {
        *v = (0.7 * normal(rng)).exp();
    }
    s
}

/// Random instance within T ≤ 64, N ≤ 50, K ≤ 5, P ≤ 3.
pub fn random_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let mask = random_mask(&mut r, 50);
    let dims = mask.dims().len();
    let kernel = SpatialKernel::build(&mask, dims).unwrap();
    let n = mask.n_voxels();
    let k = r.random_range(1..=5);
    let p = r.random_range(1..=3);
    let t = r.random_range(p + k + 4..=64);
    let data = random_dataset(&mut r, t, n, k, p);
    let state = random_state(&mut r, k, p, n);
    Instance { mask, kernel, data, state }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}
