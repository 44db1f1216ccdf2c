mod common;

use common::*;
use glmar_core::lattice::SpatialKernel;
use glmar_core::oracle::{dense_quad, dense_sts};
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sparse_precision_equals_dense_product(seed in any::<u64>()) {
        let mask = random_mask(&mut rng(seed), 100);
        let kernel = SpatialKernel::build(&mask, mask.dims().len()).unwrap();
        let n = mask.n_voxels();
        let dense = dense_sts(&mask);
        let sparse = kernel.sts().to_dense();
        prop_assert_eq!(sparse.len(), n * n);
        for (a, b) in sparse.iter().zip(&dense) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn precision_is_symmetric_positive_definite(seed in any::<u64>()) {
        let mask = random_mask(&mut rng(seed), 100);
        let kernel = SpatialKernel::build(&mask, mask.dims().len()).unwrap();
        let n = mask.n_voxels();
        let m = DMatrix::from_row_slice(n, n, &kernel.sts().to_dense());
        prop_assert_eq!(&m, &m.transpose());
        let eig = m.symmetric_eigenvalues();
        prop_assert!(eig.min() > 0.0, "smallest eigenvalue {}", eig.min());
    }

    #[test]
    fn quad_form_matches_product(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mask = random_mask(&mut r, 100);
        let kernel = SpatialKernel::build(&mask, mask.dims().len()).unwrap();
        let n = mask.n_voxels();
        let v: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let mut qv = vec![0.0; n];
        kernel.precision_mul(&v, &mut qv);
        let via_mul: f64 = v.iter().zip(&qv).map(|(a, b)| a * b).sum();
        let q = kernel.quad_form(&v).unwrap();
        prop_assert!((q - via_mul).abs() <= 1e-12 * q.abs());
        let dense = dense_quad(&dense_sts(&mask), &v);
        prop_assert!((q - dense).abs() <= 1e-12 * q.abs());
    }
}
