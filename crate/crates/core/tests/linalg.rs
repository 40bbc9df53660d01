mod common;

use common::{elementwise_ssq, random_complex};
use fftasca::linalg::{pinv_default, svd, ComplexMatrix};
use num_complex::Complex64;
use proptest::prelude::*;

fn close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
    a.ssq_diff(b).sqrt() <= tol * a.ssq().sqrt().max(b.ssq().sqrt()).max(1.0)
}

/// Explicit `X X^H` trace, independent of `ssq`.
fn trace_xxh(x: &ComplexMatrix) -> Complex64 {
    let p = x.matmul(&x.hermitian()).unwrap();
    (0..p.rows()).map(|i| p[(i, i)]).sum()
}

/// Product of a random complex matrix with a random rank-`r` factorisation.
fn low_rank(rows: usize, cols: usize, r: usize, seed: u64) -> ComplexMatrix {
    random_complex(rows, r, seed).matmul(&random_complex(r, cols, seed + 1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ssq_is_trace_of_x_xh(rows in 1usize..12, cols in 1usize..12, seed in 0u64..10_000) {
        let x = random_complex(rows, cols, seed);
        let t = trace_xxh(&x);
        let e = elementwise_ssq(&x);
        prop_assert!((t.re - e).abs() <= 1e-12 * e);
        prop_assert!(t.im.abs() <= 1e-12 * e);
        prop_assert!((x.ssq() - e).abs() <= 1e-12 * e);
    }

    #[test]
    fn svd_reconstructs_with_orthonormal_factors(rows in 1usize..10, cols in 1usize..10, seed in 0u64..10_000) {
        let x = random_complex(rows, cols, seed);
        let f = svd(&x).unwrap();
        prop_assert!(close(&f.reconstruct(), &x, 1e-10));
        let k = f.s.len();
        prop_assert!(close(&f.u.hermitian().matmul(&f.u).unwrap(), &ComplexMatrix::identity(k), 1e-10));
        prop_assert!(close(&f.v.hermitian().matmul(&f.v).unwrap(), &ComplexMatrix::identity(k), 1e-10));
        prop_assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(f.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn pinv_satisfies_penrose_conditions(rows in 1usize..9, cols in 1usize..9, r in 1usize..5, seed in 0u64..10_000) {
        let x = low_rank(rows, cols, r.min(rows).min(cols), seed);
        let p = pinv_default(&x).unwrap();
        let xpx = x.matmul(&p).unwrap().matmul(&x).unwrap();
        let pxp = p.matmul(&x).unwrap().matmul(&p).unwrap();
        let xp = x.matmul(&p).unwrap();
        let px = p.matmul(&x).unwrap();
        prop_assert!(close(&xpx, &x, 1e-8));
        prop_assert!(close(&pxp, &p, 1e-8));
        prop_assert!(close(&xp.hermitian(), &xp, 1e-8));
        prop_assert!(close(&px.hermitian(), &px, 1e-8));
    }

    #[test]
    fn svd_converges_on_rank_deficient_tall_input(rows in 6usize..20, cols in 2usize..6, r in 1usize..3, seed in 0u64..10_000) {
        let x = low_rank(rows, cols, r.min(cols), seed);
        let f = svd(&x).unwrap();
        prop_assert!(close(&f.reconstruct(), &x, 1e-10));
        prop_assert_eq!(f.rank(1e-9), r.min(cols));
    }

    #[test]
    fn rank_of_low_rank_product(rows in 2usize..9, cols in 2usize..9, r in 1usize..4, seed in 0u64..10_000) {
        let r = r.min(rows).min(cols);
        let x = low_rank(rows, cols, r, seed);
        prop_assert_eq!(x.rank(1e-9).unwrap(), r);
    }
}
