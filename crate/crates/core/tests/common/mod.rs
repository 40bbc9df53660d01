//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use fftasca::linalg::{ComplexMatrix, RealMatrix};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct evaluation of `X[k] = sum_t x[t] exp(-2 pi i k t / M)`, with the
/// angle reduced modulo `M` before multiplying.
pub fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
    let m = x.len();
    (0..m)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let r = (k as u128 * t as u128 % m as u128) as f64;
                let (s, c) = (-std::f64::consts::TAU * r / m as f64).sin_cos();
                acc += v * Complex64::new(c, s);
            }
            acc
        })
        .collect()
}

pub fn random_complex(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexMatrix::from_fn(rows, cols, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn random_real(rows: usize, cols: usize, seed: u64) -> RealMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    RealMatrix::new(rows, cols, data).unwrap()
}

/// Element-wise `sum |x|^2`.
pub fn elementwise_ssq(x: &ComplexMatrix) -> f64 {
    x.as_slice().iter().map(|z| z.re * z.re + z.im * z.im).sum()
}

/// Textbook one-way ANOVA F over all columns: between-group over
/// within-group mean squares, from group means.
pub fn one_way_f(x: &ComplexMatrix, groups: &[usize]) -> f64 {
    let n = x.rows();
    let g = groups.iter().max().unwrap() + 1;
    let mut between = 0.0;
    let mut within = 0.0;
    for j in 0..x.cols() {
        let col = x.column(j);
        let grand: Complex64 = col.iter().sum::<Complex64>() / n as f64;
        for level in 0..g {
            let members: Vec<Complex64> = (0..n).filter(|&i| groups[i] == level).map(|i| col[i]).collect();
            let mean: Complex64 = members.iter().sum::<Complex64>() / members.len() as f64;
            between += members.len() as f64 * (mean - grand).norm_sqr();
            within += members.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>();
        }
    }
    (between / (g - 1) as f64) / (within / (n - g) as f64)
}

/// Replaces each missing entry by the mean of the observed entries of the
/// same column and cell.
pub fn impute(x: &ComplexMatrix, missing: &[Vec<bool>], cells: &[usize]) -> ComplexMatrix {
    let mut out = x.clone();
    for j in 0..x.cols() {
        for i in 0..x.rows() {
            if missing[i][j] {
                let obs: Vec<Complex64> = (0..x.rows())
                    .filter(|&r| cells[r] == cells[i] && !missing[r][j])
                    .map(|r| x[(r, j)])
                    .collect();
                out[(i, j)] = obs.iter().sum::<Complex64>() / obs.len() as f64;
            }
        }
    }
    out
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
