//! Forward and inverse discrete Fourier transforms of row signals.
//!
//! Normalisation convention: the forward transform is unscaled,
//!
//! ```text
//! X[k] = sum_{m=0}^{M-1} x[m] exp(-2 pi i k m / M)
//! ```
//!
//! and the inverse carries the full `1/M`. With this convention
//! `||X||^2 = M ||x||^2` for every row, so sums of squares computed in the
//! frequency domain are those of the time domain scaled by the constant `M`.
//!
//! The full spectrum (all `M` bins) is kept. For real input the upper half is
//! the conjugate mirror of the lower half, which keeps the inverse exact.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Below this length a direct O(M^2) sum is used.
pub const NAIVE_CUTOFF: usize = 32;

/// Frequency-domain rows together with the length of the signals they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumMatrix {
    inner: ComplexMatrix,
    source_length: usize,
}

impl SpectrumMatrix {
    /// Wraps an existing full-length spectrum (one row per sample).
    pub fn new(inner: ComplexMatrix) -> Result<Self> {
        if inner.cols() == 0 {
            return Err(Error::EmptySignal);
        }
        let source_length = inner.cols();
        Ok(Self { inner, source_length })
    }

    pub fn source_length(&self) -> usize {
        self.source_length
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.inner
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.inner
    }

    /// Largest relative violation of `X[k] = conj(X[M-k])` over all rows.
    pub fn conjugate_symmetry_error(&self) -> f64 {
        let m = self.source_length;
        let scale = self.inner.max_abs().max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for i in 0..self.inner.rows() {
            let row = self.inner.row(i);
            for k in 1..m {
                worst = worst.max((row[k] - row[m - k].conj()).norm());
            }
            worst = worst.max(row[0].im.abs());
        }
        worst / scale
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

enum Plan {
    Naive(Direction),
    Fast(Arc<dyn Fft<f64>>),
}

impl Plan {
    fn new(len: usize, direction: Direction) -> Self {
        if len < NAIVE_CUTOFF {
            return Plan::Naive(direction);
        }
        let mut planner = FftPlanner::new();
        match direction {
            Direction::Forward => Plan::Fast(planner.plan_fft_forward(len)),
            Direction::Inverse => Plan::Fast(planner.plan_fft_inverse(len)),
        }
    }

    fn run(&self, buf: &mut [Complex64]) {
        match self {
            Plan::Naive(dir) => {
                let out = naive(buf, *dir);
                buf.copy_from_slice(&out);
            }
            Plan::Fast(fft) => fft.process(buf),
        }
    }
}

fn naive(x: &[Complex64], direction: Direction) -> Vec<Complex64> {
    let m = x.len();
    let sign = if direction == Direction::Forward { -1.0 } else { 1.0 };
    (0..m)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, v)| {
                    // Reduce k*t modulo M before forming the angle.
                    let angle = sign * std::f64::consts::TAU * ((k * t) % m) as f64 / m as f64;
                    v * Complex64::from_polar(1.0, angle)
                })
                .sum()
        })
        .collect()
}

fn apply(x: &[Complex64], direction: Direction) -> Result<Vec<Complex64>> {
    if x.is_empty() {
        return Err(Error::EmptySignal);
    }
    let mut buf = x.to_vec();
    Plan::new(x.len(), direction).run(&mut buf);
    if direction == Direction::Inverse {
        let inv = 1.0 / x.len() as f64;
        buf.iter_mut().for_each(|z| *z *= inv);
    }
    Ok(buf)
}

/// Unnormalised forward DFT.
pub fn dft_forward(x: &[Complex64]) -> Result<Vec<Complex64>> {
    apply(x, Direction::Forward)
}

/// Forward DFT of a real signal.
pub fn dft_forward_real(x: &[f64]) -> Result<Vec<Complex64>> {
    let z: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft_forward(&z)
}

/// Inverse DFT including the `1/M` factor.
pub fn dft_inverse(spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    apply(spectrum, Direction::Inverse)
}

fn rowwise(x: &ComplexMatrix, direction: Direction) -> Result<ComplexMatrix> {
    let m = x.cols();
    if m == 0 {
        return Err(Error::EmptySignal);
    }
    let plan = Plan::new(m, direction);
    let inv = 1.0 / m as f64;
    let mut data = x.as_slice().to_vec();
    // Rows are independent, so the result does not depend on the split.
    data.par_chunks_mut(m).for_each(|row| {
        plan.run(row);
        if direction == Direction::Inverse {
            row.iter_mut().for_each(|z| *z *= inv);
        }
    });
    ComplexMatrix::new(x.rows(), m, data)
}

/// Applies [`dft_forward`] to every row.
pub fn transform_rows(x: &ComplexMatrix) -> Result<SpectrumMatrix> {
    Ok(SpectrumMatrix {
        inner: rowwise(x, Direction::Forward)?,
        source_length: x.cols(),
    })
}

/// Applies [`dft_inverse`] to every row.
pub fn inverse_rows(spectrum: &SpectrumMatrix) -> Result<ComplexMatrix> {
    rowwise(&spectrum.inner, Direction::Inverse)
}

/// Returns `(sum x^2, (1/M) sum |X|^2)`; the two agree under this crate's normalisation.
pub fn parseval_check(x: &[f64]) -> Result<(f64, f64)> {
    let spectrum = dft_forward_real(x)?;
    let time: f64 = x.iter().map(|v| v * v).sum();
    let freq: f64 = spectrum.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64;
    Ok((time, freq))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn dc_and_impulse() {
        let x = vec![c(2.5); 40];
        let spec = dft_forward(&x).unwrap();
        assert!((spec[0] - c(100.0)).norm() < 1e-12);
        assert!(spec[1..].iter().all(|z| z.norm() < 1e-12));

        for m in [5, 64] {
            let mut imp = vec![c(0.0); m];
            imp[0] = c(1.0);
            assert!(dft_forward(&imp).unwrap().iter().all(|z| (z - c(1.0)).norm() < 1e-14));
        }
    }

    #[test]
    fn inverse_examples() {
        assert!(dft_inverse(&[c(0.0); 17]).unwrap().iter().all(|z| z.norm() == 0.0));
        let mut spec = vec![c(0.0); 50];
        spec[0] = c(50.0);
        assert!(dft_inverse(&spec).unwrap().iter().all(|z| (z - c(1.0)).norm() < 1e-14));
    }

    #[test]
    fn empty_signal_is_rejected() {
        assert!(matches!(dft_forward(&[]), Err(Error::EmptySignal)));
        assert!(matches!(dft_inverse(&[]), Err(Error::EmptySignal)));
        assert!(matches!(parseval_check(&[]), Err(Error::EmptySignal)));
    }

    #[test]
    fn parseval_examples() {
        let mut imp = vec![0.0; 9];
        imp[0] = 1.0;
        let (t, f) = parseval_check(&imp).unwrap();
        assert!((t - 1.0).abs() < 1e-14 && (f - 1.0).abs() < 1e-14);
        let (t, f) = parseval_check(&[2.0; 4]).unwrap();
        assert_eq!(t, 16.0);
        assert!((f - 16.0).abs() < 1e-12);
    }

    #[test]
    fn one_row_matrix_matches_vector_transform() {
        let v: Vec<f64> = (0..45).map(|i| (i as f64 * 0.3).sin()).collect();
        let x = ComplexMatrix::from_real(1, 45, &v).unwrap();
        let s = transform_rows(&x).unwrap();
        assert_eq!(s.matrix().row(0), dft_forward_real(&v).unwrap().as_slice());
    }
}
