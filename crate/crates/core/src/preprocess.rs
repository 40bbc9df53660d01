//! Column-wise preprocessing applied before the linear model.
//!
//! Centring commutes with the row-wise Fourier transform, so it never changes
//! an F-ratio. Autoscaling does not commute: it weights every column (time
//! point or frequency bin) by its own inverse standard deviation, and those
//! weights differ between the two domains.

use crate::linalg::ComplexMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preprocessing {
    #[default]
    None,
    /// Subtract each column's mean.
    Center,
    /// Centre, then divide each column by its sample standard deviation.
    /// Columns with zero spread are only centred.
    Autoscale,
}

impl Preprocessing {
    pub fn apply(self, x: &ComplexMatrix) -> ComplexMatrix {
        match self {
            Preprocessing::None => x.clone(),
            Preprocessing::Center => x.mean_center_columns(),
            Preprocessing::Autoscale => autoscale_columns(x),
        }
    }
}

/// Centres every column and scales it to unit variance (`N - 1` divisor).
pub fn autoscale_columns(x: &ComplexMatrix) -> ComplexMatrix {
    let mut out = x.mean_center_columns();
    let (n, m) = out.shape();
    if n < 2 {
        return out;
    }
    let mut var = vec![0.0; m];
    for i in 0..n {
        for (v, z) in var.iter_mut().zip(out.row(i)) {
            *v += z.norm_sqr();
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|&v| {
            let sd = (v / (n - 1) as f64).sqrt();
            if sd > 0.0 {
                1.0 / sd
            } else {
                1.0
            }
        })
        .collect();
    for i in 0..n {
        for (z, s) in out.row_mut(i).iter_mut().zip(&scale) {
            *z *= *s;
        }
    }
    out
}
