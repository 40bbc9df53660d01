//! Dense complex matrices.
//!
//! [`ComplexMatrix`] is the single data carrier of the crate: time-domain
//! signals, their spectra, design matrices, coefficients and residuals are all
//! stored in it. Real data is the special case with zero imaginary parts.
//!
//! The decompositions here are deliberately small: a one-sided Jacobi SVD and
//! the pseudoinverse built on it. Matrices in this domain are short and wide
//! (tens of samples, thousands of frequency bins), which Jacobi handles well
//! once it is run on the narrow side.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Sweep cap for the Jacobi SVD.
pub const SVD_MAX_SWEEPS: usize = 60;
/// Relative off-diagonal threshold below which a column pair counts as orthogonal.
pub const SVD_TOLERANCE: f64 = 1e-12;

/// Row-major dense matrix of complex doubles.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            let row: Vec<String> = self
                .row(i)
                .iter()
                .take(8)
                .map(|z| format!("{:.4}{:+.4}i", z.re, z.im))
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, rejecting non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite {
                row: idx / cols.max(1),
                col: idx % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Embeds real row-major data with zero imaginary part.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("rows of unequal length".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// True when every imaginary part is exactly zero.
    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// Real parts as a [`RealMatrix`].
    pub fn re(&self) -> RealMatrix {
        RealMatrix::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|z| z.re).collect())
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Real-valued sum of squares, `Tr(X X^H)`.
    ///
    /// The trace is accumulated as a complex number so the imaginary residue
    /// can be checked before it is dropped; each diagonal term is `x x^H` of a
    /// single row.
    pub fn ssq(&self) -> f64 {
        let mut trace = ZERO;
        for i in 0..self.rows {
            for z in self.row(i) {
                trace += z * z.conj();
            }
        }
        debug_assert!(
            trace.im.abs() <= 1e-12 * trace.re.abs().max(f64::MIN_POSITIVE),
            "imaginary residue {} in trace {}",
            trace.im,
            trace.re
        );
        trace.re
    }

    /// Squared Frobenius norm of `self - other`.
    pub fn ssq_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum()
    }

    /// Relative Frobenius distance `||self - other|| / max(||other||, tiny)`.
    pub fn rel_error(&self, other: &Self) -> f64 {
        let denom = other.ssq().sqrt().max(f64::MIN_POSITIVE);
        self.ssq_diff(other).sqrt() / denom
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, a) in self.row(i).iter().enumerate() {
                if *a == ZERO {
                    continue;
                }
                for (d, b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    fn zip_with(&self, other: &Self, op: &str, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "cannot {op} {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_vec_unchecked(self.rows, self.cols, data))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "subtract", |a, b| a - b)
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|z| z * factor).collect())
    }

    /// Applies `f` to every entry. `f` must map finite values to finite values.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|&z| f(z)).collect())
    }

    pub fn column_means(&self) -> Vec<Complex64> {
        let mut means = vec![ZERO; self.cols];
        if self.rows == 0 {
            return means;
        }
        for i in 0..self.rows {
            for (m, z) in means.iter_mut().zip(self.row(i)) {
                *m += z;
            }
        }
        let n = self.rows as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Subtracts each column's mean from that column.
    pub fn mean_center_columns(&self) -> Self {
        let means = self.column_means();
        let mut out = self.clone();
        for i in 0..out.rows {
            for (z, m) in out.row_mut(i).iter_mut().zip(&means) {
                *z -= m;
            }
        }
        out
    }

    /// Row `i` of the result is row `order[i]` of `self`.
    pub fn select_rows(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(order.len() * self.cols);
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        Self::from_vec_unchecked(order.len(), self.cols, data)
    }

    /// Contiguous block of columns.
    pub fn select_columns(&self, range: std::ops::Range<usize>) -> Self {
        let width = range.len();
        let mut data = Vec::with_capacity(self.rows * width);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[range.clone()]);
        }
        Self::from_vec_unchecked(self.rows, width, data)
    }

    /// Contiguous block of rows.
    pub fn select_row_range(&self, range: std::ops::Range<usize>) -> Self {
        let data = self.data[range.start * self.cols..range.end * self.cols].to_vec();
        Self::from_vec_unchecked(range.len(), self.cols, data)
    }

    /// `X X^H`, computed on the upper triangle and mirrored.
    pub fn gram(&self) -> Self {
        let n = self.rows;
        let mut g = Self::zeros(n, n);
        for i in 0..n {
            let ri = self.row(i);
            for j in i..n {
                let rj = self.row(j);
                let mut acc = ZERO;
                for (a, b) in ri.iter().zip(rj) {
                    acc += a * b.conj();
                }
                g.data[i * n + j] = acc;
                g.data[j * n + i] = acc.conj();
            }
        }
        g
    }

    /// Numerical rank: singular values above `tol * s_max`.
    pub fn rank(&self, tol: f64) -> Result<usize> {
        let svd = svd(self)?;
        Ok(svd.rank(tol))
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Row-major matrix of doubles, used for real-valued views and file IO.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: idx / cols.max(1),
                col: idx % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Fills entry `(i, j)` with `f(i, j)`; fails on non-finite values.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let data = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| f(i, j)).collect();
        Self::new(rows, cols, data)
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::RaggedRows {
                row: i,
                expected: cols,
                found: r.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec_unchecked(rows, cols, vec![0.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_complex(&self) -> ComplexMatrix {
        ComplexMatrix::from_vec_unchecked(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }
}

impl Index<(usize, usize)> for RealMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RealMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Thin singular value decomposition `X = U diag(S) V^H`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: ComplexMatrix,
    pub s: Vec<f64>,
    pub v: ComplexMatrix,
}

impl SvdResult {
    pub fn rank(&self, tol: f64) -> usize {
        let cutoff = tol * self.s.first().copied().unwrap_or(0.0);
        self.s.iter().filter(|&&s| s > cutoff).count()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let (n, r) = self.u.shape();
        let m = self.v.rows();
        ComplexMatrix::from_fn(n, m, |i, j| {
            (0..r).map(|k| self.u[(i, k)] * self.s[k] * self.v[(j, k)].conj()).sum()
        })
    }
}

/// Thin SVD by one-sided (Hestenes) Jacobi.
///
/// Columns of the taller orientation are orthogonalised pairwise with complex
/// plane rotations until every pair satisfies
/// `|a_p^H a_q| <= 1e-12 * ||a_p|| ||a_q||`, ignoring columns at round-off
/// level. Wide inputs are decomposed
/// through their Hermitian so the rotation count scales with the short side.
pub fn svd(x: &ComplexMatrix) -> Result<SvdResult> {
    if x.rows == 0 || x.cols == 0 {
        return Err(Error::DimensionMismatch("SVD of an empty matrix".into()));
    }
    if x.rows >= x.cols {
        jacobi_tall(x)
    } else {
        let t = jacobi_tall(&x.hermitian())?;
        Ok(SvdResult {
            u: t.v,
            s: t.s,
            v: t.u,
        })
    }
}

fn jacobi_tall(x: &ComplexMatrix) -> Result<SvdResult> {
    let (m, n) = x.shape();
    // Column-major working copies keep each column contiguous.
    let mut a: Vec<Vec<Complex64>> = (0..n).map(|j| x.column(j)).collect();
    let mut v: Vec<Vec<Complex64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { ONE } else { ZERO }).collect())
        .collect();
    let mut norms: Vec<f64> = a.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum()).collect();
    // Columns this small are round-off left over from rank deficiency; their
    // pairwise angles are noise and would never pass the relative test.
    let tiny = norms.iter().sum::<f64>() * f64::EPSILON * f64::EPSILON * m as f64;

    let mut converged = n < 2;
    for _ in 0..SVD_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha <= tiny || beta <= tiny {
                    continue;
                }
                let gamma: Complex64 = a[p].iter().zip(&a[q]).map(|(ap, aq)| ap.conj() * aq).sum();
                let g = gamma.norm();
                if g <= SVD_TOLERANCE * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = a.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s, phase);
                let (lo, hi) = v.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s, phase);
                norms[p] = a[p].iter().map(|z| z.norm_sqr()).sum();
                norms[q] = a[q].iter().map(|z| z.norm_sqr()).sum();
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            sweeps: SVD_MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sigma: Vec<f64> = norms.iter().map(|s| s.sqrt()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let s_max = sigma[order[0]];
    let negligible = s_max * f64::EPSILON * (m.max(n) as f64);

    let mut u_cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut s_out = Vec::with_capacity(n);
    let mut v_cols = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        let sj = sigma[j];
        s_out.push(sj);
        v_cols.push(v[j].clone());
        if sj > negligible {
            u_cols.push(a[j].iter().map(|z| z / sj).collect());
        } else {
            u_cols.push(vec![ZERO; m]);
            pending.push(slot);
        }
    }
    // Null-space directions of U are arbitrary; fill them with an
    // orthonormal completion so U^H U = I holds regardless of rank.
    complete_orthonormal(&mut u_cols, &pending, m);

    Ok(SvdResult {
        u: columns_to_matrix(&u_cols, m),
        s: s_out,
        v: columns_to_matrix(&v_cols, n),
    })
}

#[inline]
fn rotate(p: &mut [Complex64], q: &mut [Complex64], c: f64, s: f64, phase: Complex64) {
    let w = phase.conj();
    for (xp, xq) in p.iter_mut().zip(q.iter_mut()) {
        let qp = *xq * w;
        let new_p = *xp * c - qp * s;
        let new_q = *xp * s + qp * c;
        *xp = new_p;
        *xq = new_q;
    }
}

fn complete_orthonormal(cols: &mut [Vec<Complex64>], pending: &[usize], m: usize) {
    let mut candidate = 0;
    for &slot in pending {
        while candidate < m {
            let mut e = vec![ZERO; m];
            e[candidate] = ONE;
            candidate += 1;
            // Two passes of Gram-Schmidt against everything already in place.
            for _ in 0..2 {
                for (k, col) in cols.iter().enumerate() {
                    if k == slot || pending.contains(&k) && col.iter().all(|z| *z == ZERO) {
                        continue;
                    }
                    let proj: Complex64 = col.iter().zip(&e).map(|(c, x)| c.conj() * x).sum();
                    e.iter_mut().zip(col).for_each(|(x, c)| *x -= proj * c);
                }
            }
            let norm = e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-8 {
                cols[slot] = e.into_iter().map(|z| z / norm).collect();
                break;
            }
        }
    }
}

fn columns_to_matrix(cols: &[Vec<Complex64>], rows: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Default relative cutoff used by [`pinv_default`].
pub fn default_pinv_tol(x: &ComplexMatrix) -> f64 {
    1e-12 * x.rows.max(x.cols) as f64
}

/// Moore-Penrose pseudoinverse; singular values at or below `tol * s_max` are dropped.
pub fn pinv(x: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    let svd = svd(x)?;
    let cutoff = tol * svd.s.first().copied().unwrap_or(0.0);
    let (m, n) = x.shape();
    let mut out = ComplexMatrix::zeros(n, m);
    for (k, &s) in svd.s.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..n {
            let vik = svd.v[(i, k)] * inv;
            let dst = out.row_mut(i);
            for (j, d) in dst.iter_mut().enumerate() {
                *d += vik * svd.u[(j, k)].conj();
            }
        }
    }
    Ok(out)
}

pub fn pinv_default(x: &ComplexMatrix) -> Result<ComplexMatrix> {
    pinv(x, default_pinv_tol(x))
}
