//! Simultaneous component analysis of effect matrices.
//!
//! Each effect matrix is factored as `X_A = T_A P_A^H` from its SVD, and the
//! effect-plus-residual matrix is projected onto the loadings,
//! `T*_A = (X_A + E) P_A`. When the analysis ran on spectra, the loadings
//! and reconstructions can be carried back to the time domain through the
//! inverse transform: with `X_k = X_m F`, the model `X_k = T P^H + E` reads
//! `X_m = T (P^H F^-1) + E F^-1` in time.
//!
//! Complex SVD factors are only defined up to a unit phase per component.
//! Components are canonicalised so that `sum_i t_i^2` (without conjugation) is
//! real and positive, which makes the scores as close to real as the data
//! allow, and then signed so the largest-magnitude loading has a positive
//! real part. For real data this reduces to "largest loading positive"; for
//! spectra of real signals the scores and time-domain loadings come out real.

use num_complex::Complex64;

use crate::design::{Factor, Term};
use crate::error::{Error, Result};
use crate::glm::GlmDecomposition;
use crate::linalg::{svd, ComplexMatrix, RealMatrix};
use crate::spectral::{dft_inverse, inverse_rows, SpectrumMatrix};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-9;
/// Fraction of effect sum of squares the default component count must reach.
pub const DEFAULT_EXPLAINED: f64 = 0.95;

#[derive(Debug, Clone)]
pub struct ScaModel {
    pub term: Option<Term>,
    pub name: String,
    /// `T_A`, `N x R`.
    pub scores: ComplexMatrix,
    /// `T*_A = (X_A + E) P_A`, `N x R`.
    pub projected_scores: ComplexMatrix,
    /// `P_A`, `M x R`, orthonormal columns.
    pub loadings: ComplexMatrix,
    /// Squared singular value of each retained component.
    pub explained_ssq: Vec<f64>,
    /// Sum of squares of the effect matrix.
    pub effect_ssq: f64,
}

impl ScaModel {
    pub fn components(&self) -> usize {
        self.loadings.cols()
    }

    /// Percentage of the effect sum of squares per component.
    pub fn explained_percent(&self) -> Vec<f64> {
        self.explained_ssq
            .iter()
            .map(|s| if self.effect_ssq > 0.0 { 100.0 * s / self.effect_ssq } else { 0.0 })
            .collect()
    }
}

fn canonical_phase(t: &[Complex64], p: &[Complex64]) -> Complex64 {
    let w: Complex64 = t.iter().map(|z| z * z).sum();
    let energy: f64 = t.iter().map(|z| z.norm_sqr()).sum();
    let mut phase = if w.norm() > 1e-12 * energy {
        Complex64::from_polar(1.0, -w.arg() / 2.0)
    } else {
        let big = p.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
        if big.norm() > 0.0 {
            big.conj() / big.norm()
        } else {
            Complex64::new(1.0, 0.0)
        }
    };
    let big = p.iter().map(|z| z * phase).max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
    if big.re < 0.0 {
        phase = -phase;
    }
    phase
}

/// Numerical rank of an effect matrix.
pub fn effect_rank(x_a: &ComplexMatrix) -> Result<usize> {
    Ok(svd(x_a)?.rank(RANK_TOLERANCE))
}

/// Smallest component count reaching 95% of the effect sum of squares,
/// capped at `max_components` (normally the term's degrees of freedom).
pub fn default_components(x_a: &ComplexMatrix, max_components: usize) -> Result<usize> {
    let s = svd(x_a)?;
    let rank = s.rank(RANK_TOLERANCE);
    let total: f64 = s.s.iter().map(|v| v * v).sum();
    let mut acc = 0.0;
    let mut r = 0;
    for v in &s.s[..rank] {
        acc += v * v;
        r += 1;
        if acc >= DEFAULT_EXPLAINED * total {
            break;
        }
    }
    Ok(r.min(max_components).min(rank))
}

/// Fits `components` components of `x_a` and projects `x_a + e` onto them.
pub fn sca_fit(x_a: &ComplexMatrix, e: &ComplexMatrix, components: usize) -> Result<ScaModel> {
    if x_a.shape() != e.shape() {
        return Err(Error::DimensionMismatch(format!(
            "effect is {}x{}, residuals are {}x{}",
            x_a.rows(),
            x_a.cols(),
            e.rows(),
            e.cols()
        )));
    }
    let dec = svd(x_a)?;
    let rank = dec.rank(RANK_TOLERANCE);
    if components == 0 || components > rank {
        return Err(Error::RankExceeded {
            requested: components,
            rank,
        });
    }
    let (n, m) = x_a.shape();
    let mut scores = ComplexMatrix::zeros(n, components);
    let mut loadings = ComplexMatrix::zeros(m, components);
    for k in 0..components {
        let t: Vec<Complex64> = (0..n).map(|i| dec.u[(i, k)] * dec.s[k]).collect();
        let p = dec.v.column(k);
        let phase = canonical_phase(&t, &p);
        for (i, z) in t.iter().enumerate() {
            scores[(i, k)] = z * phase;
        }
        for (j, z) in p.iter().enumerate() {
            loadings[(j, k)] = z * phase;
        }
    }
    let projected_scores = x_a.add(e)?.matmul(&loadings)?;
    Ok(ScaModel {
        term: None,
        name: String::new(),
        scores,
        projected_scores,
        loadings,
        explained_ssq: dec.s[..components].iter().map(|s| s * s).collect(),
        effect_ssq: x_a.ssq(),
    })
}

/// SCA of one term of a fitted model; `components = None` picks the default count.
pub fn fit_effect(decomp: &GlmDecomposition, term: Term, components: Option<usize>) -> Result<ScaModel> {
    let effect = decomp.effect(term).ok_or_else(|| Error::UnknownTerm(term.to_string()))?;
    let r = match components {
        Some(r) => r,
        None => default_components(&effect.matrix, effect.dof)?,
    };
    let mut model = sca_fit(&effect.matrix, decomp.residuals(), r)?;
    model.term = Some(term);
    model.name = effect.name.clone();
    Ok(model)
}

/// Real-valued series obtained from a complex quantity, with the size of the
/// imaginary part that was dropped.
#[derive(Debug, Clone)]
pub struct TimeDomainView {
    /// One row per series: components for loadings, samples for effects.
    pub series: RealMatrix,
    /// Largest `|Im|` discarded.
    pub imag_residue: f64,
}

impl TimeDomainView {
    fn from_complex(z: &ComplexMatrix) -> Self {
        Self {
            series: z.re(),
            imag_residue: z.max_abs_imag(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.series.as_slice().iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Mean trace of each level of `factor`, labelled by level name.
    pub fn level_means(&self, factor: &Factor) -> Result<Vec<(String, Vec<f64>)>> {
        if factor.len() != self.series.rows() {
            return Err(Error::LengthMismatch {
                expected: self.series.rows(),
                found: factor.len(),
            });
        }
        let m = self.series.cols();
        let mut out = Vec::new();
        for (level, name) in factor.level_names().iter().enumerate() {
            let members: Vec<usize> = (0..factor.len()).filter(|&i| factor.codes()[i] == level).collect();
            let mut mean = vec![0.0; m];
            for &i in &members {
                mean.iter_mut().zip(self.series.row(i)).for_each(|(a, v)| *a += v);
            }
            mean.iter_mut().for_each(|a| *a /= members.len() as f64);
            out.push((name.clone(), mean));
        }
        Ok(out)
    }
}

/// Time-domain images of the loadings, rows of `P^H F^-1`.
pub fn loadings_to_time(model: &ScaModel, source_length: usize) -> Result<TimeDomainView> {
    let m = model.loadings.rows();
    if m != source_length {
        return Err(Error::LengthMismatch {
            expected: source_length,
            found: m,
        });
    }
    let r = model.components();
    let mut out = ComplexMatrix::zeros(r, m);
    for k in 0..r {
        let row: Vec<Complex64> = model.loadings.column(k).iter().map(|z| z.conj()).collect();
        out.row_mut(k).copy_from_slice(&dft_inverse(&row)?);
    }
    Ok(TimeDomainView::from_complex(&out))
}

/// Inverse transform of a term's reconstructed spectra, optionally with the
/// grand mean added back.
pub fn effect_to_time(decomp: &GlmDecomposition, term: Term, include_mean: bool) -> Result<TimeDomainView> {
    let effect = decomp.effect(term).ok_or_else(|| Error::UnknownTerm(term.to_string()))?;
    let spectra = if include_mean {
        effect.matrix.add(decomp.mean_matrix())?
    } else {
        effect.matrix.clone()
    };
    let time = inverse_rows(&SpectrumMatrix::new(spectra)?)?;
    Ok(TimeDomainView::from_complex(&time))
}

/// Real part of the projected scores plus `|Im|` of each entry.
#[derive(Debug, Clone)]
pub struct RealScores {
    pub scores: RealMatrix,
    pub discarded_imag: RealMatrix,
}

impl RealScores {
    pub fn max_discarded(&self) -> f64 {
        self.discarded_imag.as_slice().iter().fold(0.0, |a, &v| a.max(v))
    }
}

pub fn real_scores(model: &ScaModel) -> RealScores {
    let t = &model.projected_scores;
    let imag = t.as_slice().iter().map(|z| z.im.abs()).collect();
    RealScores {
        scores: t.re(),
        discarded_imag: RealMatrix::new(t.rows(), t.cols(), imag).expect("finite"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn rank_r(rows: usize, cols: usize, r: usize, seed: u64) -> ComplexMatrix {
        random(rows, r, seed).matmul(&random(r, cols, seed + 100)).unwrap()
    }

    #[test]
    fn zero_residual_projection_equals_scores() {
        let x = rank_r(8, 20, 2, 1);
        let model = sca_fit(&x, &ComplexMatrix::zeros(8, 20), 2).unwrap();
        assert!(model.projected_scores.ssq_diff(&model.scores).sqrt() < 1e-10);
    }

    #[test]
    fn rank_one_recovery() {
        let x = rank_r(6, 15, 1, 2);
        let model = sca_fit(&x, &ComplexMatrix::zeros(6, 15), 1).unwrap();
        let rebuilt = model.scores.matmul(&model.loadings.hermitian()).unwrap();
        assert!(rebuilt.ssq_diff(&x).sqrt() < 1e-9);
        assert!(matches!(
            sca_fit(&x, &ComplexMatrix::zeros(6, 15), 2),
            Err(Error::RankExceeded { requested: 2, rank: 1 })
        ));
    }

    #[test]
    fn truncation_matches_leading_singular_values() {
        let x = rank_r(7, 12, 3, 3);
        let zero = ComplexMatrix::zeros(7, 12);
        let full = sca_fit(&x, &zero, 3).unwrap();
        let rebuilt = full.scores.matmul(&full.loadings.hermitian()).unwrap();
        assert!(rebuilt.ssq_diff(&x).sqrt() < 1e-9);
        assert!((full.scores.ssq() - x.ssq()).abs() < 1e-9 * x.ssq());

        let two = sca_fit(&x, &zero, 2).unwrap();
        let s = svd(&x).unwrap().s;
        let rebuilt = two.scores.matmul(&two.loadings.hermitian()).unwrap();
        assert!((rebuilt.ssq() - (s[0] * s[0] + s[1] * s[1])).abs() < 1e-9 * x.ssq());
        assert!(two.explained_ssq[0] >= two.explained_ssq[1]);
        let eye = ComplexMatrix::identity(2);
        assert!(two.loadings.hermitian().matmul(&two.loadings).unwrap().ssq_diff(&eye).sqrt() < 1e-9);
    }

    #[test]
    fn projection_difference_is_residual_projection() {
        let x = rank_r(6, 10, 2, 4);
        let e = random(6, 10, 5);
        let model = sca_fit(&x, &e, 2).unwrap();
        let diff = model.projected_scores.sub(&model.scores).unwrap();
        let ep = e.matmul(&model.loadings).unwrap();
        assert!(diff.ssq_diff(&ep).sqrt() < 1e-10);
    }

    #[test]
    fn real_data_has_no_imaginary_scores_and_positive_peak_loading() {
        let x = rank_r(6, 9, 2, 6).re().to_complex();
        let model = sca_fit(&x, &ComplexMatrix::zeros(6, 9), 2).unwrap();
        assert_eq!(real_scores(&model).max_discarded(), 0.0);
        for k in 0..2 {
            let col = model.loadings.column(k);
            let big = col.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            assert!(big.re > 0.0 && big.im == 0.0);
        }
    }

    #[test]
    fn dc_loading_is_constant_in_time() {
        let m = 16;
        let mut loadings = ComplexMatrix::zeros(m, 1);
        loadings[(0, 0)] = Complex64::new(1.0, 0.0);
        let model = ScaModel {
            term: None,
            name: String::new(),
            scores: ComplexMatrix::zeros(3, 1),
            projected_scores: ComplexMatrix::zeros(3, 1),
            loadings,
            explained_ssq: vec![1.0],
            effect_ssq: 1.0,
        };
        let view = loadings_to_time(&model, m).unwrap();
        assert!(view.series.row(0).iter().all(|v| (v - 1.0 / m as f64).abs() < 1e-15));
        assert!(matches!(loadings_to_time(&model, m + 1), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn default_component_count() {
        // One dominant direction carrying > 95% of the energy.
        let a = rank_r(6, 10, 1, 7);
        let b = rank_r(6, 10, 1, 8).scale(Complex64::new(0.01, 0.0));
        let x = a.add(&b).unwrap();
        assert_eq!(default_components(&x, 5).unwrap(), 1);
        let x = rank_r(6, 10, 3, 9);
        assert!(default_components(&x, 2).unwrap() <= 2);
        assert_eq!(default_components(&ComplexMatrix::zeros(4, 4), 3).unwrap(), 0);
    }
}
