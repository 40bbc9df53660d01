//! General linear model fitting and permutation inference.
//!
//! The coefficients are the least-squares solution `Theta = pinv(D) X`; the
//! reconstructed matrix of a term is `D_A Theta_A`, restricted to that term's
//! column block. Sums of squares are `Tr(X X^H)`, so complex data yields real
//! F-ratios.
//!
//! Permutation tests shuffle whole rows of `X` against a fixed `D`. Because
//! every reconstructed matrix is a fixed `N x N` operator applied to the
//! permuted rows, the sums of squares of a permutation only depend on the
//! Gram matrix `X X^H` re-indexed by that permutation; the test precomputes
//! the Gram matrix once and evaluates each permutation in `O(N^2)` per term.

use std::fmt;

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::design::{DesignMatrix, PermutationStream, Term};
use crate::error::{Error, Result};
use crate::linalg::{default_pinv_tol, pinv, ComplexMatrix, RealMatrix};

/// Default number of permutations.
pub const DEFAULT_PERMUTATIONS: usize = 1000;

/// Relative tolerance under which a permuted F counts as a tie with the nominal F.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Residual sums of squares below this fraction of the total count as zero.
pub const ZERO_RESIDUAL: f64 = 1e-24;

/// Non-fatal conditions met while fitting or testing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    /// Cells of the factor cross have unequal counts; effect sums of squares
    /// are not guaranteed to add up.
    Unbalanced,
    RankDeficient { rank: usize, columns: usize },
    /// A design cell had no observed value for a variable during imputation;
    /// the variable's grand mean was used instead.
    EmptyCell { variable: usize, cell: usize },
    /// Same as `EmptyCell`, summed over all permutations.
    EmptyCellsInPermutations(usize),
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::Unbalanced => write!(f, "design is unbalanced; sums of squares are not additive"),
            Warning::RankDeficient { rank, columns } => {
                write!(f, "design matrix has rank {rank} with {columns} columns")
            }
            Warning::EmptyCell { variable, cell } => write!(
                f,
                "variable {variable} has no observed value in cell {cell}; grand mean imputed"
            ),
            Warning::EmptyCellsInPermutations(n) => {
                write!(f, "{n} empty cells met across permutations; grand means imputed")
            }
        }
    }
}

/// Reconstructed matrix of one model term.
#[derive(Debug, Clone)]
pub struct EffectMatrix {
    pub term: Term,
    pub name: String,
    pub dof: usize,
    pub matrix: ComplexMatrix,
}

/// Result of fitting `X = D Theta + E`.
#[derive(Debug, Clone)]
pub struct GlmDecomposition {
    theta_hat: ComplexMatrix,
    grand_mean_row: Vec<Complex64>,
    mean_matrix: ComplexMatrix,
    effects: Vec<EffectMatrix>,
    residuals: ComplexMatrix,
    residual_dof: usize,
    total_ssq: f64,
    warnings: Vec<Warning>,
}

impl GlmDecomposition {
    /// Coefficients, `F x M`.
    pub fn theta_hat(&self) -> &ComplexMatrix {
        &self.theta_hat
    }

    /// Intercept coefficients `mu` (one per variable).
    pub fn grand_mean_row(&self) -> &[Complex64] {
        &self.grand_mean_row
    }

    /// `1 mu`, the mean term's reconstruction.
    pub fn mean_matrix(&self) -> &ComplexMatrix {
        &self.mean_matrix
    }

    /// Effect reconstructions in design order (mean excluded).
    pub fn effects(&self) -> &[EffectMatrix] {
        &self.effects
    }

    pub fn effect(&self, term: Term) -> Option<&EffectMatrix> {
        self.effects.iter().find(|e| e.term == term)
    }

    pub fn effect_by_name(&self, name: &str) -> Option<&EffectMatrix> {
        self.effects.iter().find(|e| e.name == name)
    }

    pub fn residuals(&self) -> &ComplexMatrix {
        &self.residuals
    }

    pub fn residual_dof(&self) -> usize {
        self.residual_dof
    }

    pub fn total_ssq(&self) -> f64 {
        self.total_ssq
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    /// `1 mu + sum of effects + E`, which equals the fitted data.
    fn require_residual(&self) -> Result<()> {
        if self.residual_dof == 0 || self.residuals.ssq() <= ZERO_RESIDUAL * self.total_ssq {
            return Err(Error::ZeroResidual);
        }
        Ok(())
    }

    pub fn reassemble(&self) -> ComplexMatrix {
        let mut out = self.mean_matrix.add(&self.residuals).expect("conformable");
        for e in &self.effects {
            out = out.add(&e.matrix).expect("conformable");
        }
        out
    }
}

/// Fits the linear model by pseudoinverse.
pub fn fit(x: &ComplexMatrix, design: &DesignMatrix) -> Result<GlmDecomposition> {
    let d = design.matrix();
    if x.rows() != d.rows() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} rows, design has {}",
            x.rows(),
            d.rows()
        )));
    }
    let mut warnings = Vec::new();
    if !design.is_balanced() {
        warnings.push(Warning::Unbalanced);
    }
    let rank = d.rank(default_pinv_tol(d))?;
    if rank < d.cols() {
        warn!("design matrix is rank deficient ({rank} of {})", d.cols());
        warnings.push(Warning::RankDeficient {
            rank,
            columns: d.cols(),
        });
    }
    let theta_hat = pinv(d, default_pinv_tol(d))?.matmul(x)?;

    let reconstruct = |cols: std::ops::Range<usize>| -> Result<ComplexMatrix> {
        d.select_columns(cols.clone()).matmul(&theta_hat.select_row_range(cols))
    };
    let mut fitted = ComplexMatrix::zeros(x.rows(), x.cols());
    let mut mean_matrix = None;
    let mut effects = Vec::new();
    for block in design.blocks() {
        let m = reconstruct(block.columns.clone())?;
        fitted = fitted.add(&m)?;
        if block.term == Term::Mean {
            mean_matrix = Some(m);
        } else {
            effects.push(EffectMatrix {
                term: block.term,
                name: block.name.clone(),
                dof: block.dof,
                matrix: m,
            });
        }
    }
    let residuals = x.sub(&fitted)?;
    Ok(GlmDecomposition {
        grand_mean_row: theta_hat.row(0).to_vec(),
        theta_hat,
        mean_matrix: mean_matrix.expect("design always has a mean block"),
        effects,
        residuals,
        residual_dof: x.rows().saturating_sub(rank),
        total_ssq: x.ssq(),
        warnings,
    })
}

/// `(SS_A / nu1) / (SS_E / nu2)` for one term.
pub fn f_ratio(decomp: &GlmDecomposition, term: Term) -> Result<f64> {
    let effect = decomp.effect(term).ok_or_else(|| Error::UnknownTerm(term.to_string()))?;
    decomp.require_residual()?;
    let ss_e = decomp.residuals.ssq();
    Ok((effect.matrix.ssq() / effect.dof as f64) / (ss_e / decomp.residual_dof as f64))
}

/// Which rows of an [`AnovaTable`] a row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Mean,
    Effect(Term),
    Residuals,
    Total,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaRow {
    pub term: String,
    pub kind: RowKind,
    pub sum_sq: f64,
    pub perc_sum_sq: f64,
    pub df: usize,
    pub mean_sq: f64,
    pub f: Option<f64>,
    pub p_value: Option<f64>,
}

/// Sums of squares, F-ratios and permutation p-values per term.
#[derive(Debug, Clone, PartialEq)]
pub struct AnovaTable {
    pub rows: Vec<AnovaRow>,
    /// Number of permutations actually evaluated.
    pub permutations: usize,
    pub exhaustive: bool,
    pub warnings: Vec<Warning>,
}

impl AnovaTable {
    pub fn row(&self, term: &str) -> Option<&AnovaRow> {
        self.rows.iter().find(|r| r.term == term)
    }

    pub fn p_value(&self, term: &str) -> Option<f64> {
        self.row(term).and_then(|r| r.p_value)
    }

    pub fn f(&self, term: &str) -> Option<f64> {
        self.row(term).and_then(|r| r.f)
    }

    pub fn effect_rows(&self) -> impl Iterator<Item = &AnovaRow> {
        self.rows.iter().filter(|r| matches!(r.kind, RowKind::Effect(_)))
    }

    /// Terms whose p-value is below `alpha`.
    pub fn significant(&self, alpha: f64) -> Vec<Term> {
        self.effect_rows()
            .filter(|r| r.p_value.is_some_and(|p| p < alpha))
            .filter_map(|r| match r.kind {
                RowKind::Effect(t) => Some(t),
                _ => None,
            })
            .collect()
    }
}

/// Settings shared by [`permutation_test`] and [`pcmr_permutation_test`].
#[derive(Debug, Clone)]
pub struct PermutationOptions {
    pub permutations: usize,
    pub seed: u64,
    /// Terms to test; `None` tests every effect term.
    pub terms: Option<Vec<Term>>,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        Self {
            permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
            terms: None,
        }
    }
}

impl PermutationOptions {
    pub fn new(permutations: usize, seed: u64) -> Self {
        Self {
            permutations,
            seed,
            terms: None,
        }
    }
}

/// Sums of squares as quadratic forms in the (permuted) Gram matrix.
struct GramStatistic {
    /// `(dof, H_A^H H_A)` per tested term.
    terms: Vec<(usize, ComplexMatrix)>,
    residual: ComplexMatrix,
    residual_dof: usize,
}

impl GramStatistic {
    fn new(design: &DesignMatrix, tested: &[Term], residual_dof: usize) -> Result<Self> {
        let d = design.matrix();
        let n = d.rows();
        let p = pinv(d, default_pinv_tol(d))?;
        let hat = |cols: std::ops::Range<usize>| -> Result<ComplexMatrix> {
            d.select_columns(cols.clone()).matmul(&p.select_row_range(cols))
        };
        let mut terms = Vec::with_capacity(tested.len());
        for &t in tested {
            let block = design.block(t).ok_or_else(|| Error::UnknownTerm(t.to_string()))?;
            let h = hat(block.columns.clone())?;
            terms.push((block.dof, h.hermitian().matmul(&h)?));
        }
        let r = ComplexMatrix::identity(n).sub(&hat(0..d.cols())?)?;
        Ok(Self {
            terms,
            residual: r.hermitian().matmul(&r)?,
            residual_dof,
        })
    }

    /// `Re Tr(Q G_p)` with `G_p[i][j] = G[p(i)][p(j)]`.
    fn quadratic(q: &ComplexMatrix, g: &ComplexMatrix, p: &[usize]) -> f64 {
        let n = p.len();
        let mut acc = 0.0;
        for i in 0..n {
            let gi = g.row(p[i]);
            for j in 0..n {
                let qji = q[(j, i)];
                let gij = gi[p[j]];
                acc += qji.re * gij.re - qji.im * gij.im;
            }
        }
        acc
    }

    fn f_ratios(&self, g: &ComplexMatrix, p: &[usize]) -> Vec<f64> {
        let ss_e = Self::quadratic(&self.residual, g, p);
        let denom = ss_e / self.residual_dof as f64;
        self.terms
            .iter()
            .map(|(dof, q)| (Self::quadratic(q, g, p) / *dof as f64) / denom)
            .collect()
    }
}

fn exceeds(permuted: f64, nominal: f64) -> bool {
    permuted >= nominal - TIE_TOLERANCE * nominal.abs()
}

fn resolve_terms(design: &DesignMatrix, requested: &Option<Vec<Term>>) -> Result<Vec<Term>> {
    match requested {
        None => Ok(design.effect_blocks().map(|b| b.term).collect()),
        Some(terms) => {
            for &t in terms {
                if t == Term::Mean || design.block(t).is_none() {
                    return Err(Error::UnknownTerm(t.to_string()));
                }
            }
            Ok(terms.clone())
        }
    }
}

fn build_table(
    decomp: &GlmDecomposition,
    n: usize,
    tested: &[Term],
    p_values: &[f64],
    stream: &PermutationStream,
    mut warnings: Vec<Warning>,
) -> AnovaTable {
    let total = decomp.total_ssq;
    let perc = |ss: f64| if total > 0.0 { 100.0 * ss / total } else { 0.0 };
    let ss_e = decomp.residuals.ssq();
    let ms_e = ss_e / decomp.residual_dof as f64;

    let mut rows = Vec::new();
    let ss_mean = decomp.mean_matrix.ssq();
    rows.push(AnovaRow {
        term: "Mean".into(),
        kind: RowKind::Mean,
        sum_sq: ss_mean,
        perc_sum_sq: perc(ss_mean),
        df: 1,
        mean_sq: ss_mean,
        f: None,
        p_value: None,
    });
    for e in &decomp.effects {
        let ss = e.matrix.ssq();
        let ms = ss / e.dof as f64;
        let p_value = tested.iter().position(|&t| t == e.term).map(|k| p_values[k]);
        rows.push(AnovaRow {
            term: e.name.clone(),
            kind: RowKind::Effect(e.term),
            sum_sq: ss,
            perc_sum_sq: perc(ss),
            df: e.dof,
            mean_sq: ms,
            f: Some(ms / ms_e),
            p_value,
        });
    }
    rows.push(AnovaRow {
        term: "Residuals".into(),
        kind: RowKind::Residuals,
        sum_sq: ss_e,
        perc_sum_sq: perc(ss_e),
        df: decomp.residual_dof,
        mean_sq: ms_e,
        f: None,
        p_value: None,
    });
    rows.push(AnovaRow {
        term: "Total".into(),
        kind: RowKind::Total,
        sum_sq: total,
        perc_sum_sq: perc(total),
        df: n,
        mean_sq: total / n as f64,
        f: None,
        p_value: None,
    });
    for w in &decomp.warnings {
        if !warnings.contains(w) {
            warnings.push(w.clone());
        }
    }
    AnovaTable {
        rows,
        permutations: stream.len(),
        exhaustive: stream.is_exhaustive(),
        warnings,
    }
}

fn check_fit(x: &ComplexMatrix, design: &DesignMatrix, opts: &PermutationOptions) -> Result<()> {
    if x.rows() != design.n_samples() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} rows, design has {}",
            x.rows(),
            design.n_samples()
        )));
    }
    if opts.permutations == 0 {
        return Err(Error::ConfigInvalid("at least one permutation is required".into()));
    }
    if x.rows() < 2 {
        return Err(Error::DimensionMismatch("at least two samples are required".into()));
    }
    Ok(())
}

/// Counts, per tested term, the permutations whose F reaches the nominal F.
fn count_exceedances(
    stream: &PermutationStream,
    nominal: &[f64],
    per_permutation: impl Fn(&[usize]) -> Vec<f64> + Sync,
) -> Vec<usize> {
    (0..stream.len())
        .into_par_iter()
        .map(|i| {
            let f = per_permutation(&stream.get(i));
            f.iter().zip(nominal).map(|(&fp, &f0)| usize::from(exceeds(fp, f0))).collect::<Vec<_>>()
        })
        .reduce(
            || vec![0; nominal.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

fn p_values(counts: &[usize], permutations: usize) -> Vec<f64> {
    counts
        .iter()
        .map(|&c| (c + 1) as f64 / (permutations + 1) as f64)
        .collect()
}

/// Permutation test of every requested term.
///
/// `p = (#{perm : F_perm >= F} + 1) / (Pi + 1)`. When `N! - 1` does not exceed
/// the requested count, every non-identity permutation is evaluated once
/// instead and `Pi = N! - 1`.
pub fn permutation_test(x: &ComplexMatrix, design: &DesignMatrix, opts: &PermutationOptions) -> Result<AnovaTable> {
    check_fit(x, design, opts)?;
    let tested = resolve_terms(design, &opts.terms)?;
    let decomp = fit(x, design)?;
    decomp.require_residual()?;
    let stat = GramStatistic::new(design, &tested, decomp.residual_dof)?;
    // Column offsets are annihilated by every hat operator, so the centred
    // Gram matrix gives the same quadratic forms with less cancellation.
    let g = x.mean_center_columns().gram();
    let identity: Vec<usize> = (0..x.rows()).collect();
    let nominal = stat.f_ratios(&g, &identity);

    let stream = PermutationStream::for_test(x.rows(), opts.permutations, opts.seed);
    let counts = count_exceedances(&stream, &nominal, |p| stat.f_ratios(&g, p));
    let p = p_values(&counts, stream.len());
    Ok(build_table(&decomp, x.rows(), &tested, &p, &stream, Vec::new()))
}

/// Boolean matrix flagging missing entries (`true` = missing).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingMask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl MissingMask {
    pub fn new(rows: usize, cols: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} mask entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn none(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, missing: bool) {
        self.data[i * self.cols + j] = missing;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    pub fn density(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.data.len() as f64
        }
    }

    pub fn select_rows(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(order.len() * self.cols);
        for &i in order {
            data.extend_from_slice(&self.data[i * self.cols..(i + 1) * self.cols]);
        }
        Self {
            rows: order.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Flags exact zeros as missing.
pub fn zeros_to_missing(x: &RealMatrix) -> (RealMatrix, MissingMask) {
    let data = x.as_slice().iter().map(|&v| v == 0.0).collect();
    (x.clone(), MissingMask::new(x.rows(), x.cols(), data).expect("same shape"))
}

/// Output of [`impute_cell_means`].
#[derive(Debug, Clone)]
pub struct Imputation {
    pub matrix: ComplexMatrix,
    /// `(variable, cell)` pairs that fell back to the variable's grand mean.
    pub empty_cells: Vec<(usize, usize)>,
}

/// Replaces each missing entry with the mean of the observed entries sharing
/// its design cell. Cells with nothing observed fall back to the grand mean of
/// the observed entries of that variable.
pub fn impute_cell_means(x: &ComplexMatrix, mask: &MissingMask, cells: &[usize]) -> Result<Imputation> {
    if mask.shape() != x.shape() || cells.len() != x.rows() {
        return Err(Error::DimensionMismatch("mask, data and cells disagree".into()));
    }
    let n_cells = cells.iter().max().map_or(0, |c| c + 1);
    let mut out = x.clone();
    let mut empty_cells = Vec::new();
    let mut sums = vec![Complex64::new(0.0, 0.0); n_cells];
    let mut counts = vec![0usize; n_cells];
    for j in 0..x.cols() {
        if (0..x.rows()).all(|i| !mask.get(i, j)) {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = Complex64::new(0.0, 0.0));
        counts.iter_mut().for_each(|c| *c = 0);
        for i in 0..x.rows() {
            if !mask.get(i, j) {
                sums[cells[i]] += x[(i, j)];
                counts[cells[i]] += 1;
            }
        }
        let observed: usize = counts.iter().sum();
        if observed == 0 {
            return Err(Error::AllMissing { variable: j });
        }
        let grand = sums.iter().sum::<Complex64>() / observed as f64;
        for i in 0..x.rows() {
            if !mask.get(i, j) {
                continue;
            }
            let c = cells[i];
            out[(i, j)] = if counts[c] > 0 {
                sums[c] / counts[c] as f64
            } else {
                if !empty_cells.contains(&(j, c)) {
                    empty_cells.push((j, c));
                }
                grand
            };
        }
    }
    Ok(Imputation { matrix: out, empty_cells })
}

/// Permutation test with permutational conditional mean replacement.
///
/// Missing entries are imputed with design-cell means before the nominal fit.
/// In every permutation the mask travels with its data rows while the design
/// (and therefore the cell structure) stays put, and imputation is redone
/// against the shifted data before the F-ratios are computed.
pub fn pcmr_permutation_test(
    x: &ComplexMatrix,
    mask: &MissingMask,
    design: &DesignMatrix,
    opts: &PermutationOptions,
) -> Result<AnovaTable> {
    check_fit(x, design, opts)?;
    if mask.shape() != x.shape() {
        return Err(Error::DimensionMismatch("mask shape differs from data".into()));
    }
    if mask.count() == 0 {
        // Imputation is the identity; this is exactly the plain test.
        return permutation_test(x, design, opts);
    }
    let tested = resolve_terms(design, &opts.terms)?;
    let cells = design.cells();
    let nominal_imp = impute_cell_means(x, mask, cells)?;
    let mut warnings: Vec<Warning> = nominal_imp
        .empty_cells
        .iter()
        .map(|&(variable, cell)| Warning::EmptyCell { variable, cell })
        .collect();
    for w in &warnings {
        warn!("{w}");
    }
    let decomp = fit(&nominal_imp.matrix, design)?;
    decomp.require_residual()?;
    let stat = GramStatistic::new(design, &tested, decomp.residual_dof)?;
    let offset = nominal_imp.matrix.column_means();
    let n = x.rows();
    let identity: Vec<usize> = (0..n).collect();

    let statistic = |imputed: &ComplexMatrix| -> Vec<f64> {
        let mut centred = imputed.clone();
        for i in 0..n {
            centred.row_mut(i).iter_mut().zip(&offset).for_each(|(z, m)| *z -= m);
        }
        stat.f_ratios(&centred.gram(), &identity)
    };
    let nominal = statistic(&nominal_imp.matrix);

    let stream = PermutationStream::for_test(n, opts.permutations, opts.seed);
    let results: Vec<Result<(Vec<bool>, usize)>> = (0..stream.len())
        .into_par_iter()
        .map(|i| {
            let p = stream.get(i);
            let imp = impute_cell_means(&x.select_rows(&p), &mask.select_rows(&p), cells)?;
            let f = statistic(&imp.matrix);
            Ok((f.iter().zip(&nominal).map(|(&a, &b)| exceeds(a, b)).collect(), imp.empty_cells.len()))
        })
        .collect();
    let mut counts = vec![0usize; tested.len()];
    let mut empty_total = 0;
    for r in results {
        let (hits, empty) = r?;
        counts.iter_mut().zip(hits).for_each(|(c, h)| *c += usize::from(h));
        empty_total += empty;
    }
    if empty_total > 0 {
        warnings.push(Warning::EmptyCellsInPermutations(empty_total));
    }
    let p = p_values(&counts, stream.len());
    Ok(build_table(&decomp, n, &tested, &p, &stream, warnings))
}
