//! Experimental designs and their coding matrices.
//!
//! Factors are coded with sum-to-zero (effects) coding: an `L`-level factor
//! gets `L - 1` columns, column `j` holding `+1` for level `j`, `-1` for the
//! last level and `0` otherwise. Interaction columns are face-splitting
//! products, i.e. the row-wise product of every pair of parent columns. With a
//! balanced design the blocks of different terms are mutually orthogonal, so
//! the sums of squares of the reconstructed effects add up.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// A categorical factor: one level code per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    name: String,
    codes: Vec<usize>,
    level_names: Vec<String>,
}

impl Factor {
    /// Builds a factor from arbitrary labels; levels are ordered by label.
    pub fn from_labels<L: Ord + Clone + ToString>(name: impl Into<String>, labels: &[L]) -> Self {
        let levels: Vec<L> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let codes = labels
            .iter()
            .map(|l| levels.binary_search(l).expect("label is in the level set"))
            .collect();
        Self {
            name: name.into(),
            codes,
            level_names: levels.iter().map(ToString::to_string).collect(),
        }
    }

    /// Builds a factor from integer codes; unused codes are dropped.
    pub fn from_codes(name: impl Into<String>, codes: &[usize]) -> Self {
        Self::from_labels(name, codes)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Dense level index per sample, in `0..n_levels()`.
    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn level_names(&self) -> &[String] {
        &self.level_names
    }

    pub fn n_levels(&self) -> usize {
        self.level_names.len()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Declared factors and the pairwise interactions to include.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignSpec {
    factors: Vec<Factor>,
    interactions: Vec<(usize, usize)>,
}

impl DesignSpec {
    pub fn new(factors: Vec<Factor>, interactions: Vec<(usize, usize)>) -> Result<Self> {
        let spec = Self { factors, interactions };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let Some(first) = self.factors.first() else {
            return Err(Error::InvalidDesign("no factors declared".into()));
        };
        let n = first.len();
        for f in &self.factors {
            if f.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "factor `{}` has {} samples, expected {n}",
                    f.name,
                    f.len()
                )));
            }
            if f.n_levels() < 2 {
                return Err(Error::DegenerateFactor(f.name.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in &self.interactions {
            if a == b || a >= self.factors.len() || b >= self.factors.len() {
                return Err(Error::InvalidDesign(format!("invalid interaction ({a}, {b})")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidDesign(format!("duplicate interaction ({a}, {b})")));
            }
        }
        Ok(())
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn interactions(&self) -> &[(usize, usize)] {
        &self.interactions
    }

    pub fn n_samples(&self) -> usize {
        self.factors[0].len()
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    /// Same factors with a different interaction list.
    pub fn with_interactions(&self, interactions: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(self.factors.clone(), interactions)
    }

    /// All pairwise interactions of the declared factors.
    pub fn all_pairs(&self) -> Vec<(usize, usize)> {
        let k = self.factors.len();
        (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect()
    }

    /// Samples reordered; `order[i]` is the source row of new row `i`.
    pub fn select_samples(&self, order: &[usize]) -> Result<Self> {
        let factors = self
            .factors
            .iter()
            .map(|f| {
                let labels: Vec<&String> = order.iter().map(|&i| &f.level_names[f.codes[i]]).collect();
                Factor::from_labels(f.name.clone(), &labels)
            })
            .collect();
        Self::new(factors, self.interactions.clone())
    }

    /// Cell index per sample over the full cross of all factors, plus the cell count.
    pub fn cells(&self) -> (Vec<usize>, usize) {
        let mut ids = BTreeMap::new();
        let cells = (0..self.n_samples())
            .map(|i| {
                let key: Vec<usize> = self.factors.iter().map(|f| f.codes[i]).collect();
                let next = ids.len();
                *ids.entry(key).or_insert(next)
            })
            .collect();
        (cells, ids.len())
    }
}

/// True iff every cell of the full factor cross has the same replicate count.
pub fn is_balanced(spec: &DesignSpec) -> bool {
    let full: usize = spec.factors.iter().map(Factor::n_levels).product();
    let (cells, used) = spec.cells();
    if used != full {
        return false;
    }
    let mut counts = vec![0usize; used];
    for c in cells {
        counts[c] += 1;
    }
    counts.iter().all(|&c| c == counts[0])
}

/// A model term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Mean,
    Factor(usize),
    Interaction(usize, usize),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Mean => write!(f, "Mean"),
            Term::Factor(a) => write!(f, "F{a}"),
            Term::Interaction(a, b) => write!(f, "F{a}:F{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermBlock {
    pub term: Term,
    pub name: String,
    pub columns: Range<usize>,
    pub dof: usize,
}

/// The encoded `N x F` design matrix with its term layout.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    matrix: ComplexMatrix,
    blocks: Vec<TermBlock>,
    cells: Vec<usize>,
    balanced: bool,
}

impl DesignMatrix {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_columns(&self) -> usize {
        self.matrix.cols()
    }

    /// Term blocks in column order, starting with the mean.
    pub fn blocks(&self) -> &[TermBlock] {
        &self.blocks
    }

    /// Blocks of everything except the mean.
    pub fn effect_blocks(&self) -> impl Iterator<Item = &TermBlock> {
        self.blocks.iter().filter(|b| b.term != Term::Mean)
    }

    pub fn block(&self, term: Term) -> Option<&TermBlock> {
        self.blocks.iter().find(|b| b.term == term)
    }

    pub fn find(&self, name: &str) -> Option<&TermBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn column_span(&self, term: Term) -> Option<Range<usize>> {
        self.block(term).map(|b| b.columns.clone())
    }

    pub fn dof(&self, term: Term) -> Option<usize> {
        self.block(term).map(|b| b.dof)
    }

    /// Cell of the full factor cross each sample belongs to.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn is_balanced(&self) -> bool {
        self.balanced
    }

    /// A model with nothing but the mean.
    pub fn intercept_only(n: usize) -> Self {
        Self {
            matrix: ComplexMatrix::from_fn(n, 1, |_, _| Complex64::new(1.0, 0.0)),
            blocks: vec![TermBlock {
                term: Term::Mean,
                name: "Mean".into(),
                columns: 0..1,
                dof: 1,
            }],
            cells: vec![0; n],
            balanced: true,
        }
    }
}

fn factor_columns(f: &Factor) -> Vec<Vec<f64>> {
    let last = f.n_levels() - 1;
    (0..last)
        .map(|j| {
            f.codes
                .iter()
                .map(|&c| {
                    if c == j {
                        1.0
                    } else if c == last {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Encodes a design with an intercept, sum-to-zero factor blocks and
/// face-splitting interaction blocks.
pub fn encode(spec: &DesignSpec) -> Result<DesignMatrix> {
    spec.validate()?;
    let n = spec.n_samples();
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut blocks = vec![TermBlock {
        term: Term::Mean,
        name: "Mean".into(),
        columns: 0..1,
        dof: 1,
    }];

    let factor_cols: Vec<Vec<Vec<f64>>> = spec.factors.iter().map(factor_columns).collect();
    for (k, (f, cols)) in spec.factors.iter().zip(&factor_cols).enumerate() {
        let start = columns.len();
        columns.extend(cols.iter().cloned());
        blocks.push(TermBlock {
            term: Term::Factor(k),
            name: f.name.clone(),
            columns: start..columns.len(),
            dof: f.n_levels() - 1,
        });
    }
    for &(a, b) in &spec.interactions {
        let start = columns.len();
        for ca in &factor_cols[a] {
            for cb in &factor_cols[b] {
                columns.push(ca.iter().zip(cb).map(|(x, y)| x * y).collect());
            }
        }
        blocks.push(TermBlock {
            term: Term::Interaction(a, b),
            name: format!("{}:{}", spec.factors[a].name, spec.factors[b].name),
            columns: start..columns.len(),
            dof: (spec.factors[a].n_levels() - 1) * (spec.factors[b].n_levels() - 1),
        });
    }

    let width = columns.len();
    let matrix = ComplexMatrix::from_fn(n, width, |i, j| Complex64::new(columns[j][i], 0.0));
    Ok(DesignMatrix {
        matrix,
        blocks,
        cells: spec.cells().0,
        balanced: is_balanced(spec),
    })
}

/// Reproducible source of row permutations.
///
/// Permutation `i` is a pure function of `(seed, i)`: each index gets its own
/// ChaCha stream, so iterations can be produced in any order or in parallel.
/// In exhaustive mode index `i` maps to the `i`-th permutation in
/// lexicographic order.
#[derive(Debug, Clone)]
pub struct PermutationStream {
    n: usize,
    seed: u64,
    mode: StreamMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StreamMode {
    Random { count: usize },
    /// Every permutation except the identity.
    Exhaustive { count: usize },
}

impl PermutationStream {
    pub fn random(n: usize, seed: u64, count: usize) -> Self {
        Self {
            n,
            seed,
            mode: StreamMode::Random { count },
        }
    }

    /// All `n! - 1` non-identity permutations.
    pub fn exhaustive(n: usize) -> Self {
        let count = factorial(n).expect("n! fits in usize") - 1;
        Self {
            n,
            seed: 0,
            mode: StreamMode::Exhaustive { count },
        }
    }

    /// Exhaustive when `n! - 1 <= requested`, random otherwise.
    pub fn for_test(n: usize, requested: usize, seed: u64) -> Self {
        match factorial(n) {
            Some(total) if total - 1 <= requested => Self::exhaustive(n),
            _ => Self::random(n, seed, requested),
        }
    }

    pub fn len(&self) -> usize {
        match self.mode {
            StreamMode::Random { count } | StreamMode::Exhaustive { count } => count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_exhaustive(&self) -> bool {
        matches!(self.mode, StreamMode::Exhaustive { .. })
    }

    pub fn get(&self, index: usize) -> Vec<usize> {
        match self.mode {
            StreamMode::Random { .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(index as u64);
                let mut p: Vec<usize> = (0..self.n).collect();
                p.shuffle(&mut rng);
                p
            }
            StreamMode::Exhaustive { .. } => nth_permutation(self.n, index + 1),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }
}

/// `count` uniformly random permutations of `0..n`, reproducible from `seed`.
pub fn permute_rows(n: usize, seed: u64, count: usize) -> Vec<Vec<usize>> {
    PermutationStream::random(n, seed, count).iter().collect()
}

/// All `n!` permutations of `0..n` in lexicographic order.
pub fn enumerate_permutations(n: usize) -> Vec<Vec<usize>> {
    let total = factorial(n).expect("n! fits in usize");
    (0..total).map(|i| nth_permutation(n, i)).collect()
}

pub(crate) fn factorial(n: usize) -> Option<usize> {
    (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k))
}

/// Lexicographic unranking through the factorial number system.
fn nth_permutation(n: usize, mut index: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    for k in (0..n).rev() {
        let f = factorial(k).expect("k! fits in usize");
        out.push(pool.remove(index / f));
        index %= f;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced_2x2(reps: usize) -> DesignSpec {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                for _ in 0..reps {
                    a.push(i);
                    b.push(j);
                }
            }
        }
        DesignSpec::new(vec![Factor::from_codes("A", &a), Factor::from_codes("B", &b)], vec![(0, 1)]).unwrap()
    }

    fn re_col(d: &ComplexMatrix, j: usize) -> Vec<f64> {
        d.column(j).iter().map(|z| z.re).collect()
    }

    #[test]
    fn two_level_coding() {
        let spec = DesignSpec::new(vec![Factor::from_codes("A", &[0, 0, 1, 1])], vec![]).unwrap();
        let d = encode(&spec).unwrap();
        assert_eq!(d.matrix().shape(), (4, 2));
        assert_eq!(re_col(d.matrix(), 0), vec![1.0; 4]);
        assert_eq!(re_col(d.matrix(), 1), vec![1.0, 1.0, -1.0, -1.0]);
        assert_eq!(d.dof(Term::Factor(0)), Some(1));
    }

    #[test]
    fn interaction_is_face_splitting_product_and_orthogonal() {
        let d = encode(&balanced_2x2(3)).unwrap();
        let m = d.matrix();
        let inter = d.column_span(Term::Interaction(0, 1)).unwrap();
        assert_eq!(inter.len(), 1);
        let a = re_col(m, 1);
        let b = re_col(m, 2);
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        assert_eq!(re_col(m, inter.start), ab);
        let dtd = m.hermitian().matmul(m).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(dtd[(i, j)].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn three_level_factor_columns() {
        let spec = DesignSpec::new(vec![Factor::from_codes("A", &[0, 1, 2, 0, 1, 2])], vec![]).unwrap();
        let d = encode(&spec).unwrap();
        let span = d.column_span(Term::Factor(0)).unwrap();
        assert_eq!(span.len(), 2);
        for j in span.clone() {
            assert_eq!(re_col(d.matrix(), j).iter().sum::<f64>(), 0.0);
        }
        assert_eq!(d.matrix().select_columns(span).rank(1e-12).unwrap(), 2);
    }

    #[test]
    fn interaction_dof_is_product() {
        let a = [0, 0, 1, 1, 2, 2, 0, 1, 2, 0, 1, 2];
        let b = [0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3];
        let spec = DesignSpec::new(vec![Factor::from_codes("A", &a), Factor::from_codes("B", &b)], vec![(0, 1)]).unwrap();
        let d = encode(&spec).unwrap();
        assert_eq!(d.dof(Term::Interaction(0, 1)), Some(6));
        assert_eq!(d.column_span(Term::Interaction(0, 1)).unwrap().len(), 6);
        assert_eq!(d.find("A:B").unwrap().term, Term::Interaction(0, 1));
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(
            DesignSpec::new(vec![Factor::from_codes("A", &[1, 1, 1])], vec![]),
            Err(Error::DegenerateFactor(name)) if name == "A"
        ));
        assert!(matches!(
            DesignSpec::new(vec![Factor::from_codes("A", &[0, 1]), Factor::from_codes("B", &[0, 1, 0])], vec![]),
            Err(Error::DimensionMismatch(_))
        ));
        let f = || vec![Factor::from_codes("A", &[0, 1]), Factor::from_codes("B", &[1, 0])];
        assert!(DesignSpec::new(f(), vec![(0, 0)]).is_err());
        assert!(DesignSpec::new(f(), vec![(0, 2)]).is_err());
        assert!(DesignSpec::new(f(), vec![(0, 1), (1, 0)]).is_err());
        assert!(DesignSpec::new(vec![], vec![]).is_err());
    }

    #[test]
    fn balance_detection() {
        assert!(is_balanced(&balanced_2x2(3)));
        let a = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let b = [0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1];
        let spec = DesignSpec::new(vec![Factor::from_codes("A", &a), Factor::from_codes("B", &b)], vec![]).unwrap();
        assert!(!is_balanced(&spec));
        let spec = DesignSpec::new(vec![Factor::from_codes("A", &[0, 0, 0, 1, 1])], vec![]).unwrap();
        assert!(!is_balanced(&spec));
    }

    #[test]
    fn labels_map_to_sorted_levels() {
        let f = Factor::from_labels("T", &["wound", "control", "bt", "control"]);
        assert_eq!(f.level_names(), ["bt", "control", "wound"]);
        assert_eq!(f.codes(), [2, 1, 0, 1]);
    }

    #[test]
    fn exhaustive_enumeration_of_three() {
        let all = enumerate_permutations(3);
        assert_eq!(all.len(), 6);
        let unique: BTreeSet<_> = all.iter().cloned().collect();
        assert_eq!(unique.len(), 6);
        assert_eq!(all[0], vec![0, 1, 2]);
        let stream = PermutationStream::exhaustive(3);
        assert_eq!(stream.len(), 5);
        assert_eq!(stream.iter().collect::<Vec<_>>(), all[1..].to_vec());
    }

    #[test]
    fn seeded_streams_are_deterministic_and_splittable() {
        let a = permute_rows(12, 7, 50);
        let b = permute_rows(12, 7, 50);
        assert_eq!(a, b);
        assert_ne!(a, permute_rows(12, 8, 50));
        let stream = PermutationStream::random(12, 7, 50);
        assert_eq!(stream.get(31), a[31]);
        for p in &a {
            let mut s = p.clone();
            s.sort_unstable();
            assert_eq!(s, (0..12).collect::<Vec<_>>());
        }
    }

    #[test]
    fn for_test_switches_to_exhaustive() {
        assert!(PermutationStream::for_test(6, 1000, 1).is_exhaustive());
        assert_eq!(PermutationStream::for_test(6, 719, 1).len(), 719);
        assert!(!PermutationStream::for_test(6, 718, 1).is_exhaustive());
        assert!(!PermutationStream::for_test(10, 1000, 1).is_exhaustive());
        assert!(!PermutationStream::for_test(40, 1000, 1).is_exhaustive());
    }
}
