//! Multi-group Gaussian DAG data and the modified Cholesky decomposition.
//!
//! Columns are 0-based throughout the library: column `j` has candidate
//! parents `0..j`. Every precision matrix is parameterized as
//! `Ω = (I - A)ᵀ D⁻¹ (I - A)` with `A` strictly lower-triangular.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

/// One group's observations: `n × p`, rows are observations.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupData {
    label: String,
    matrix: DMatrix<f64>,
}

impl GroupData {
    pub fn new(label: impl Into<String>, matrix: DMatrix<f64>) -> Result<Self> {
        let label = label.into();
        if matrix.nrows() == 0 {
            return Err(Error::InvalidData(format!("group {label:?} has no observations")));
        }
        if matrix.ncols() == 0 {
            return Err(Error::InvalidData(format!("group {label:?} has no columns")));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidData(format!("group {label:?} has non-finite entries")));
        }
        Ok(Self { label, matrix })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn p(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn column(&self, j: usize) -> DVectorView<'_, f64> {
        self.matrix.column(j)
    }

    /// Copy with every column shifted to mean zero.
    pub fn centered(&self) -> Self {
        let mut matrix = self.matrix.clone();
        for mut col in matrix.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        Self { label: self.label.clone(), matrix }
    }
}

/// `K` groups sharing the same `p` variables in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    groups: Vec<GroupData>,
    p: usize,
}

impl Dataset {
    pub fn new(groups: Vec<GroupData>) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| Error::InvalidData("at least one group is required".into()))?;
        let p = first.p();
        if let Some(bad) = groups.iter().find(|g| g.p() != p) {
            return Err(Error::InvalidData(format!(
                "group {:?} has {} columns, expected {p}",
                bad.label(),
                bad.p()
            )));
        }
        Ok(Self { groups, p })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of groups `K`.
    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[GroupData] {
        &self.groups
    }

    pub fn group(&self, k: usize) -> &GroupData {
        &self.groups[k]
    }

    /// Total sample size `n = Σ n_k`.
    pub fn total_n(&self) -> usize {
        self.groups.iter().map(GroupData::n).sum()
    }

    pub fn min_n(&self) -> usize {
        self.groups.iter().map(GroupData::n).min().unwrap_or(0)
    }

    pub fn centered(&self) -> Self {
        Self { groups: self.groups.iter().map(GroupData::centered).collect(), p: self.p }
    }

    /// Dataset made of a subset of the groups, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let groups = indices
            .iter()
            .map(|&k| {
                self.groups
                    .get(k)
                    .cloned()
                    .ok_or_else(|| Error::InvalidData(format!("no group with index {k}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(groups)
    }
}

/// `(A, D)` of the modified Cholesky decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyPair {
    a: DMatrix<f64>,
    d: DVector<f64>,
}

impl CholeskyPair {
    pub fn new(a: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        let p = d.len();
        if a.nrows() != p || a.ncols() != p {
            return Err(Error::ShapeMismatch(format!(
                "A is {}x{}, D has length {p}",
                a.nrows(),
                a.ncols()
            )));
        }
        for j in 0..p {
            for l in j..p {
                if a[(j, l)] != 0.0 {
                    return Err(Error::InvalidData(format!(
                        "A must be strictly lower-triangular, found a[{j},{l}] = {}",
                        a[(j, l)]
                    )));
                }
            }
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidData("A has non-finite entries".into()));
        }
        if d.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidData("D must be positive and finite".into()));
        }
        Ok(Self { a, d })
    }

    pub fn identity(p: usize) -> Self {
        Self { a: DMatrix::zeros(p, p), d: DVector::from_element(p, 1.0) }
    }

    pub fn p(&self) -> usize {
        self.d.len()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    /// `Ω = (I - A)ᵀ D⁻¹ (I - A)`.
    pub fn compose(&self) -> DMatrix<f64> {
        let p = self.p();
        let t = DMatrix::identity(p, p) - &self.a;
        let mut scaled = t.clone();
        for (j, mut row) in scaled.row_iter_mut().enumerate() {
            row /= self.d[j];
        }
        let mut omega = t.transpose() * scaled;
        omega = (&omega + omega.transpose()) * 0.5;
        omega
    }

    /// Modified Cholesky decomposition of a symmetric positive-definite matrix.
    ///
    /// Peels off the last variable's regression on its predecessors
    /// (`d_j = 1/Ω_jj`, `a_jl = -Ω_jl d_j`) and recurses on the Schur
    /// complement of the leading block.
    pub fn decompose(omega: &DMatrix<f64>) -> Result<Self> {
        let p = omega.nrows();
        if omega.ncols() != p {
            return Err(Error::ShapeMismatch(format!("{}x{} is not square", p, omega.ncols())));
        }
        let scale = omega.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        for i in 0..p {
            for l in 0..i {
                if (omega[(i, l)] - omega[(l, i)]).abs() > 1e-10 * scale.max(1.0) {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        let mut work = omega.clone();
        let mut a = DMatrix::zeros(p, p);
        let mut d = DVector::zeros(p);
        for j in (0..p).rev() {
            let pivot = work[(j, j)];
            if !pivot.is_finite() || pivot <= 1e-14 * scale {
                return Err(Error::NotPositiveDefinite);
            }
            d[j] = 1.0 / pivot;
            for l in 0..j {
                a[(j, l)] = -work[(j, l)] / pivot;
            }
            for r in 0..j {
                for c in 0..=r {
                    let v = work[(r, c)] - work[(j, r)] * work[(j, c)] / pivot;
                    work[(r, c)] = v;
                    work[(c, r)] = v;
                }
            }
        }
        Ok(Self { a, d })
    }

    pub fn support(&self) -> Vec<bool> {
        self.a.transpose().iter().map(|&x| x != 0.0).collect()
    }
}

/// Parent set of one column, kept sorted ascending.
pub type ParentSet = Vec<usize>;

/// The `K` parent sets of column `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SupportColumn {
    pub j: usize,
    pub sets: Vec<ParentSet>,
}

impl SupportColumn {
    pub fn new(j: usize, sets: Vec<ParentSet>) -> Result<Self> {
        for set in &sets {
            check_parent_set(j, set)?;
        }
        Ok(Self { j, sets })
    }

    pub fn empty(j: usize, k: usize) -> Self {
        Self { j, sets: vec![Vec::new(); k] }
    }

    pub fn k(&self) -> usize {
        self.sets.len()
    }

    /// How many groups include parent `l`.
    pub fn multiplicity(&self, l: usize) -> usize {
        self.sets.iter().filter(|s| s.binary_search(&l).is_ok()).count()
    }
}

pub(crate) fn check_parent_set(j: usize, set: &[usize]) -> Result<()> {
    if set.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidData(format!("parent set {set:?} is not strictly increasing")));
    }
    if let Some(&last) = set.last() {
        if last >= j {
            return Err(Error::InvalidData(format!(
                "parent {last} is not a predecessor of column {j}"
            )));
        }
    }
    Ok(())
}

/// `K` strictly lower-triangular adjacency patterns: edge `l → j` in group
/// `k` iff `has_edge(k, j, l)` with `l < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportGraph {
    p: usize,
    adjacency: Vec<Vec<bool>>,
}

impl SupportGraph {
    pub fn empty(p: usize, k: usize) -> Self {
        Self { p, adjacency: vec![vec![false; p * p]; k] }
    }

    pub fn from_pairs(pairs: &[CholeskyPair]) -> Result<Self> {
        let p = pairs.first().map(CholeskyPair::p).unwrap_or(0);
        let mut graph = Self::empty(p, pairs.len());
        for (k, pair) in pairs.iter().enumerate() {
            if pair.p() != p {
                return Err(Error::ShapeMismatch("Cholesky pairs differ in dimension".into()));
            }
            for j in 0..p {
                for l in 0..j {
                    if pair.a()[(j, l)] != 0.0 {
                        graph.set_edge(k, j, l, true);
                    }
                }
            }
        }
        Ok(graph)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.adjacency.len()
    }

    pub fn has_edge(&self, k: usize, j: usize, l: usize) -> bool {
        l < j && self.adjacency[k][j * self.p + l]
    }

    /// Panics when `l >= j`: edges always point from a smaller to a larger index.
    pub fn set_edge(&mut self, k: usize, j: usize, l: usize, present: bool) {
        assert!(l < j && j < self.p, "edge ({j},{l}) is not strictly lower-triangular");
        self.adjacency[k][j * self.p + l] = present;
    }

    pub fn parents(&self, k: usize, j: usize) -> ParentSet {
        (0..j).filter(|&l| self.has_edge(k, j, l)).collect()
    }

    /// `(j, l)` pairs of group `k`, row-major.
    pub fn edges(&self, k: usize) -> Vec<(usize, usize)> {
        lower_positions(self.p).filter(|&(j, l)| self.has_edge(k, j, l)).collect()
    }

    pub fn edge_count(&self, k: usize) -> usize {
        self.adjacency[k].iter().filter(|&&b| b).count()
    }

    /// Number of edges present in both groups.
    pub fn overlap(&self, a: usize, b: usize) -> usize {
        self.adjacency[a].iter().zip(&self.adjacency[b]).filter(|(x, y)| **x && **y).count()
    }

    pub fn column(&self, j: usize) -> SupportColumn {
        SupportColumn { j, sets: (0..self.k()).map(|k| self.parents(k, j)).collect() }
    }
}

/// All strictly lower-triangular positions `(j, l)`, `l < j`, row-major.
pub fn lower_positions(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(|j| (0..j).map(move |l| (j, l)))
}
