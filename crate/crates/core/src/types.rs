//! Sparse parameter representations, norms and split cones.
//!
//! Indices are zero-based throughout. Support is defined by exact zeros: a
//! coordinate is active iff its value is not `0.0`. There is no tolerance.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Support pattern `δ ∈ {0,1}^d`, stored as the sorted list of active indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SparsityPattern {
    d: usize,
    active: Vec<usize>,
}

impl SparsityPattern {
    pub fn empty(d: usize) -> Self {
        Self {
            d,
            active: Vec::new(),
        }
    }

    pub fn full(d: usize) -> Self {
        Self {
            d,
            active: (0..d).collect(),
        }
    }

    /// Builds a pattern from arbitrary indices; duplicates are rejected.
    pub fn new(d: usize, mut active: Vec<usize>) -> Result<Self> {
        active.sort_unstable();
        if active.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("active", "duplicate index"));
        }
        if let Some(&last) = active.last() {
            if last >= d {
                return Err(Error::invalid(
                    "active",
                    format!("index {last} out of range for dimension {d}"),
                ));
            }
        }
        Ok(Self { d, active })
    }

    /// Pattern from a boolean mask.
    pub fn from_mask(mask: &[bool]) -> Self {
        Self {
            d: mask.len(),
            active: mask
                .iter()
                .enumerate()
                .filter_map(|(j, &on)| on.then_some(j))
                .collect(),
        }
    }

    /// Pattern whose active set is given by the set bits of `bits`.
    pub fn from_bits(d: usize, bits: u64) -> Self {
        Self {
            d,
            active: (0..d).filter(|&j| bits >> j & 1 == 1).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// `‖δ‖₀`
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.active.binary_search(&j).is_ok()
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.d];
        for &j in &self.active {
            m[j] = true;
        }
        m
    }
}

/// `(‖v‖₀, ‖v‖₁, ‖v‖₂, ‖v‖∞)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l0: usize,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl Norms {
    pub fn of(values: &[f64]) -> Self {
        let mut n = Norms {
            l0: 0,
            l1: 0.0,
            l2: 0.0,
            linf: 0.0,
        };
        let mut sq = 0.0;
        for &v in values {
            if v != 0.0 {
                n.l0 += 1;
            }
            let a = v.abs();
            n.l1 += a;
            sq += a * a;
            n.linf = n.linf.max(a);
        }
        n.l2 = sq.sqrt();
        n
    }
}

/// A vector of `ℝ^d` stored as its support plus the active values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseParam {
    pattern: SparsityPattern,
    values: Vec<f64>,
}

impl SparseParam {
    pub fn zeros(d: usize) -> Self {
        Self {
            pattern: SparsityPattern::empty(d),
            values: Vec::new(),
        }
    }

    /// Sparsifies a dense vector; exact zeros are dropped.
    pub fn from_dense(dense: &[f64]) -> Self {
        let mut active = Vec::new();
        let mut values = Vec::new();
        for (j, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                active.push(j);
                values.push(v);
            }
        }
        Self {
            pattern: SparsityPattern {
                d: dense.len(),
                active,
            },
            values,
        }
    }

    /// Builds from (index, value) pairs. Zero values are dropped so the
    /// stored pattern always equals the exact-zero pattern.
    pub fn from_entries(d: usize, entries: &[(usize, f64)]) -> Result<Self> {
        let mut dense = vec![0.0; d];
        for &(j, v) in entries {
            if j >= d {
                return Err(Error::invalid(
                    "entries",
                    format!("index {j} out of range for dimension {d}"),
                ));
            }
            dense[j] = v;
        }
        Ok(Self::from_dense(&dense))
    }

    pub fn dim(&self) -> usize {
        self.pattern.d
    }

    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    pub fn active(&self) -> &[usize] {
        &self.pattern.active
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, j: usize) -> f64 {
        match self.pattern.active.binary_search(&j) {
            Ok(k) => self.values[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.pattern.d];
        for (&j, &v) in self.pattern.active.iter().zip(&self.values) {
            out[j] = v;
        }
        out
    }

    pub fn norms(&self) -> Norms {
        let mut n = Norms::of(&self.values);
        n.l0 = self.pattern.len();
        n
    }

    /// Support of the vector: `δⱼ = 1` iff `vⱼ ≠ 0`.
    pub fn sparsity_pattern(&self) -> SparsityPattern {
        self.pattern.clone()
    }

    /// `self − other` as a new sparse vector.
    pub fn sub(&self, other: &SparseParam) -> Result<SparseParam> {
        check_dim(self.dim(), other.dim())?;
        let a = self.to_dense();
        let b = other.to_dense();
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        Ok(SparseParam::from_dense(&diff))
    }

    pub fn scale(&self, factor: f64) -> SparseParam {
        let dense: Vec<f64> = self.to_dense().iter().map(|v| v * factor).collect();
        SparseParam::from_dense(&dense)
    }
}

/// Norms of a dense vector, a convenience for callers holding plain slices.
pub fn norms(v: &[f64]) -> Norms {
    Norms::of(v)
}

/// A `p × p` parameter stored column by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixParam {
    p: usize,
    columns: Vec<SparseParam>,
}

impl MatrixParam {
    pub fn zeros(p: usize) -> Self {
        Self {
            p,
            columns: vec![SparseParam::zeros(p); p],
        }
    }

    pub fn from_columns(columns: Vec<SparseParam>) -> Result<Self> {
        let p = columns.len();
        for c in &columns {
            check_dim(p, c.dim())?;
        }
        Ok(Self { p, columns })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid("matrix", "must be square"));
        }
        let columns = (0..m.ncols())
            .map(|j| SparseParam::from_dense(m.column(j).as_slice()))
            .collect();
        Ok(Self {
            p: m.nrows(),
            columns,
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.p, self.p);
        for (j, c) in self.columns.iter().enumerate() {
            for (&i, &v) in c.active().iter().zip(c.values()) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn columns(&self) -> &[SparseParam] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &SparseParam {
        &self.columns[j]
    }

    /// `max_j ‖θ·ⱼ‖₂`
    pub fn tnorm(&self) -> f64 {
        self.columns
            .iter()
            .map(|c| c.norms().l2)
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.columns
            .iter()
            .map(|c| c.values().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Column-major flattening into `ℝ^{p²}`.
    pub fn flatten(&self) -> SparseParam {
        let mut dense = Vec::with_capacity(self.p * self.p);
        for c in &self.columns {
            dense.extend(c.to_dense());
        }
        SparseParam::from_dense(&dense)
    }

    pub fn sub(&self, other: &MatrixParam) -> Result<MatrixParam> {
        check_dim(self.p, other.p)?;
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(MatrixParam { p: self.p, columns })
    }
}

/// `max_j ‖θ·ⱼ‖₂` for a dense matrix.
pub fn tnorm(m: &MatrixParam) -> f64 {
    m.tnorm()
}

/// The five split cones used by the contraction analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeSpec {
    /// All of `ℝ^d`.
    Full,
    /// `{‖θ‖₀ ≤ s}`.
    Sparse { s: usize },
    /// Vectors vanishing off the support of `θ⋆`.
    Pattern { support: SparsityPattern },
    /// Nonzero `θ` with `Σ_{j∉δ⋆}|θⱼ| ≤ factor·‖θ·δ⋆‖₁`.
    Compatibility {
        support: SparsityPattern,
        factor: f64,
    },
    /// Flattened `p × p` matrices whose column `j` has at most `caps[j]` nonzeros.
    ColumnSparse { caps: Vec<usize> },
}

impl ConeSpec {
    /// Compatibility cone with the default factor 7.
    pub fn compatibility(support: SparsityPattern) -> Self {
        ConeSpec::Compatibility {
            support,
            factor: 7.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConeSpec::Full => "full",
            ConeSpec::Sparse { .. } => "s-sparse",
            ConeSpec::Pattern { .. } => "pattern",
            ConeSpec::Compatibility { .. } => "compatibility",
            ConeSpec::ColumnSparse { .. } => "column-sparse",
        }
    }

    pub fn contains(&self, v: &SparseParam) -> Result<bool> {
        match self {
            ConeSpec::Full => Ok(true),
            ConeSpec::Sparse { s } => Ok(v.pattern().len() <= *s),
            ConeSpec::Pattern { support } => {
                check_dim(support.dim(), v.dim())?;
                Ok(v.active().iter().all(|&j| support.contains(j)))
            }
            ConeSpec::Compatibility { support, factor } => {
                check_dim(support.dim(), v.dim())?;
                if v.pattern().is_empty() {
                    return Ok(false);
                }
                let (mut on, mut off) = (0.0, 0.0);
                for (&j, &x) in v.active().iter().zip(v.values()) {
                    if support.contains(j) {
                        on += x.abs();
                    } else {
                        off += x.abs();
                    }
                }
                Ok(off <= factor * on)
            }
            ConeSpec::ColumnSparse { caps } => {
                let p = caps.len();
                check_dim(p * p, v.dim())?;
                let mut counts = vec![0usize; p];
                for &j in v.active() {
                    counts[j / p] += 1;
                }
                Ok(counts.iter().zip(caps).all(|(c, cap)| c <= cap))
            }
        }
    }
}

pub fn cone_contains(c: &ConeSpec, v: &SparseParam) -> Result<bool> {
    c.contains(v)
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
