//! Unit-sphere primitives shared by every other module.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Vectors with a norm at or below this are rejected by [`normalize`].
pub const NORM_EPS: f64 = 1e-12;

/// Tolerance on `|‖row‖ - 1|` accepted when validating supposedly unit rows.
pub const UNIT_TOL: f64 = 1e-9;

/// A direction on the unit hypersphere, `d >= 2`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<f64>", into = "Vec<f64>"))]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Normalizes `v`; same as [`normalize`].
    pub fn new(v: &[f64]) -> Result<Self> {
        normalize(v)
    }

    /// Standard basis vector `e_axis` in dimension `dim`.
    pub fn basis(dim: usize, axis: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("dimension {dim} < 2")));
        }
        if axis >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: axis + 1,
            });
        }
        let mut v = alloc::vec![0.0; dim];
        v[axis] = 1.0;
        Ok(Self(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &UnitVector) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(math::dot(&self.0, &other.0))
    }

    /// The antipodal direction.
    pub fn negated(&self) -> UnitVector {
        UnitVector(self.0.iter().map(|x| -x).collect())
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        normalize(&v)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(u: UnitVector) -> Self {
        u.0
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::DimensionMismatch { expected, got })
    } else {
        Ok(())
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    math::sqrt(math::dot(v, v))
}

/// Scales `v` to unit length.
///
/// Inputs whose norm is already 1 up to accumulated rounding (`dim * ε`) are
/// returned unchanged, which makes the operation idempotent bit for bit.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    if v.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "unit vectors need dimension >= 2, got {}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput("vector component"));
    }
    let n = norm(v);
    if !(n > NORM_EPS) {
        return Err(Error::ZeroVector { norm: n });
    }
    if (n - 1.0).abs() <= v.len() as f64 * f64::EPSILON {
        return Ok(UnitVector(v.to_vec()));
    }
    Ok(UnitVector(v.iter().map(|x| x / n).collect()))
}

/// Normalizes `row` in place. Used by the trainer's retraction step.
pub(crate) fn normalize_in_place(row: &mut [f64]) -> Result<()> {
    let n = norm(row);
    if !(n > NORM_EPS) || !n.is_finite() {
        return Err(Error::ZeroVector { norm: n });
    }
    if (n - 1.0).abs() > row.len() as f64 * f64::EPSILON {
        row.iter_mut().for_each(|x| *x /= n);
    }
    Ok(())
}

fn check_unit_rows(data: &[f64], dim: usize) -> Result<()> {
    for (i, row) in data.chunks_exact(dim).enumerate() {
        let n = norm(row);
        if !((n - 1.0).abs() <= UNIT_TOL) {
            return Err(Error::InvalidParameter(format!(
                "row {i} has norm {n}, expected 1"
            )));
        }
    }
    Ok(())
}

/// One unit-norm prototype row per identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeMatrix {
    dim: usize,
    data: Vec<f64>,
    labels: Vec<u64>,
}

impl PrototypeMatrix {
    /// Builds a matrix from row-major `data` whose rows must already be unit norm.
    pub fn new(dim: usize, data: Vec<f64>, labels: Vec<u64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("dimension {dim} < 2")));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        let n = data.len() / dim;
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 prototypes, got {n}"
            )));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        let unique: BTreeSet<_> = labels.iter().collect();
        if unique.len() != n {
            return Err(Error::InvalidParameter("duplicate prototype label".into()));
        }
        check_unit_rows(&data, dim)?;
        Ok(Self { dim, data, labels })
    }

    /// Stacks unit vectors as rows, labelled `0..n`.
    pub fn from_rows(rows: &[UnitVector]) -> Result<Self> {
        let dim = rows.first().ok_or(Error::EmptyInput)?.dim();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            check_dim(dim, r.dim())?;
            data.extend_from_slice(r.as_slice());
        }
        Self::new(dim, data, (0..rows.len() as u64).collect())
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Unit-norm embedding rows with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereBatch {
    dim: usize,
    data: Vec<f64>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl SphereBatch {
    /// `labels[i]` must lie in `0..n_classes` and every row must be unit norm.
    pub fn new(dim: usize, data: Vec<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("dimension {dim} < 2")));
        }
        if data.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                got: data.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidParameter(format!(
                "label {bad} outside 0..{n_classes}"
            )));
        }
        check_unit_rows(&data, dim)?;
        Ok(Self {
            dim,
            data,
            labels,
            n_classes,
        })
    }

    /// Like [`SphereBatch::new`] but normalizes every row first.
    pub fn from_raw_rows(dim: usize, mut data: Vec<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len(),
            });
        }
        for row in data.chunks_exact_mut(dim) {
            normalize_in_place(row)?;
        }
        Self::new(dim, data, labels, n_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Cosine between rows `i` and `j`, clamped to `[-1, 1]`.
    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        math::clamp_unit(math::dot(self.row(i), self.row(j)))
    }
}

/// Cosine of `x` against every prototype row, clamped to `[-1, 1]`.
pub fn cosine_scores(x: &UnitVector, protos: &PrototypeMatrix) -> Result<Vec<f64>> {
    let mut out = alloc::vec![0.0; protos.n()];
    cosine_scores_into(x.as_slice(), protos, &mut out)?;
    Ok(out)
}

pub(crate) fn cosine_scores_into(x: &[f64], protos: &PrototypeMatrix, out: &mut [f64]) -> Result<()> {
    check_dim(protos.dim(), x.len())?;
    for (o, row) in out.iter_mut().zip(protos.rows()) {
        *o = math::clamp_unit(math::dot(x, row));
    }
    Ok(())
}

/// `(1/scale) · ln Σ exp(scale · v)`, evaluated with the max shift.
pub fn logsumexp(vals: &[f64], scale: f64) -> Result<f64> {
    if vals.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
    }
    Ok(logsumexp_unchecked(vals, scale))
}

/// [`logsumexp`] for callers that have already validated their inputs.
pub(crate) fn logsumexp_unchecked(vals: &[f64], scale: f64) -> f64 {
    let (imax, &max) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    // the max term contributes exactly 1; sum the rest and use log1p
    let rest: f64 = vals
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != imax)
        .map(|(_, &v)| math::exp(scale * (v - max)))
        .sum();
    max + math::ln_1p(rest) / scale
}

/// Softmax weights `exp(scale·v_i) / Σ exp(scale·v_k)`.
pub(crate) fn softmax_weights(vals: &[f64], scale: f64, out: &mut Vec<f64>) {
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.clear();
    out.extend(vals.iter().map(|&v| math::exp(scale * (v - max))));
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|w| *w /= total);
}

/// Angle in radians between two unit vectors, in `[0, π]`.
pub fn angle_between(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    let c = a.dot(b)?;
    Ok(math::acos(math::clamp_unit(c)))
}
