//! Dense symmetric tensors over `ℝ^n` with multilinear contraction.
//!
//! Tensors are stored fully materialized as a flat row-major array of
//! `n^d` entries, symmetric under every permutation of indices. At desk
//! scale (`d = 3`, `n` in the hundreds) the dense layout keeps every
//! contraction a sequence of cache-friendly dot products; no compressed
//! symmetric format is attempted.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from tensor construction and contraction.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("dimension mismatch: tensor has dim {expected}, vector has dim {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("tensor order must be at least {min}, got {got}")]
    OrderTooSmall { min: usize, got: usize },
    #[error("cannot contract {m} times an order-{order} tensor")]
    ContractionDepth { m: usize, order: usize },
    #[error("entry count {actual} does not match n^d = {expected}")]
    EntryCount { expected: usize, actual: usize },
    #[error("cannot normalize a (near-)zero vector, norm = {norm:e}")]
    ZeroVector { norm: f64 },
}

/// A unit vector in `ℝ^n` (Euclidean norm 1 within 1e-12).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitVector {
    coords: DVector<f64>,
}

impl UnitVector {
    /// Wraps a vector that is already normalized; rejects norms off by more
    /// than 1e-12.
    pub fn new(coords: DVector<f64>) -> Result<Self, TensorError> {
        let norm = coords.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(TensorError::ZeroVector { norm });
        }
        Ok(Self { coords })
    }

    /// Rescales an arbitrary nonzero vector to unit norm.
    pub fn normalized(coords: DVector<f64>) -> Result<Self, TensorError> {
        let norm = coords.norm();
        if norm <= 1e-300 {
            return Err(TensorError::ZeroVector { norm });
        }
        Ok(Self {
            coords: coords / norm,
        })
    }

    /// Standard basis vector `e_k` in dimension `n`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[k] = 1.0;
        Self { coords: v }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.coords.dot(&other.coords)
    }

    /// The antipodal unit vector `-u`.
    pub fn flipped(&self) -> Self {
        Self {
            coords: -&self.coords,
        }
    }
}

/// Result of an `m`-fold contraction `T · u^m`: an order-(d−m) tensor,
/// a vector (m = d−1) or a scalar (m = d).
#[derive(Debug, Clone)]
pub enum Contracted {
    Tensor(SymmetricTensor),
    Vector(DVector<f64>),
    Scalar(f64),
}

/// Dense order-`d` symmetric tensor over `ℝ^n`.
///
/// Immutable after construction; all operations return new tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTensor {
    order: usize,
    dim: usize,
    entries: Vec<f64>,
}

impl SymmetricTensor {
    /// The zero tensor of the given shape.
    pub fn zeros(order: usize, dim: usize) -> Result<Self, TensorError> {
        if order < 2 {
            return Err(TensorError::OrderTooSmall { min: 2, got: order });
        }
        Ok(Self {
            order,
            dim,
            entries: vec![0.0; dim.pow(order as u32)],
        })
    }

    /// The rank-one tensor `weight · u^⊗d`.
    pub fn rank1(weight: f64, u: &UnitVector, order: usize) -> Result<Self, TensorError> {
        if order < 2 {
            return Err(TensorError::OrderTooSmall { min: 2, got: order });
        }
        let n = u.dim();
        let coords = u.coords();
        let mut entries = vec![weight];
        for _ in 0..order {
            let mut next = Vec::with_capacity(entries.len() * n);
            for &a in &entries {
                for k in 0..n {
                    next.push(a * coords[k]);
                }
            }
            entries = next;
        }
        Ok(Self {
            order,
            dim: n,
            entries,
        })
    }

    /// Symmetrizes a raw order-`d` array `G` of `n^d` entries:
    /// `W[i_1..i_d] = (1/d!) Σ_π G[i_{π(1)}..i_{π(d)}]`.
    pub fn symmetrize(raw: &[f64], order: usize, dim: usize) -> Result<Self, TensorError> {
        if order < 2 {
            return Err(TensorError::OrderTooSmall { min: 2, got: order });
        }
        let len = dim.pow(order as u32);
        if raw.len() != len {
            return Err(TensorError::EntryCount {
                expected: len,
                actual: raw.len(),
            });
        }
        use itertools::Itertools;
        let perms: Vec<Vec<usize>> = (0..order).permutations(order).collect();
        let inv_fact = 1.0 / perms.len() as f64;

        let mut entries = vec![0.0; len];
        let mut idx = vec![0usize; order];
        for slot in entries.iter_mut() {
            let mut acc = 0.0;
            for perm in &perms {
                let mut lin = 0usize;
                for &p in perm {
                    lin = lin * dim + idx[p];
                }
                acc += raw[lin];
            }
            *slot = acc * inv_fact;
            // odometer increment of the multi-index
            for pos in (0..order).rev() {
                idx[pos] += 1;
                if idx[pos] < dim {
                    break;
                }
                idx[pos] = 0;
            }
        }
        Ok(Self {
            order,
            dim,
            entries,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Entry at a multi-index (row-major).
    pub fn get(&self, index: &[usize]) -> f64 {
        debug_assert_eq!(index.len(), self.order);
        let mut lin = 0usize;
        for &i in index {
            debug_assert!(i < self.dim);
            lin = lin * self.dim + i;
        }
        self.entries[lin]
    }

    fn check_vector(&self, u: &UnitVector) -> Result<(), TensorError> {
        if u.dim() != self.dim {
            return Err(TensorError::DimensionMismatch {
                expected: self.dim,
                actual: u.dim(),
            });
        }
        Ok(())
    }

    /// Dot product with independent accumulators so the reduction
    /// vectorizes; hot loop of every contraction.
    #[inline]
    fn dot(row: &[f64], v: &[f64]) -> f64 {
        let mut acc = [0.0f64; 4];
        let r4 = row.chunks_exact(4);
        let v4 = v.chunks_exact(4);
        let tail: f64 = r4
            .remainder()
            .iter()
            .zip(v4.remainder())
            .map(|(a, b)| a * b)
            .sum();
        for (r, w) in r4.zip(v4) {
            acc[0] += r[0] * w[0];
            acc[1] += r[1] * w[1];
            acc[2] += r[2] * w[2];
            acc[3] += r[3] * w[3];
        }
        acc[0] + acc[1] + acc[2] + acc[3] + tail
    }

    /// One-fold contraction of the flat array against `u` (contracts the
    /// last index; symmetry makes the choice immaterial).
    fn fold_once(entries: &[f64], dim: usize, u: &DVector<f64>) -> Vec<f64> {
        let coords = u.as_slice();
        entries
            .chunks_exact(dim)
            .map(|row| Self::dot(row, coords))
            .collect()
    }

    /// `m` successive one-fold contractions without copying the input array.
    fn folded(&self, u: &UnitVector, m: usize) -> Vec<f64> {
        if m == 0 {
            return self.entries.clone();
        }
        let mut cur = Self::fold_once(&self.entries, self.dim, u.coords());
        for _ in 1..m {
            cur = Self::fold_once(&cur, self.dim, u.coords());
        }
        cur
    }

    /// `m`-fold contraction `T · u^m` for `0 ≤ m ≤ d`.
    pub fn contract(&self, u: &UnitVector, m: usize) -> Result<Contracted, TensorError> {
        self.check_vector(u)?;
        if m > self.order {
            return Err(TensorError::ContractionDepth {
                m,
                order: self.order,
            });
        }
        let entries = self.folded(u, m);
        let remaining = self.order - m;
        Ok(match remaining {
            0 => Contracted::Scalar(entries[0]),
            1 => Contracted::Vector(DVector::from_vec(entries)),
            _ => Contracted::Tensor(Self {
                order: remaining,
                dim: self.dim,
                entries,
            }),
        })
    }

    /// `m`-fold contraction against an arbitrary (not necessarily unit)
    /// vector; the map is multilinear, so scaling the vector by `a` scales
    /// the result by `a^m`.
    pub fn contract_raw(&self, v: &DVector<f64>, m: usize) -> Result<Contracted, TensorError> {
        if v.len() != self.dim {
            return Err(TensorError::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        if m > self.order {
            return Err(TensorError::ContractionDepth {
                m,
                order: self.order,
            });
        }
        let mut entries = if m == 0 {
            self.entries.clone()
        } else {
            Self::fold_once(&self.entries, self.dim, v)
        };
        for _ in 1..m {
            entries = Self::fold_once(&entries, self.dim, v);
        }
        let remaining = self.order - m;
        Ok(match remaining {
            0 => Contracted::Scalar(entries[0]),
            1 => Contracted::Vector(DVector::from_vec(entries)),
            _ => Contracted::Tensor(Self {
                order: remaining,
                dim: self.dim,
                entries,
            }),
        })
    }

    /// The tensor scaled by `a`.
    pub fn scaled(&self, a: f64) -> Self {
        Self {
            order: self.order,
            dim: self.dim,
            entries: self.entries.iter().map(|&e| a * e).collect(),
        }
    }

    /// `T · u^{d−1}` as a vector.
    pub fn contract_vector(&self, u: &UnitVector) -> Result<DVector<f64>, TensorError> {
        match self.contract(u, self.order - 1)? {
            Contracted::Vector(v) => Ok(v),
            _ => unreachable!("(d-1)-fold contraction is a vector"),
        }
    }

    /// Full contraction `T · u^d`.
    pub fn contract_scalar(&self, u: &UnitVector) -> Result<f64, TensorError> {
        match self.contract(u, self.order)? {
            Contracted::Scalar(s) => Ok(s),
            _ => unreachable!("d-fold contraction is a scalar"),
        }
    }

    /// `T · u^{d−2}` as a symmetric matrix; for `d = 2` this is the tensor
    /// itself.
    pub fn contract_matrix(&self, u: &UnitVector) -> Result<DMatrix<f64>, TensorError> {
        self.check_vector(u)?;
        let entries = self.folded(u, self.order - 2);
        Ok(DMatrix::from_row_slice(self.dim, self.dim, &entries))
    }

    /// `T − λ u^⊗d`.
    pub fn subtract_rank1(&self, lambda: f64, u: &UnitVector) -> Result<Self, TensorError> {
        self.check_vector(u)?;
        let mut out = self.clone();
        out.add_rank1_in_place(-lambda, u);
        Ok(out)
    }

    /// In-place `self += weight · u^⊗d`; construction-phase helper.
    pub(crate) fn add_rank1_in_place(&mut self, weight: f64, u: &UnitVector) {
        let n = self.dim;
        let coords = u.coords();
        // products of coordinates over all but the last index
        let mut prefix = vec![weight];
        for _ in 0..self.order - 1 {
            let mut next = Vec::with_capacity(prefix.len() * n);
            for &a in &prefix {
                for k in 0..n {
                    next.push(a * coords[k]);
                }
            }
            prefix = next;
        }
        for (row, &p) in self.entries.chunks_exact_mut(n).zip(prefix.iter()) {
            for (slot, &c) in row.iter_mut().zip(coords.iter()) {
                *slot += p * c;
            }
        }
    }

    /// In-place `self += a · other`.
    pub(crate) fn axpy_in_place(&mut self, a: f64, other: &Self) {
        debug_assert_eq!(self.order, other.order);
        debug_assert_eq!(self.dim, other.dim);
        for (slot, &o) in self.entries.iter_mut().zip(other.entries.iter()) {
            *slot += a * o;
        }
    }

    /// Largest absolute entry difference against another tensor.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
