//! Metric geometries defined by a weighting vector.
//!
//! A geometry is a quadratic inner product `<x, y>_w = sum_i w_i x_i y_i`
//! with no zero weight. Four kinds are supported:
//!
//! - Euclidean: `w = (1, ..., 1)`
//! - elliptic: all `w_i > 0`
//! - hyperbolic (Lorentzian): `w = (-1, +1, ..., +1)`
//! - product: contiguous blocks, each Euclidean/elliptic/hyperbolic
//!
//! The weighting vector enters the channel completeness constraint
//! `sum_i K_i^T diag(w) K_i = diag(w)`; with `w = 1` this is the usual
//! trace-preservation condition.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// One contiguous block of a product geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometryBlock {
    Euclidean(usize),
    Elliptic(Vec<f64>),
    Hyperbolic(usize),
}

impl GeometryBlock {
    pub fn dim(&self) -> usize {
        match self {
            GeometryBlock::Euclidean(d) | GeometryBlock::Hyperbolic(d) => *d,
            GeometryBlock::Elliptic(w) => w.len(),
        }
    }

    fn push_weights(&self, out: &mut Vec<f64>) {
        match self {
            GeometryBlock::Euclidean(d) => out.extend(std::iter::repeat_n(1.0, *d)),
            GeometryBlock::Elliptic(w) => out.extend_from_slice(w),
            GeometryBlock::Hyperbolic(d) => {
                out.push(-1.0);
                out.extend(std::iter::repeat_n(1.0, d - 1));
            }
        }
    }
}

/// A weighting-vector geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Euclidean { dim: usize },
    Elliptic { w: Vec<f64> },
    Hyperbolic { dim: usize },
    Product { blocks: Vec<GeometryBlock> },
}

impl Geometry {
    pub fn euclidean(dim: usize) -> Self {
        Geometry::Euclidean { dim }
    }

    /// Elliptic geometry; every weight must be strictly positive.
    pub fn elliptic(w: Vec<f64>) -> Result<Self> {
        for (i, &v) in w.iter().enumerate() {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::NonPositiveWeight { index: i, value: v });
            }
        }
        if w.is_empty() {
            return Err(Error::ShapeMismatch("elliptic geometry needs dim >= 1".into()));
        }
        Ok(Geometry::Elliptic { w })
    }

    /// Lorentzian geometry `w = (-1, +1, ..., +1)`.
    pub fn hyperbolic(dim: usize) -> Self {
        Geometry::Hyperbolic { dim }
    }

    pub fn product(blocks: Vec<GeometryBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::ShapeMismatch("product geometry needs >= 1 block".into()));
        }
        for b in &blocks {
            if b.dim() == 0 {
                return Err(Error::ShapeMismatch("product block has dim 0".into()));
            }
            if let GeometryBlock::Elliptic(w) = b {
                for (i, &v) in w.iter().enumerate() {
                    if v <= 0.0 || !v.is_finite() {
                        return Err(Error::NonPositiveWeight { index: i, value: v });
                    }
                }
            }
        }
        Ok(Geometry::Product { blocks })
    }

    pub fn dim(&self) -> usize {
        match self {
            Geometry::Euclidean { dim } | Geometry::Hyperbolic { dim } => *dim,
            Geometry::Elliptic { w } => w.len(),
            Geometry::Product { blocks } => blocks.iter().map(|b| b.dim()).sum(),
        }
    }

    /// The weighting vector w.
    pub fn weights(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.dim());
        match self {
            Geometry::Euclidean { dim } => out.extend(std::iter::repeat_n(1.0, *dim)),
            Geometry::Elliptic { w } => out.extend_from_slice(w),
            Geometry::Hyperbolic { dim } => {
                out.push(-1.0);
                out.extend(std::iter::repeat_n(1.0, dim - 1));
            }
            Geometry::Product { blocks } => {
                for b in blocks {
                    b.push_weights(&mut out);
                }
            }
        }
        DVector::from_vec(out)
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, Geometry::Euclidean { .. })
    }

    /// True when every weight is strictly positive (Euclidean or elliptic,
    /// or a product of such blocks).
    pub fn is_definite(&self) -> bool {
        self.weights().iter().all(|&v| v > 0.0)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Geometry::Euclidean { .. } => "euclidean",
            Geometry::Elliptic { .. } => "elliptic",
            Geometry::Hyperbolic { .. } => "hyperbolic",
            Geometry::Product { .. } => "product",
        }
    }
}
