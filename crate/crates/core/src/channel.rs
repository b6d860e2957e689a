//! Kraus channels: the relation operators.
//!
//! A channel is a family of operators `{K_i}` acting on density matrices as
//! `rho -> sum_i K_i rho K_i^T`, subject to the completeness constraint
//! `sum_i K_i^T diag(w) K_i = diag(w)` for the channel's geometry. With
//! `w = 1` this is trace preservation; composition of two complete channels
//! is again complete, which is what makes multi-hop reasoning a pure
//! operator product.

use nalgebra::DMatrix;

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::geometry::Geometry;

/// Completeness residual accepted by the validating constructor.
pub const COMPLETENESS_TOL: f64 = 1e-8;
/// Residual bound guaranteed for folds of valid channels.
pub const PATH_COMPLETENESS_TOL: f64 = 1e-7;
/// Default cap on the operator count of a composed channel.
pub const DEFAULT_KAPPA_CAP: usize = 4096;

/// A completeness-constrained operator family for one relation.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    ops: Vec<DMatrix<f64>>,
    geometry: Geometry,
    relation: Option<u32>,
    residual: f64,
}

impl KrausChannel {
    /// Build a channel and verify the completeness residual.
    pub fn new(ops: Vec<DMatrix<f64>>, geometry: Geometry) -> Result<Self> {
        Self::with_tolerance(ops, geometry, COMPLETENESS_TOL)
    }

    /// Build a channel, accepting any residual up to `tol`.
    pub fn with_tolerance(ops: Vec<DMatrix<f64>>, geometry: Geometry, tol: f64) -> Result<Self> {
        let ch = Self::new_unchecked(ops, geometry)?;
        if ch.residual > tol {
            return Err(Error::IncompleteChannel {
                residual: ch.residual,
                tol,
            });
        }
        Ok(ch)
    }

    /// Build a channel without gating on the residual. Shape constraints are
    /// still enforced and the residual is computed and stored; `apply`
    /// refuses to run an incomplete channel.
    pub fn new_unchecked(ops: Vec<DMatrix<f64>>, geometry: Geometry) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::EmptyChannel);
        }
        let d = geometry.dim();
        for k in &ops {
            if k.nrows() != d || k.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: k.nrows(),
                });
            }
        }
        let residual = completeness_residual(&ops, &geometry)?;
        Ok(KrausChannel {
            ops,
            geometry,
            relation: None,
            residual,
        })
    }

    /// The identity channel on dimension `d` (Euclidean, kappa = 1).
    pub fn identity(d: usize) -> Self {
        KrausChannel {
            ops: vec![DMatrix::identity(d, d)],
            geometry: Geometry::euclidean(d),
            relation: None,
            residual: 0.0,
        }
    }

    pub fn ops(&self) -> &[DMatrix<f64>] {
        &self.ops
    }

    pub fn kappa(&self) -> usize {
        self.ops.len()
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn relation(&self) -> Option<u32> {
        self.relation
    }

    pub fn with_relation(mut self, relation: u32) -> Self {
        self.relation = Some(relation);
        self
    }

    /// `|sum_i K_i^T diag(w) K_i - diag(w)|_F`, computed once at
    /// construction.
    pub fn completeness_residual(&self) -> f64 {
        self.residual
    }

    /// Apply the channel: `rho -> sum_i K_i rho K_i^T`.
    ///
    /// For Euclidean geometry the output trace equals the input trace and
    /// stays capped at 1; for indefinite geometries only the w-trace is
    /// preserved, so the unit-trace cap is not enforced on the output.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: rho.dim(),
            });
        }
        if self.residual > COMPLETENESS_TOL {
            return Err(Error::IncompleteChannel {
                residual: self.residual,
                tol: COMPLETENESS_TOL,
            });
        }
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for k in &self.ops {
            out += k * rho.mat() * k.transpose();
        }
        DensityMatrix::from_channel_output(out, self.geometry.is_euclidean())
    }

    /// Compose with a second channel applied after this one. The result
    /// carries `kappa_1 * kappa_2` operators `M_ij = K_j^(2) K_i^(1)` in
    /// row-major (i, j) order and satisfies completeness whenever both
    /// inputs do.
    pub fn compose(&self, second: &KrausChannel) -> Result<KrausChannel> {
        if self.dim() != second.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: second.dim(),
            });
        }
        if self.geometry != second.geometry {
            return Err(Error::GeometryMismatch);
        }
        let mut ops = Vec::with_capacity(self.kappa() * second.kappa());
        for first_op in &self.ops {
            for second_op in &second.ops {
                ops.push(second_op * first_op);
            }
        }
        KrausChannel::with_tolerance(ops, self.geometry.clone(), PATH_COMPLETENESS_TOL)
    }

    /// Largest singular value of each operator. Under Euclidean
    /// completeness every value is at most 1.
    pub fn spectral_norms(&self) -> Vec<f64> {
        self.ops
            .iter()
            .map(|k| {
                let svd = k.clone().svd(false, false);
                svd.singular_values.iter().cloned().fold(0.0, f64::max)
            })
            .collect()
    }
}

/// `|sum_i K_i^T diag(w) K_i - diag(w)|_F` for an operator list.
pub fn completeness_residual(ops: &[DMatrix<f64>], geometry: &Geometry) -> Result<f64> {
    if ops.is_empty() {
        return Err(Error::EmptyChannel);
    }
    let d = ops[0].nrows();
    for k in ops {
        if k.nrows() != d || k.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: k.nrows(),
            });
        }
    }
    if geometry.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: geometry.dim(),
            got: d,
        });
    }
    let w = geometry.weights();
    let mut acc = DMatrix::zeros(d, d);
    for k in ops {
        // K^T diag(w) K without materialising diag(w).
        let mut wk = k.clone();
        for i in 0..d {
            wk.row_mut(i).scale_mut(w[i]);
        }
        acc += k.transpose() * wk;
    }
    for i in 0..d {
        acc[(i, i)] -= w[i];
    }
    Ok(acc.norm())
}

/// Left fold of `compose` over a path of channels.
///
/// The total operator count multiplies along the path; `cap` bounds it
/// (`DEFAULT_KAPPA_CAP` when in doubt) since a long chain grows
/// geometrically.
pub fn compose_path(chain: &[KrausChannel], cap: usize) -> Result<KrausChannel> {
    let Some((first, rest)) = chain.split_first() else {
        return Err(Error::EmptyChannel);
    };
    let mut kappa_total = first.kappa();
    let mut acc = first.clone();
    for ch in rest {
        kappa_total = kappa_total.saturating_mul(ch.kappa());
        if kappa_total > cap {
            return Err(Error::KappaOverflow {
                kappa: kappa_total,
                cap,
            });
        }
        acc = acc.compose(ch)?;
    }
    Ok(acc)
}
