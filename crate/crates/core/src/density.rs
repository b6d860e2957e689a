//! Entity representations as density matrices.
//!
//! A density matrix is a symmetric positive-semidefinite matrix with trace
//! in (0, 1]. Entities are parametrised by a low-rank factor `L` and
//! normalised to unit trace, `rho = L L^T / tr(L L^T)`, so validity holds by
//! construction for any nonzero factor.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::Geometry;

/// Max allowed asymmetry `max |m - m^T|` on validated input.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Min eigenvalue floor on validated input.
pub const PSD_TOL: f64 = -1e-10;
/// Slack on the unit-trace upper bound.
pub const TRACE_TOL: f64 = 1e-10;
/// Factors with Frobenius norm at or below this are treated as zero.
pub const ZERO_FACTOR_TOL: f64 = 1e-30;

/// Symmetric PSD matrix with trace in (0, 1 + eps].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: DMatrix<f64>,
}

impl DensityMatrix {
    /// Validate and wrap a matrix. The stored matrix is exactly
    /// symmetrised after validation.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        Self::validated(mat, SYMMETRY_TOL, PSD_TOL, Some(1.0 + TRACE_TOL))
    }

    /// `rho = L L^T / tr(L L^T)` for a nonzero factor `L` (d x k).
    ///
    /// The result has unit trace and rank at most k; PSD holds by
    /// construction, so no spectral check is run here.
    pub fn from_factor(factor: &DMatrix<f64>) -> Result<Self> {
        if factor.norm() <= ZERO_FACTOR_TOL {
            return Err(Error::ZeroFactor);
        }
        let gram = factor * factor.transpose();
        let tr = gram.trace();
        Ok(DensityMatrix { mat: gram / tr })
    }

    /// Rank-one projector `v v^T / |v|^2`.
    pub fn pure(v: &nalgebra::DVector<f64>) -> Result<Self> {
        let n2 = v.norm_squared();
        if n2 <= ZERO_FACTOR_TOL {
            return Err(Error::ZeroFactor);
        }
        Ok(DensityMatrix {
            mat: v * v.transpose() / n2,
        })
    }

    /// `I / d`.
    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix {
            mat: DMatrix::identity(d, d) / d as f64,
        }
    }

    /// Constructor for channel outputs: symmetry and PSD are checked at a
    /// looser tolerance (the output of `sum_i K rho K^T` is PSD up to
    /// floating-point dust), and the unit-trace cap applies only when
    /// `unit_trace_cap` is set (Euclidean channels preserve the trace;
    /// indefinite-metric channels preserve the w-trace instead).
    pub(crate) fn from_channel_output(mat: DMatrix<f64>, unit_trace_cap: bool) -> Result<Self> {
        let cap = if unit_trace_cap { Some(1.0 + 1e-8) } else { None };
        Self::validated(mat, 1e-9, -1e-8, cap)
    }

    fn validated(
        mat: DMatrix<f64>,
        sym_tol: f64,
        psd_tol: f64,
        trace_cap: Option<f64>,
    ) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "density matrix must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let asym = (&mat - mat.transpose()).amax();
        if asym > sym_tol {
            return Err(Error::ShapeMismatch(format!(
                "matrix asymmetry {asym:.3e} exceeds {sym_tol:.1e}"
            )));
        }
        let sym = (&mat + mat.transpose()) * 0.5;
        let tr = sym.trace();
        if tr.is_nan() || tr <= 0.0 {
            return Err(Error::ShapeMismatch(format!(
                "density trace must be positive, got {tr}"
            )));
        }
        if let Some(cap) = trace_cap {
            if tr > cap {
                return Err(Error::ShapeMismatch(format!(
                    "density trace {tr} exceeds {cap}"
                )));
            }
        }
        let min_eig = SymmetricEigen::new(sym.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < psd_tol {
            return Err(Error::NotPsd { eigenvalue: min_eig });
        }
        Ok(DensityMatrix { mat: sym })
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.mat.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// `tr_w(rho) = tr(diag(w) rho)`.
    pub fn w_trace(&self, geometry: &Geometry) -> Result<f64> {
        w_trace(&self.mat, geometry)
    }
}

/// Weighted trace `sum_i w_i m_ii` of an arbitrary square matrix.
pub fn w_trace(mat: &DMatrix<f64>, geometry: &Geometry) -> Result<f64> {
    if mat.nrows() != geometry.dim() || !mat.is_square() {
        return Err(Error::DimensionMismatch {
            expected: geometry.dim(),
            got: mat.nrows(),
        });
    }
    let w = geometry.weights();
    Ok((0..mat.nrows()).map(|i| w[i] * mat[(i, i)]).sum())
}

/// Hilbert-Schmidt overlap `tr(rho_a rho_b)`.
///
/// Symmetric in its arguments and in [0, 1] for unit-trace PSD inputs, with
/// 1 exactly when both are the same rank-one projector.
pub fn hs_overlap(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    // tr(AB) for symmetric A, B is the elementwise dot product.
    Ok(a.mat.dot(&b.mat))
}
