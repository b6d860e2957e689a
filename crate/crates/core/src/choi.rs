//! Choi matrices and the Kraus-rank diagnostics derived from their spectra.
//!
//! The Choi matrix of a channel is `C = sum_{a,b} E_ab (x) L(E_ab)`, a
//! d^2 x d^2 symmetric matrix whose rank equals the channel's Kraus rank.
//! Index convention, fixed so that the round trip is exact: block (a, b) of
//! C holds `L(E_ab)`, and an eigenvector v of C reshapes into an operator
//! by reading block j of v as column j of K, i.e. `K[i][j] = v[j*d + i]`.
//! Equivalently `C = sum_k v_k v_k^T` where `v_k` stacks the columns of
//! `K_k`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::channel::KrausChannel;
use crate::error::{Error, Result};
use crate::geometry::Geometry;

/// Asymmetry accepted when wrapping an externally supplied Choi matrix.
pub const CHOI_SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalue floor below which a matrix is rejected as not PSD.
pub const CHOI_PSD_TOL: f64 = -1e-6;
/// Default relative eigenvalue cutoff for rank decisions. Relative to the
/// largest eigenvalue because absolute cutoffs break across scales.
pub const DEFAULT_RANK_REL_TOL: f64 = 1e-8;
/// Default spectral-energy fraction for the effective rank.
pub const DEFAULT_ENERGY: f64 = 0.99;

/// The d^2 x d^2 Choi matrix of a channel on dimension d.
#[derive(Debug, Clone)]
pub struct ChoiMatrix {
    mat: DMatrix<f64>,
    d: usize,
}

impl ChoiMatrix {
    /// Wrap an externally produced matrix, checking shape and symmetry.
    pub fn new(mat: DMatrix<f64>, d: usize) -> Result<Self> {
        if mat.nrows() != d * d || mat.ncols() != d * d {
            return Err(Error::ShapeMismatch(format!(
                "Choi matrix for d = {d} must be {0}x{0}, got {1}x{2}",
                d * d,
                mat.nrows(),
                mat.ncols()
            )));
        }
        let asym = (&mat - mat.transpose()).amax();
        if asym > CHOI_SYMMETRY_TOL {
            return Err(Error::ShapeMismatch(format!(
                "Choi asymmetry {asym:.3e} exceeds {CHOI_SYMMETRY_TOL:.1e}"
            )));
        }
        Ok(ChoiMatrix {
            mat: (&mat + mat.transpose()) * 0.5,
            d,
        })
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    /// Rank by eigenvalue magnitude, relative cutoff `rel_tol * lambda_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let eig = SymmetricEigen::new(self.mat.clone()).eigenvalues;
        let max = eig.iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            return 0;
        }
        eig.iter().filter(|&&l| l > rel_tol * max).count()
    }
}

/// Choi matrix of a Euclidean channel. Indefinite geometries have no
/// definite-metric Choi form and are rejected.
pub fn choi_matrix(ch: &KrausChannel) -> Result<ChoiMatrix> {
    if !ch.geometry().is_euclidean() {
        return Err(Error::UnsupportedGeometry);
    }
    let d = ch.dim();
    let mut c = DMatrix::zeros(d * d, d * d);
    for k in ch.ops() {
        // v stacks the columns of K; C += v v^T.
        let mut v = DMatrix::zeros(d * d, 1);
        for j in 0..d {
            for i in 0..d {
                v[(j * d + i, 0)] = k[(i, j)];
            }
        }
        c += &v * v.transpose();
    }
    Ok(ChoiMatrix { mat: c, d })
}

/// Recover a Kraus operator family from a PSD Choi matrix.
///
/// Eigenvalues above `rel_tol * lambda_max` each contribute one operator
/// `K_i` with `K_i[r][c] = sqrt(lambda_i) * v_i[c*d + r]`. The spectral
/// decomposition is sign-ambiguous, so each operator is normalised to make
/// its largest-magnitude entry positive. The output is not gated on
/// completeness: a PSD Choi matrix describes a completely positive map that
/// need not be trace preserving.
pub fn kraus_from_choi(c: &ChoiMatrix, rel_tol: f64) -> Result<KrausChannel> {
    let d = c.d;
    let eig = SymmetricEigen::new(c.mat.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let lambda_max = eig.eigenvalues[order[0]];
    let lambda_min = eig.eigenvalues[*order.last().unwrap()];
    if lambda_min < CHOI_PSD_TOL {
        return Err(Error::NotPsd {
            eigenvalue: lambda_min,
        });
    }
    if lambda_max <= 0.0 {
        return Err(Error::ZeroMatrix);
    }

    let mut ops = Vec::new();
    for &idx in &order {
        let lambda = eig.eigenvalues[idx];
        if lambda <= rel_tol * lambda_max {
            break;
        }
        let v = eig.eigenvectors.column(idx);
        let scale = lambda.sqrt();
        let mut k = DMatrix::zeros(d, d);
        for col in 0..d {
            for row in 0..d {
                k[(row, col)] = scale * v[col * d + row];
            }
        }
        normalize_sign(&mut k);
        ops.push(k);
    }
    KrausChannel::new_unchecked(ops, Geometry::euclidean(d))
}

/// Flip the operator's sign so its largest-magnitude entry (first such in
/// row-major order) is positive.
fn normalize_sign(k: &mut DMatrix<f64>) {
    let mut best = 0.0_f64;
    let mut sign = 1.0;
    for i in 0..k.nrows() {
        for j in 0..k.ncols() {
            let v = k[(i, j)];
            if v.abs() > best {
                best = v.abs();
                sign = if v < 0.0 { -1.0 } else { 1.0 };
            }
        }
    }
    if sign < 0.0 {
        k.neg_mut();
    }
}

/// Smallest k such that the top-k squared singular values of C reach
/// `energy` of its total squared Frobenius mass.
pub fn effective_rank(c: &ChoiMatrix, energy: f64) -> Result<usize> {
    if !(energy > 0.0 && energy < 1.0) {
        return Err(Error::InvalidParams(format!(
            "energy must lie in (0, 1), got {energy}"
        )));
    }
    let svd = c.mat.clone().svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sv.iter().map(|s| s * s).sum();
    if total <= 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let target = energy * total;
    let mut cum = 0.0;
    for (i, s) in sv.iter().enumerate() {
        cum += s * s;
        if cum + 1e-12 * total >= target {
            return Ok(i + 1);
        }
    }
    Ok(sv.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn identity_choi_is_rank_one_with_trace_d() {
        let ch = KrausChannel::identity(2);
        let c = choi_matrix(&ch).unwrap();
        assert_relative_eq!(c.trace(), 2.0, epsilon = 1e-12);
        assert_eq!(c.rank(DEFAULT_RANK_REL_TOL), 1);
        // vec(I) vec(I)^T pattern: ones at (0,0), (0,3), (3,0), (3,3).
        assert_relative_eq!(c.mat()[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(c.mat()[(0, 3)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(c.mat()[(3, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(c.mat()[(1, 1)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn single_reflection_choi_has_rank_one() {
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        let ch = KrausChannel::new(vec![k], Geometry::euclidean(2)).unwrap();
        let c = choi_matrix(&ch).unwrap();
        assert_eq!(c.rank(DEFAULT_RANK_REL_TOL), 1);
    }

    #[test]
    fn choi_blocks_hold_channel_of_matrix_units() {
        // Random-ish kappa = 2 channel; check block (a,b) equals L(E_ab).
        let k1 = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.7]);
        let k2 = DMatrix::from_row_slice(2, 2, &[0.3, -0.4, 0.5, 0.1]);
        let ops = vec![k1.clone(), k2.clone()];
        let ch = KrausChannel::new_unchecked(ops, Geometry::euclidean(2)).unwrap();
        let c = choi_matrix(&ch).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let mut e = DMatrix::zeros(2, 2);
                e[(a, b)] = 1.0;
                let image = &k1 * &e * k1.transpose() + &k2 * &e * k2.transpose();
                for i in 0..2 {
                    for j in 0..2 {
                        assert_relative_eq!(
                            c.mat()[(a * 2 + i, b * 2 + j)],
                            image[(i, j)],
                            epsilon = 1e-14
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn identity_recovery_with_positive_sign() {
        let ch = KrausChannel::identity(2);
        let c = choi_matrix(&ch).unwrap();
        let rec = kraus_from_choi(&c, DEFAULT_RANK_REL_TOL).unwrap();
        assert_eq!(rec.kappa(), 1);
        assert_relative_eq!((rec.ops()[0].clone() - DMatrix::identity(2, 2)).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn padded_rank_deficient_choi_recovers_two_operators() {
        // Two orthogonal operator directions embedded in d = 4.
        let mut k1 = DMatrix::zeros(4, 4);
        k1[(0, 0)] = 1.0;
        let mut k2 = DMatrix::zeros(4, 4);
        k2[(1, 1)] = 0.5;
        let ch = KrausChannel::new_unchecked(vec![k1, k2], Geometry::euclidean(4)).unwrap();
        let c = choi_matrix(&ch).unwrap();
        let rec = kraus_from_choi(&c, DEFAULT_RANK_REL_TOL).unwrap();
        assert_eq!(rec.kappa(), 2);
    }

    #[test]
    fn non_psd_choi_rejected() {
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = -1.0;
        let c = ChoiMatrix::new(m, 2).unwrap();
        assert!(matches!(
            kraus_from_choi(&c, DEFAULT_RANK_REL_TOL),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn effective_rank_examples() {
        // sigma = (1, 0, 0, ...) -> 1.
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = 1.0;
        let c = ChoiMatrix::new(m, 2).unwrap();
        assert_eq!(effective_rank(&c, 0.99).unwrap(), 1);

        // Equal split (1,1,1,1): each sigma^2 holds 25% -> need all 4.
        let c2 = ChoiMatrix::new(DMatrix::identity(4, 4), 2).unwrap();
        assert_eq!(effective_rank(&c2, 0.99).unwrap(), 4);

        // sigma = (10, 1, 0.1): sigma_1^2 = 100 >= 0.99 * 101.01 -> 1.
        let mut m3 = DMatrix::zeros(4, 4);
        m3[(0, 0)] = 10.0;
        m3[(1, 1)] = 1.0;
        m3[(2, 2)] = 0.1;
        let c3 = ChoiMatrix::new(m3, 2).unwrap();
        assert_eq!(effective_rank(&c3, 0.99).unwrap(), 1);

        // The same spectrum at a lower energy target still needs only 1;
        // at 0.999999 it needs 2.
        let mut m4 = DMatrix::zeros(4, 4);
        m4[(0, 0)] = 10.0;
        m4[(1, 1)] = 1.0;
        let c4 = ChoiMatrix::new(m4, 2).unwrap();
        assert_eq!(effective_rank(&c4, 0.5).unwrap(), 1);
        assert_eq!(effective_rank(&c4, 0.9999999).unwrap(), 2);
    }

    #[test]
    fn effective_rank_zero_matrix() {
        let c = ChoiMatrix::new(DMatrix::zeros(4, 4), 2).unwrap();
        assert!(matches!(
            effective_rank(&c, 0.99),
            Err(Error::ZeroMatrix)
        ));
    }

    #[test]
    fn effective_rank_energy_domain() {
        let c = ChoiMatrix::new(DMatrix::identity(4, 4), 2).unwrap();
        assert!(effective_rank(&c, 0.0).is_err());
        assert!(effective_rank(&c, 1.0).is_err());
    }

    #[test]
    fn choi_rejects_indefinite_geometry() {
        let k = DMatrix::identity(2, 2);
        let ch = KrausChannel::new(vec![k], Geometry::hyperbolic(2)).unwrap();
        assert!(matches!(choi_matrix(&ch), Err(Error::UnsupportedGeometry)));
    }
}
