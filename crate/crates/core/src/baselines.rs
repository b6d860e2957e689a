//! Prior operator-family embedding models as kappa = 1 channels.
//!
//! Each constructor embeds one model's relation operator as a single Kraus
//! operator; the model's own orthogonality or unit-modulus condition is
//! exactly the completeness constraint in that parametrisation. With
//! rank-one entities the channel score reproduces the squared baseline
//! score, which induces the same ranking. Translation-style models have no
//! such embedding: a translation is affine, not linear, on density
//! matrices, so no constructor for them exists here.

use nalgebra::{DMatrix, DVector};

use crate::channel::KrausChannel;
use crate::data::dense_rank;
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::parametrize::EntityParam;

const ORTHOGONALITY_TOL: f64 = 1e-8;

/// A nonzero entity vector, as prior models use them. Complex-space models
/// store the length-2d stacked-halves embedding (real parts first, then
/// imaginary parts).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorEmbedding {
    vec: DVector<f64>,
}

impl VectorEmbedding {
    pub fn new(vec: DVector<f64>) -> Result<Self> {
        if vec.norm() <= crate::density::ZERO_FACTOR_TOL {
            return Err(Error::ZeroFactor);
        }
        Ok(VectorEmbedding { vec })
    }

    /// Stacked-halves embedding of a complex vector given as (real,
    /// imaginary) component slices.
    pub fn from_complex(re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::DimensionMismatch {
                expected: re.len(),
                got: im.len(),
            });
        }
        let mut v = DVector::zeros(2 * re.len());
        for (i, (&a, &b)) in re.iter().zip(im).enumerate() {
            v[i] = a;
            v[re.len() + i] = b;
        }
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.vec.len()
    }

    pub fn vec(&self) -> &DVector<f64> {
        &self.vec
    }

    pub fn normalized(&self) -> Self {
        VectorEmbedding {
            vec: &self.vec / self.vec.norm(),
        }
    }

    /// The rank-one entity carrying this vector: `rho = v v^T / |v|^2`.
    pub fn entity(&self, id: u32) -> EntityParam {
        EntityParam::new(id, DMatrix::from_column_slice(self.dim(), 1, self.vec.as_slice()))
    }
}

/// Bilinear model with a full orthogonal relation matrix.
pub fn channel_from_rescal(m: &DMatrix<f64>) -> Result<KrausChannel> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "relation matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let d = m.nrows();
    let residual = (m.transpose() * m - DMatrix::identity(d, d)).norm();
    if residual > ORTHOGONALITY_TOL {
        return Err(Error::NotOrthogonal { residual });
    }
    KrausChannel::new(vec![m.clone()], Geometry::euclidean(d))
}

/// Diagonal bilinear model; completeness pins the diagonal to signs.
pub fn channel_from_distmult(signs: &[f64]) -> Result<KrausChannel> {
    if signs.is_empty() || signs.iter().any(|&s| s != 1.0 && s != -1.0) {
        return Err(Error::InvalidSign);
    }
    let k = DMatrix::from_diagonal(&DVector::from_vec(signs.to_vec()));
    KrausChannel::new(vec![k], Geometry::euclidean(signs.len()))
}

/// Complex phase rotation embedded over R^{2d} in stacked-halves layout
/// (all real parts first, then all imaginary parts). The block form
///
/// ```text
/// [ diag(cos t)  -diag(sin t) ]
/// [ diag(sin t)   diag(cos t) ]
/// ```
///
/// is orthogonal for any phases, so completeness costs nothing.
pub fn channel_from_rotate(theta: &[f64]) -> KrausChannel {
    let d = theta.len();
    let mut k = DMatrix::zeros(2 * d, 2 * d);
    for (i, &t) in theta.iter().enumerate() {
        let (sin, cos) = t.sin_cos();
        k[(i, i)] = cos;
        k[(i, d + i)] = -sin;
        k[(d + i, i)] = sin;
        k[(d + i, d + i)] = cos;
    }
    KrausChannel::new(vec![k], Geometry::euclidean(2 * d))
        .expect("phase rotation block form is orthogonal")
}

/// Generalized-orthogonal model: a single w-isometry in any geometry.
pub fn channel_from_golde(g_mat: &DMatrix<f64>, geometry: &Geometry) -> Result<KrausChannel> {
    let d = geometry.dim();
    if g_mat.nrows() != d || g_mat.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: g_mat.nrows(),
        });
    }
    let w = geometry.weights();
    let mut wg = g_mat.clone();
    for i in 0..d {
        wg.row_mut(i).scale_mut(w[i]);
    }
    let mut lhs = g_mat.transpose() * wg;
    for i in 0..d {
        lhs[(i, i)] -= w[i];
    }
    let residual = lhs.norm();
    if residual > ORTHOGONALITY_TOL {
        return Err(Error::NotWOrthogonal { residual });
    }
    KrausChannel::new(vec![g_mat.clone()], geometry.clone())
}

/// Witness data for the single-operator rank bottleneck.
#[derive(Debug, Clone)]
pub struct BottleneckWitness {
    /// `B_ht = (y_t^T K x_h)^2`, the score matrix over rank-one entities.
    pub score_matrix: DMatrix<f64>,
    /// Numerical rank of the squared score matrix.
    pub score_rank: usize,
    /// Rank of the underlying bilinear matrix `y^T K x`; at most d.
    pub bilinear_rank: usize,
}

/// Build the n x n score matrix of a single-operator channel over rank-one
/// entities and report its rank along with the rank of the underlying
/// bilinear form. The bilinear matrix factors through R^d, so its rank
/// never exceeds d; the entrywise square can exceed d but stays within the
/// Hadamard bound d(d+1)/2.
pub fn verify_single_operator_bottleneck(
    k: &DMatrix<f64>,
    heads: &[DVector<f64>],
    tails: &[DVector<f64>],
) -> Result<BottleneckWitness> {
    let d = k.nrows();
    if !k.is_square() {
        return Err(Error::ShapeMismatch("operator must be square".into()));
    }
    let n = heads.len();
    if n != tails.len() || n == 0 {
        return Err(Error::InvalidParams(
            "need equally many head and tail vectors".into(),
        ));
    }
    if n <= d {
        return Err(Error::InvalidParams(format!(
            "bound is vacuous unless n > d (n = {n}, d = {d})"
        )));
    }
    for v in heads.iter().chain(tails) {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
    }
    let mut bilinear = DMatrix::zeros(n, n);
    for (h, x) in heads.iter().enumerate() {
        let kx = k * x;
        for (t, y) in tails.iter().enumerate() {
            bilinear[(h, t)] = y.dot(&kx);
        }
    }
    let score_matrix = bilinear.map(|v| v * v);
    Ok(BottleneckWitness {
        score_rank: dense_rank(&score_matrix, 1e-10),
        bilinear_rank: dense_rank(&bilinear, 1e-10),
        score_matrix,
    })
}
