//! Unconstrained parametrisations that satisfy the channel and entity
//! constraints by construction.
//!
//! Relations store a free skew-symmetric matrix `A` of size `kappa*d`; the
//! Cayley transform `Q = (I + A)^{-1} (I - A)` is orthogonal, and the first
//! d columns of Q form a Stiefel matrix that unstacks into kappa operators
//! with exact Euclidean completeness. No projection step is ever needed:
//! gradient descent moves through the free parameter and the constraint
//! holds at every iterate.
//!
//! For an indefinite or non-unit weighting vector w the same idea carries
//! over with `A = W_n^{-1} S` for free skew S, where `W_n = I_kappa (x)
//! diag(w)`. Then `A^T W_n = -W_n A`, and the Cayley image Q satisfies
//! `Q^T W_n Q = W_n`, so the unstacked operators meet the w-completeness
//! constraint. Unlike the Euclidean case, an indefinite metric permits real
//! eigenvalues of A, so `(I + A)` can approach singularity; a condition
//! guard reports this instead of returning garbage.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::channel::KrausChannel;
use crate::error::{Error, Result};
use crate::geometry::{Geometry, GeometryBlock};

/// Residual accepted from a linear solve inside the Cayley transform.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-8;
/// Condition-number guard for `(I + A)` with indefinite metrics.
pub const NEAR_SINGULAR_COND: f64 = 1e12;
/// Dimension up to which the condition number is measured by a full SVD.
const COND_SVD_LIMIT: usize = 256;

/// Free strictly-lower-triangular entries of an n x n matrix B; the skew
/// parameter materialises as `A = (B - B^T) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewParam {
    n: usize,
    free: Vec<f64>,
}

impl SkewParam {
    pub fn zeros(n: usize) -> Self {
        SkewParam {
            n,
            free: vec![0.0; n * (n - 1) / 2],
        }
    }

    pub fn from_free(n: usize, free: Vec<f64>) -> Result<Self> {
        if free.len() != n * (n - 1) / 2 {
            return Err(Error::ShapeMismatch(format!(
                "skew parameter for n = {n} needs {} entries, got {}",
                n * (n - 1) / 2,
                free.len()
            )));
        }
        Ok(SkewParam { n, free })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn free(&self) -> &[f64] {
        &self.free
    }

    pub fn free_mut(&mut self) -> &mut [f64] {
        &mut self.free
    }

    /// Flat index of entry (i, j), i > j, in row-major order over the
    /// strictly-lower triangle.
    pub fn index(i: usize, j: usize) -> usize {
        debug_assert!(i > j);
        i * (i - 1) / 2 + j
    }

    /// `A = (B - B^T) / 2`: exactly skew-symmetric with zero diagonal.
    pub fn materialize(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 1..self.n {
            for j in 0..i {
                let v = self.free[Self::index(i, j)] * 0.5;
                a[(i, j)] = v;
                a[(j, i)] = -v;
            }
        }
        a
    }
}

/// Full Cayley image `Q = (I + A)^{-1} (I - A)` with a residual check on
/// the dense solve.
pub fn cayley_q(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "Cayley input must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let i_plus = DMatrix::identity(n, n) + a;
    let i_minus = DMatrix::identity(n, n) - a;
    let lu = i_plus.clone().lu();
    let q = lu
        .solve(&i_minus)
        .ok_or(Error::SolveFailure { residual: f64::INFINITY })?;
    let residual = (&i_plus * &q - &i_minus).norm();
    if residual > SOLVE_RESIDUAL_TOL {
        return Err(Error::SolveFailure { residual });
    }
    Ok(q)
}

/// First d columns of the Cayley image of a skew-symmetric A: an n x d
/// matrix with orthonormal columns.
pub fn cayley_stiefel(a: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let q = cayley_q(a)?;
    if d > q.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "cannot select {d} columns from {}x{} Cayley image",
            q.nrows(),
            q.ncols()
        )));
    }
    Ok(q.columns(0, d).into_owned())
}

/// Split a stacked kappa*d x d matrix into kappa operators, rows
/// `[i*d, (i+1)*d)` forming `K_i`, and wrap them as a Euclidean channel.
pub fn unstack(u: &DMatrix<f64>, kappa: usize, d: usize) -> Result<KrausChannel> {
    if u.nrows() != kappa * d || u.ncols() != d {
        return Err(Error::ShapeMismatch(format!(
            "expected {}x{} stacked operator, got {}x{}",
            kappa * d,
            d,
            u.nrows(),
            u.ncols()
        )));
    }
    let ops: Vec<DMatrix<f64>> = (0..kappa).map(|i| u.rows(i * d, d).into_owned()).collect();
    KrausChannel::new(ops, Geometry::euclidean(d))
}

/// Conjugate a Euclidean-complete channel into an all-positive geometry:
/// `K_i = W^{-1/2} K~_i W^{1/2}`, which transports completeness exactly.
pub fn elliptic_channel(base: &KrausChannel, geometry: &Geometry) -> Result<KrausChannel> {
    if !base.geometry().is_euclidean() {
        return Err(Error::UnsupportedGeometry);
    }
    if geometry.dim() != base.dim() {
        return Err(Error::DimensionMismatch {
            expected: base.dim(),
            got: geometry.dim(),
        });
    }
    let w = geometry.weights();
    for (i, &v) in w.iter().enumerate() {
        if v.is_nan() || v <= 0.0 {
            return Err(Error::NonPositiveWeight { index: i, value: v });
        }
    }
    let d = base.dim();
    let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let ops = base
        .ops()
        .iter()
        .map(|k| {
            let mut out = k.clone();
            for i in 0..d {
                for j in 0..d {
                    out[(i, j)] *= sqrt_w[j] / sqrt_w[i];
                }
            }
            out
        })
        .collect();
    KrausChannel::new(ops, geometry.clone())
}

/// Cayley construction for an arbitrary nonzero weighting vector, intended
/// for the indefinite (Lorentzian) and product cases: `A = W_n^{-1} S` for
/// the materialised free skew S, so w-completeness holds by construction.
pub fn lorentz_cayley(
    skew: &SkewParam,
    geometry: &Geometry,
    kappa: usize,
    d: usize,
) -> Result<KrausChannel> {
    let (channel, _, _) = lorentz_cayley_full(skew, geometry, kappa, d)?;
    Ok(channel)
}

pub(crate) fn lorentz_cayley_full(
    skew: &SkewParam,
    geometry: &Geometry,
    kappa: usize,
    d: usize,
) -> Result<(KrausChannel, DMatrix<f64>, DMatrix<f64>)> {
    let n = kappa * d;
    if skew.n() != n {
        return Err(Error::ShapeMismatch(format!(
            "skew parameter size {} does not match kappa*d = {n}",
            skew.n()
        )));
    }
    if geometry.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: geometry.dim(),
        });
    }
    let w = geometry.weights();
    let mut a = skew.materialize();
    // A = W_n^{-1} S: scale row i by 1 / w[i mod d].
    for i in 0..n {
        let wi = w[i % d];
        a.row_mut(i).scale_mut(1.0 / wi);
    }
    // Indefinite metrics allow real eigenvalues of A; -1 breaks the Cayley
    // transform. Guard via the condition number where an SVD is affordable,
    // otherwise fall back to the solve-residual check inside cayley_q.
    if n <= COND_SVD_LIMIT {
        let i_plus = DMatrix::identity(n, n) + &a;
        let sv = i_plus.svd(false, false).singular_values;
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if cond > NEAR_SINGULAR_COND {
            return Err(Error::NearSingular { cond });
        }
    }
    let q = cayley_q(&a)?;
    let u = q.columns(0, d).into_owned();
    let ops: Vec<DMatrix<f64>> = (0..kappa).map(|i| u.rows(i * d, d).into_owned()).collect();
    let channel = KrausChannel::new(ops, geometry.clone())?;
    Ok((channel, a, q))
}

/// Block-diagonal concatenation of channels sharing a Kraus rank. The i-th
/// operator of the result is the direct sum of the blocks' i-th operators,
/// and the weighting vectors concatenate.
pub fn product_channel(blocks: &[KrausChannel]) -> Result<KrausChannel> {
    match blocks {
        [] => Err(Error::EmptyChannel),
        [single] => Ok(single.clone()),
        _ => {
            let kappa = blocks[0].kappa();
            if blocks.iter().any(|b| b.kappa() != kappa) {
                return Err(Error::KappaMismatch);
            }
            let total: usize = blocks.iter().map(|b| b.dim()).sum();
            let mut geom_blocks = Vec::new();
            for b in blocks {
                match b.geometry() {
                    Geometry::Euclidean { dim } => geom_blocks.push(GeometryBlock::Euclidean(*dim)),
                    Geometry::Elliptic { w } => geom_blocks.push(GeometryBlock::Elliptic(w.clone())),
                    Geometry::Hyperbolic { dim } => {
                        geom_blocks.push(GeometryBlock::Hyperbolic(*dim))
                    }
                    Geometry::Product { blocks: inner } => geom_blocks.extend(inner.iter().cloned()),
                }
            }
            let geometry = Geometry::product(geom_blocks)?;
            let mut ops = Vec::with_capacity(kappa);
            for i in 0..kappa {
                let mut op = DMatrix::zeros(total, total);
                let mut offset = 0;
                for b in blocks {
                    let dim = b.dim();
                    op.view_mut((offset, offset), (dim, dim))
                        .copy_from(&b.ops()[i]);
                    offset += dim;
                }
                ops.push(op);
            }
            KrausChannel::new(ops, geometry)
        }
    }
}

/// Degree-adaptive entity rank `min(d, ceil(k0 * deg / mean_deg))`, floored
/// at 1 so isolated entities still get a representation.
pub fn adaptive_rank(deg: usize, mean_deg: f64, k0: usize, d: usize) -> usize {
    assert!(mean_deg > 0.0, "mean degree must be positive");
    assert!(k0 >= 1 && d >= 1);
    let raw = (k0 as f64 * deg as f64 / mean_deg).ceil() as usize;
    raw.clamp(1, d)
}

/// Low-rank entity factor with a lower-triangular mask: entries (i, j) with
/// j > i are structurally zero (only the top k x k block is affected; rows
/// below it are full).
#[derive(Debug, Clone, PartialEq)]
pub struct EntityParam {
    pub entity_id: u32,
    factor: DMatrix<f64>,
}

impl EntityParam {
    pub fn new(entity_id: u32, mut factor: DMatrix<f64>) -> Self {
        mask_lower(&mut factor);
        EntityParam { entity_id, factor }
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Mutable access; the caller must preserve the mask (gradient updates
    /// do, because masked coordinates always carry zero gradient).
    pub fn factor_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.factor
    }

    pub fn is_masked(i: usize, j: usize) -> bool {
        j > i
    }

    pub fn density(&self) -> Result<crate::density::DensityMatrix> {
        crate::density::DensityMatrix::from_factor(&self.factor)
    }
}

/// Zero all entries above the diagonal band.
pub fn mask_lower(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > i {
                m[(i, j)] = 0.0;
            }
        }
    }
}

/// Entity factor initialisation: entries from N(0, 1/d), masked. The
/// all-zero draw (measure zero, but possible for tiny shapes) is resampled.
pub fn init_entity(d: usize, k: usize, seed: u64) -> EntityParam {
    assert!((1..=d).contains(&k), "entity rank must lie in [1, d]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (1.0 / d as f64).sqrt()).unwrap();
    loop {
        let mut factor = DMatrix::from_fn(d, k, |_, _| normal.sample(&mut rng));
        mask_lower(&mut factor);
        if factor.norm() > crate::density::ZERO_FACTOR_TOL {
            return EntityParam {
                entity_id: 0,
                factor,
            };
        }
    }
}

/// Relation skew initialisation: free entries from N(0, sigma^2). With
/// sigma = 0.01 the Cayley image starts near the identity Stiefel point.
pub fn init_relation(kappa: usize, d: usize, sigma: f64, seed: u64) -> SkewParam {
    assert!(sigma > 0.0);
    let n = kappa * d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    let free = (0..n * (n - 1) / 2).map(|_| normal.sample(&mut rng)).collect();
    SkewParam { n, free }
}

/// Intermediates of a channel build, kept for the reverse pass.
#[derive(Debug, Clone)]
pub(crate) struct ChannelBuild {
    pub channel: KrausChannel,
    /// The matrix actually pushed through the Cayley transform (equals the
    /// materialised skew for Euclidean/elliptic geometries, `W_n^{-1} S`
    /// otherwise).
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

/// Build the relation channel for a geometry from its free skew parameter.
pub fn build_channel(
    skew: &SkewParam,
    geometry: &Geometry,
    kappa: usize,
    d: usize,
) -> Result<KrausChannel> {
    Ok(build_channel_full(skew, geometry, kappa, d)?.channel)
}

pub(crate) fn build_channel_full(
    skew: &SkewParam,
    geometry: &Geometry,
    kappa: usize,
    d: usize,
) -> Result<ChannelBuild> {
    let n = kappa * d;
    if skew.n() != n {
        return Err(Error::ShapeMismatch(format!(
            "skew parameter size {} does not match kappa*d = {n}",
            skew.n()
        )));
    }
    match geometry {
        Geometry::Euclidean { .. } => {
            let a = skew.materialize();
            let q = cayley_q(&a)?;
            let u = q.columns(0, d).into_owned();
            let channel = unstack(&u, kappa, d)?;
            Ok(ChannelBuild { channel, a, q })
        }
        Geometry::Elliptic { .. } => {
            let a = skew.materialize();
            let q = cayley_q(&a)?;
            let u = q.columns(0, d).into_owned();
            let base = unstack(&u, kappa, d)?;
            let channel = elliptic_channel(&base, geometry)?;
            Ok(ChannelBuild { channel, a, q })
        }
        Geometry::Hyperbolic { .. } | Geometry::Product { .. } => {
            let (channel, a, q) = lorentz_cayley_full(skew, geometry, kappa, d)?;
            Ok(ChannelBuild { channel, a, q })
        }
    }
}
