//! Knowledge-graph embedding with relations as completeness-constrained
//! Kraus channels.
//!
//! Entities are density matrices built from low-rank factors; each relation
//! is a family of operators `{K_i}` acting as `rho -> sum_i K_i rho K_i^T`
//! under the completeness constraint `sum_i K_i^T diag(w) K_i = diag(w)`.
//! The constraint is satisfied by construction through a Cayley
//! parametrisation, so training needs no projection or norm correction,
//! multi-hop queries reduce to operator composition, and the spectrum of a
//! relation's Choi matrix doubles as a per-relation complexity diagnostic.
//!
//! Module map:
//! - [`geometry`], [`density`], [`channel`], [`choi`]: the channel algebra
//! - [`parametrize`]: constraint-satisfying parametrisations
//! - [`data`]: triple ingestion, relation statistics, rank oracles
//! - [`train`]: scoring, loss, gradients, the epoch loop
//! - [`eval`]: filtered ranking, multi-hop evaluation, diagnostics
//! - [`baselines`]: prior operator-family models as kappa = 1 channels

pub mod baselines;
pub mod channel;
pub mod choi;
pub mod data;
pub mod density;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod parametrize;
pub mod train;

pub use baselines::VectorEmbedding;
pub use channel::{compose_path, KrausChannel, DEFAULT_KAPPA_CAP};
pub use choi::{choi_matrix, effective_rank, kraus_from_choi, ChoiMatrix};
pub use data::{Split, Triple, TripleStore};
pub use density::{hs_overlap, w_trace, DensityMatrix};
pub use error::{Error, Result};
pub use eval::{metrics, Direction, Evaluator, MetricsReport, PathQuery, RankKind, RankResult};
pub use geometry::{Geometry, GeometryBlock};
pub use parametrize::{
    adaptive_rank, build_channel, cayley_stiefel, elliptic_channel, init_entity, init_relation,
    lorentz_cayley, product_channel, unstack, EntityParam, SkewParam,
};
pub use train::{
    adam_step, adversarial_weights, gradients, margin_loss, sample_negatives, score, train,
    train_epoch, AdamState, Batch, Gradients, ModelParams, TrainConfig, TrainOutcome,
};
