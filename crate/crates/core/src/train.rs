//! Scoring, loss, negative sampling, analytic gradients, and the epoch
//! loop.
//!
//! The score of a triple (h, r, t) is the Hilbert-Schmidt overlap between
//! the channel image of the head density and the tail density. With
//! low-rank factors it reduces to
//!
//! ```text
//! s(h, r, t) = sum_i |L_t^T K_i L_h|_F^2 / (tr(L_h L_h^T) tr(L_t L_t^T))
//! ```
//!
//! which never materialises a d x d density. Training minimises a
//! margin ranking loss with self-adversarial negative weights; gradients
//! are hand-derived adjoints through the low-rank score, the operator
//! stack, and the Cayley transform `dQ = -(I+A)^{-1} dA (I+Q)`, and are
//! validated against central finite differences.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{Split, Triple, TripleStore};
use crate::error::{Error, Result};
use crate::eval::{metrics, Evaluator, RankKind};
use crate::geometry::Geometry;
use crate::parametrize::{
    adaptive_rank, build_channel_full, init_entity, init_relation, mask_lower, ChannelBuild,
    EntityParam, SkewParam,
};

/// Scores above this are clamped before entering the hinge. Euclidean
/// scores live in [0, 1] and never hit it; indefinite-metric scores can
/// grow without bound.
pub const SCORE_CLAMP: f64 = 10.0;
/// Relation skew initialisation scale.
pub const INIT_SIGMA: f64 = 0.01;
/// Adam denominator offset.
pub const ADAM_EPS: f64 = 1e-8;
/// Maximum relative error tolerated by the gradient check.
pub const GRAD_CHECK_TOL: f64 = 1e-4;
/// Central-difference step for the gradient check.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub d: usize,
    pub kappa: usize,
    pub k0: usize,
    /// Margin of the ranking loss.
    pub gamma: f64,
    /// Self-adversarial temperature; 0 gives uniform negative weights.
    pub alpha: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub max_epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping; 0 stops
    /// after the first epoch.
    pub patience: usize,
    pub geometry: Geometry,
    pub seed: u64,
    pub adam_betas: (f64, f64),
    /// Run the finite-difference gradient check every this many batches
    /// (0 = off).
    pub grad_check_interval: usize,
}

impl TrainConfig {
    /// Euclidean defaults sized for small graphs.
    pub fn euclidean(d: usize, kappa: usize, k0: usize) -> Self {
        TrainConfig {
            d,
            kappa,
            k0,
            gamma: 0.5,
            alpha: 1.0,
            lr: 1e-2,
            batch_size: 128,
            negatives_per_positive: 8,
            max_epochs: 200,
            patience: 200,
            geometry: Geometry::euclidean(d),
            seed: 0,
            adam_betas: (0.9, 0.999),
            grad_check_interval: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.d >= 1
            && self.kappa >= 1
            && (1..=self.d).contains(&self.k0)
            && self.gamma > 0.0
            && self.alpha >= 0.0
            && self.lr >= 0.0
            && self.batch_size >= 1
            && self.negatives_per_positive >= 1
            && self.adam_betas.0 >= 0.0
            && self.adam_betas.0 < 1.0
            && self.adam_betas.1 >= 0.0
            && self.adam_betas.1 < 1.0;
        if !ok {
            return Err(Error::InvalidParams("bad training configuration".into()));
        }
        if self.geometry.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: self.geometry.dim(),
            });
        }
        Ok(())
    }
}

/// Deterministic per-object seed stream (splitmix64 finish).
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// All trainable parameters: one masked low-rank factor per entity and one
/// free skew matrix per relation, indexed by vocabulary id.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub entities: Vec<EntityParam>,
    pub relations: Vec<SkewParam>,
    pub config: TrainConfig,
}

impl ModelParams {
    /// Initialise from a store: entity ranks are degree-adaptive, relation
    /// skews start near the identity Stiefel point.
    pub fn init(store: &TripleStore, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mean_deg = store.mean_degree();
        let mut entities = Vec::with_capacity(store.n_entities());
        for e in 0..store.n_entities() as u32 {
            let k = adaptive_rank(store.degree(e) as usize, mean_deg, config.k0, config.d);
            let mut p = init_entity(config.d, k, derive_seed(config.seed, 1, e as u64));
            p.entity_id = e;
            entities.push(p);
        }
        let relations = (0..store.n_relations() as u32)
            .map(|r| {
                init_relation(
                    config.kappa,
                    config.d,
                    INIT_SIGMA,
                    derive_seed(config.seed, 2, r as u64),
                )
            })
            .collect();
        Ok(ModelParams {
            entities,
            relations,
            config,
        })
    }

    pub fn entity(&self, id: u32) -> Result<&EntityParam> {
        self.entities.get(id as usize).ok_or(Error::MissingParam {
            kind: "entity",
            id,
        })
    }

    pub fn relation(&self, id: u32) -> Result<&SkewParam> {
        self.relations.get(id as usize).ok_or(Error::MissingParam {
            kind: "relation",
            id,
        })
    }

    /// Build the relation's channel from its current skew parameter.
    pub fn channel_for(&self, id: u32) -> Result<crate::channel::KrausChannel> {
        Ok(self.build_for(id)?.channel.with_relation(id))
    }

    fn build_for(&self, id: u32) -> Result<ChannelBuild> {
        let skew = self.relation(id)?;
        build_channel_full(skew, &self.config.geometry, self.config.kappa, self.config.d)
    }
}

/// Low-rank triple score. Equals `tr(rho_t sum_i K_i rho_h K_i^T)` and lies
/// in [0, 1] for Euclidean-complete channels.
pub fn score(
    head: &EntityParam,
    channel: &crate::channel::KrausChannel,
    tail: &EntityParam,
) -> Result<f64> {
    let d = channel.dim();
    if head.dim() != d || tail.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: head.dim().max(tail.dim()),
        });
    }
    let nh = head.factor().norm_squared();
    let nt = tail.factor().norm_squared();
    if nh <= crate::density::ZERO_FACTOR_TOL || nt <= crate::density::ZERO_FACTOR_TOL {
        return Err(Error::ZeroFactor);
    }
    let lt_t = tail.factor().transpose();
    let mut raw = 0.0;
    for k in channel.ops() {
        raw += (&lt_t * k * head.factor()).norm_squared();
    }
    Ok(raw / (nh * nt))
}

/// Softmax of `alpha * scores`, computed with max subtraction.
pub fn adversarial_weights(scores: &[f64], alpha: f64) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let m = scores
        .iter()
        .map(|s| alpha * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (alpha * s - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Weighted hinge loss `sum_p sum_j w_pj max(0, gamma - s_p + s_pj)`.
/// Weights default to uniform per positive.
pub fn margin_loss(
    pos: &[f64],
    neg: &[Vec<f64>],
    gamma: f64,
    weights: Option<&[Vec<f64>]>,
) -> Result<f64> {
    if pos.len() != neg.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} positives vs {} negative lists",
            pos.len(),
            neg.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != neg.len() || w.iter().zip(neg).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::ShapeMismatch("weights shape mismatch".into()));
        }
    }
    let mut loss = 0.0;
    for (i, (&sp, sns)) in pos.iter().zip(neg).enumerate() {
        if sns.is_empty() {
            return Err(Error::EmptyNegatives);
        }
        let uniform = 1.0 / sns.len() as f64;
        for (j, &sn) in sns.iter().enumerate() {
            let w = weights.map(|w| w[i][j]).unwrap_or(uniform);
            loss += w * (gamma - sp + sn).max(0.0);
        }
    }
    Ok(loss)
}

/// Draw corrupted triples, rejecting any that form a known train triple.
pub fn sample_negatives(
    triple: Triple,
    store: &TripleStore,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Triple>> {
    let n_entities = store.n_entities() as u32;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut accepted = None;
        for _ in 0..1000 {
            let head_side = rng.random_bool(0.5);
            let candidate = rng.random_range(0..n_entities);
            let corrupted = crate::data::corrupt_side(triple, candidate, head_side);
            if !store.train_contains(corrupted) {
                accepted = Some(corrupted);
                break;
            }
        }
        match accepted {
            Some(t) => out.push(t),
            None => return Err(Error::ExhaustedCandidates { attempts: 1000 }),
        }
    }
    Ok(out)
}

/// One training batch: positives with their sampled negatives.
#[derive(Debug, Clone)]
pub struct Batch {
    pub positives: Vec<Triple>,
    pub negatives: Vec<Vec<Triple>>,
}

/// Gradients mirroring `ModelParams`, keyed by id. Entity gradients carry
/// the lower-triangular mask; relation gradients address the free skew
/// entries.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub entities: BTreeMap<u32, DMatrix<f64>>,
    pub relations: BTreeMap<u32, Vec<f64>>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        let e: f64 = self.entities.values().map(|g| g.norm_squared()).sum();
        let r: f64 = self
            .relations
            .values()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>())
            .sum();
        (e + r).sqrt()
    }
}

struct BatchPass {
    loss: f64,
    grads: Gradients,
    hinge_terms: usize,
    hinge_active: usize,
    clamp_count: usize,
    max_residual: f64,
}

fn clamp_score(s: f64) -> (f64, bool) {
    if s > SCORE_CLAMP {
        (SCORE_CLAMP, true)
    } else if s < -SCORE_CLAMP {
        (-SCORE_CLAMP, true)
    } else {
        (s, false)
    }
}

/// Forward pass only, under externally fixed adversarial weights. This is
/// the function the finite-difference oracle probes.
pub fn batch_loss(params: &ModelParams, batch: &Batch, weights: &[Vec<f64>]) -> Result<f64> {
    let cache = build_cache(params, batch)?;
    let cfg = &params.config;
    let mut loss = 0.0;
    for (i, (p, negs)) in batch.positives.iter().zip(&batch.negatives).enumerate() {
        let (sp, _) = clamp_score(triple_score(params, &cache, *p)?);
        for (j, n) in negs.iter().enumerate() {
            let (sn, _) = clamp_score(triple_score(params, &cache, *n)?);
            loss += weights[i][j] * (cfg.gamma - sp + sn).max(0.0);
        }
    }
    Ok(loss)
}

/// Adversarial weights for a batch at the current parameters.
pub fn batch_weights(params: &ModelParams, batch: &Batch) -> Result<Vec<Vec<f64>>> {
    let cache = build_cache(params, batch)?;
    batch
        .negatives
        .iter()
        .map(|negs| {
            let scores: Result<Vec<f64>> = negs
                .iter()
                .map(|n| Ok(clamp_score(triple_score(params, &cache, *n)?).0))
                .collect();
            Ok(adversarial_weights(&scores?, params.config.alpha))
        })
        .collect()
}

fn build_cache(params: &ModelParams, batch: &Batch) -> Result<BTreeMap<u32, ChannelBuild>> {
    let mut relation_ids = BTreeSet::new();
    for t in batch
        .positives
        .iter()
        .chain(batch.negatives.iter().flatten())
    {
        relation_ids.insert(t.relation);
    }
    let mut cache = BTreeMap::new();
    for r in relation_ids {
        cache.insert(r, params.build_for(r)?);
    }
    Ok(cache)
}

fn triple_score(
    params: &ModelParams,
    cache: &BTreeMap<u32, ChannelBuild>,
    t: Triple,
) -> Result<f64> {
    let ch = &cache
        .get(&t.relation)
        .ok_or(Error::MissingParam {
            kind: "relation",
            id: t.relation,
        })?
        .channel;
    score(params.entity(t.head)?, ch, params.entity(t.tail)?)
}

/// Exact gradients of the batch loss with respect to every entity factor
/// entry (lower band only) and every relation skew entry. Adversarial
/// weights are treated as constants.
pub fn gradients(params: &ModelParams, batch: &Batch) -> Result<Gradients> {
    let weights = batch_weights(params, batch)?;
    Ok(forward_backward(params, batch, &weights)?.grads)
}

fn forward_backward(params: &ModelParams, batch: &Batch, weights: &[Vec<f64>]) -> Result<BatchPass> {
    if batch.positives.len() != batch.negatives.len() || weights.len() != batch.positives.len() {
        return Err(Error::ShapeMismatch("batch shape mismatch".into()));
    }
    let cfg = &params.config;
    let cache = build_cache(params, batch)?;
    let max_residual = cache
        .values()
        .map(|b| b.channel.completeness_residual())
        .fold(0.0, f64::max);

    // Forward: scores and hinge coefficients dL/ds per scored triple.
    let mut loss = 0.0;
    let mut hinge_terms = 0;
    let mut hinge_active = 0;
    let mut clamp_count = 0;
    // (triple, coeff, clamped)
    let mut contributions: Vec<(Triple, f64, bool)> = Vec::new();
    for (i, (p, negs)) in batch.positives.iter().zip(&batch.negatives).enumerate() {
        if negs.is_empty() {
            return Err(Error::EmptyNegatives);
        }
        let (sp, p_clamped) = clamp_score(triple_score(params, &cache, *p)?);
        if p_clamped {
            clamp_count += 1;
        }
        let mut pos_coeff = 0.0;
        for (j, n) in negs.iter().enumerate() {
            let (sn, n_clamped) = clamp_score(triple_score(params, &cache, *n)?);
            if n_clamped {
                clamp_count += 1;
            }
            hinge_terms += 1;
            let w = weights[i][j];
            let term = cfg.gamma - sp + sn;
            if term > 0.0 {
                hinge_active += 1;
                loss += w * term;
                pos_coeff -= w;
                contributions.push((*n, w, n_clamped));
            }
        }
        if pos_coeff != 0.0 {
            contributions.push((*p, pos_coeff, p_clamped));
        }
    }

    // Backward through the low-rank score.
    let mut ent_grads: BTreeMap<u32, DMatrix<f64>> = BTreeMap::new();
    let mut op_grads: BTreeMap<u32, Vec<DMatrix<f64>>> = BTreeMap::new();
    for (t, coeff, clamped) in contributions {
        if clamped {
            continue; // flat region of the clamp
        }
        let build = &cache[&t.relation];
        let head = params.entity(t.head)?;
        let tail = params.entity(t.tail)?;
        let lh = head.factor();
        let lt = tail.factor();
        let nh = lh.norm_squared();
        let nt = lt.norm_squared();
        if nh <= crate::density::ZERO_FACTOR_TOL || nt <= crate::density::ZERO_FACTOR_TOL {
            return Err(Error::ZeroFactor);
        }
        let inv = 1.0 / (nh * nt);
        let lt_t = lt.transpose();
        let mut raw = 0.0;
        let kappa = build.channel.kappa();
        let d = cfg.d;
        let ops = build.channel.ops();

        let ent_h = ent_grads
            .entry(t.head)
            .or_insert_with(|| DMatrix::zeros(lh.nrows(), lh.ncols()));
        // Accumulate the per-operator terms first; the normaliser terms
        // need the raw score, added after the loop.
        let mut gh = DMatrix::zeros(lh.nrows(), lh.ncols());
        let mut gt = DMatrix::zeros(lt.nrows(), lt.ncols());
        let kgrads = op_grads
            .entry(t.relation)
            .or_insert_with(|| vec![DMatrix::zeros(d, d); kappa]);
        for (idx, k) in ops.iter().enumerate() {
            let g = &lt_t * k * lh;
            raw += g.norm_squared();
            gh += k.transpose() * lt * &g;
            gt += k * lh * g.transpose();
            kgrads[idx] += lt * &g * lh.transpose() * (2.0 * coeff * inv);
        }
        let s = raw * inv;
        gh *= 2.0 * coeff * inv;
        gh -= lh * (2.0 * coeff * s / nh);
        *ent_h += gh;
        let ent_t = ent_grads
            .entry(t.tail)
            .or_insert_with(|| DMatrix::zeros(lt.nrows(), lt.ncols()));
        gt *= 2.0 * coeff * inv;
        gt -= lt * (2.0 * coeff * s / nt);
        *ent_t += gt;
    }
    for g in ent_grads.values_mut() {
        mask_lower(g);
    }

    // Backward through the parametrisation: operator stack -> Cayley ->
    // free skew entries.
    let mut rel_grads: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (r, kgrads) in op_grads {
        let build = &cache[&r];
        rel_grads.insert(r, skew_gradient(cfg, build, kgrads)?);
    }

    Ok(BatchPass {
        loss,
        grads: Gradients {
            entities: ent_grads,
            relations: rel_grads,
        },
        hinge_terms,
        hinge_active,
        clamp_count,
        max_residual,
    })
}

/// Pull operator gradients back to the free skew entries.
///
/// Chain: K_i -> U (unstacking is a reshape) -> Q (column selection) -> A
/// via the Cayley differential `dQ = -(I+A)^{-1} dA (I+Q)`, whose adjoint
/// is `A_bar = -(I+A)^{-T} Q_bar (I+Q)^T` -> free entries through the
/// geometry-specific map from the stored skew to A.
fn skew_gradient(
    cfg: &TrainConfig,
    build: &ChannelBuild,
    mut kgrads: Vec<DMatrix<f64>>,
) -> Result<Vec<f64>> {
    let d = cfg.d;
    let kappa = cfg.kappa;
    let n = kappa * d;

    // Elliptic case: undo the change of variables K = W^{-1/2} K~ W^{1/2}.
    if let Geometry::Elliptic { .. } = cfg.geometry {
        let w = cfg.geometry.weights();
        let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        for k in &mut kgrads {
            for i in 0..d {
                for j in 0..d {
                    k[(i, j)] *= sqrt_w[j] / sqrt_w[i];
                }
            }
        }
    }

    // Stack operator gradients into U_bar (n x d).
    let mut u_bar = DMatrix::zeros(n, d);
    for (i, k) in kgrads.iter().enumerate() {
        u_bar.rows_mut(i * d, d).copy_from(k);
    }

    // A_bar = -(I+A)^{-T} [U_bar | 0] (I+Q)^T; with the zero block this is
    // -X ((I+Q)[:, :d])^T for X = (I+A)^{-T} U_bar.
    let i_plus_t = (DMatrix::identity(n, n) + &build.a).transpose();
    let x = i_plus_t
        .lu()
        .solve(&u_bar)
        .ok_or(Error::SolveFailure { residual: f64::INFINITY })?;
    let iq_cols = (DMatrix::identity(n, n) + &build.q)
        .columns(0, d)
        .into_owned();
    let mut a_bar = -(&x * iq_cols.transpose());

    // Indefinite/product case: A = W_n^{-1} S.
    match cfg.geometry {
        Geometry::Euclidean { .. } | Geometry::Elliptic { .. } => {}
        Geometry::Hyperbolic { .. } | Geometry::Product { .. } => {
            let w = cfg.geometry.weights();
            for i in 0..n {
                let wi = w[i % d];
                a_bar.row_mut(i).scale_mut(1.0 / wi);
            }
        }
    }

    // S = (B - B^T)/2 over the strictly-lower free entries.
    let mut free = vec![0.0; n * (n - 1) / 2];
    for i in 1..n {
        for j in 0..i {
            free[SkewParam::index(i, j)] = 0.5 * (a_bar[(i, j)] - a_bar[(j, i)]);
        }
    }
    Ok(free)
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked_coords: usize,
}

/// Compare analytic gradients against central finite differences of the
/// frozen-weight batch loss. The relative error denominator is floored at
/// 1e-4 so that coordinates with near-zero gradient are compared
/// absolutely at 1e-8.
pub fn gradient_check(params: &ModelParams, batch: &Batch, step: f64) -> Result<GradCheckReport> {
    let weights = batch_weights(params, batch)?;
    let analytic = forward_backward(params, batch, &weights)?.grads;

    let mut max_rel = 0.0_f64;
    let mut checked = 0usize;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-4);

    let mut probe = params.clone();
    for e in 0..params.entities.len() {
        let (rows, cols) = {
            let f = params.entities[e].factor();
            (f.nrows(), f.ncols())
        };
        for i in 0..rows {
            for j in 0..cols {
                if EntityParam::is_masked(i, j) {
                    continue;
                }
                let base = params.entities[e].factor()[(i, j)];
                probe.entities[e].factor_mut()[(i, j)] = base + step;
                let up = batch_loss(&probe, batch, &weights)?;
                probe.entities[e].factor_mut()[(i, j)] = base - step;
                let down = batch_loss(&probe, batch, &weights)?;
                probe.entities[e].factor_mut()[(i, j)] = base;
                let fd = (up - down) / (2.0 * step);
                let an = analytic
                    .entities
                    .get(&(e as u32))
                    .map(|g| g[(i, j)])
                    .unwrap_or(0.0);
                max_rel = max_rel.max(rel(an, fd));
                checked += 1;
            }
        }
    }
    for r in 0..params.relations.len() {
        for idx in 0..params.relations[r].free().len() {
            let base = params.relations[r].free()[idx];
            probe.relations[r].free_mut()[idx] = base + step;
            let up = batch_loss(&probe, batch, &weights)?;
            probe.relations[r].free_mut()[idx] = base - step;
            let down = batch_loss(&probe, batch, &weights)?;
            probe.relations[r].free_mut()[idx] = base;
            let fd = (up - down) / (2.0 * step);
            let an = analytic
                .relations
                .get(&(r as u32))
                .map(|g| g[idx])
                .unwrap_or(0.0);
            max_rel = max_rel.max(rel(an, fd));
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        checked_coords: checked,
    })
}

/// Adam first/second-moment state, dense over all parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    t: u64,
    m_ent: Vec<DMatrix<f64>>,
    v_ent: Vec<DMatrix<f64>>,
    m_rel: Vec<Vec<f64>>,
    v_rel: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            t: 0,
            m_ent: params
                .entities
                .iter()
                .map(|e| DMatrix::zeros(e.factor().nrows(), e.factor().ncols()))
                .collect(),
            v_ent: params
                .entities
                .iter()
                .map(|e| DMatrix::zeros(e.factor().nrows(), e.factor().ncols()))
                .collect(),
            m_rel: params
                .relations
                .iter()
                .map(|r| vec![0.0; r.free().len()])
                .collect(),
            v_rel: params
                .relations
                .iter()
                .map(|r| vec![0.0; r.free().len()])
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// Standard Adam update with bias correction. Parameters without a moment
/// history and without a gradient this step are left untouched.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    betas: (f64, f64),
) {
    state.t += 1;
    let (b1, b2) = betas;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);

    for (e, param) in params.entities.iter_mut().enumerate() {
        let grad = grads.entities.get(&(e as u32));
        let m = &mut state.m_ent[e];
        let v = &mut state.v_ent[e];
        if grad.is_none() && m.amax() == 0.0 && v.amax() == 0.0 {
            continue;
        }
        let f = param.factor_mut();
        for i in 0..f.nrows() {
            for j in 0..f.ncols() {
                let g = grad.map(|g| g[(i, j)]).unwrap_or(0.0);
                m[(i, j)] = b1 * m[(i, j)] + (1.0 - b1) * g;
                v[(i, j)] = b2 * v[(i, j)] + (1.0 - b2) * g * g;
                let m_hat = m[(i, j)] / bc1;
                let v_hat = v[(i, j)] / bc2;
                f[(i, j)] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
    for (r, param) in params.relations.iter_mut().enumerate() {
        let grad = grads.relations.get(&(r as u32));
        let m = &mut state.m_rel[r];
        let v = &mut state.v_rel[r];
        if grad.is_none() && m.iter().all(|&x| x == 0.0) && v.iter().all(|&x| x == 0.0) {
            continue;
        }
        let free = param.free_mut();
        for idx in 0..free.len() {
            let g = grad.map(|g| g[idx]).unwrap_or(0.0);
            m[idx] = b1 * m[idx] + (1.0 - b1) * g;
            v[idx] = b2 * v[idx] + (1.0 - b2) * g * g;
            let m_hat = m[idx] / bc1;
            let v_hat = v[idx] / bc2;
            free[idx] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub grad_norm: f64,
    pub hinge_rate: f64,
    pub max_completeness_residual: f64,
    pub clamp_count: usize,
}

/// One pass over shuffled training batches. Channels are rebuilt from the
/// updated skew parameters every batch; the completeness residual never
/// drifts because the constraint holds by construction.
pub fn train_epoch(
    store: &TripleStore,
    params: &mut ModelParams,
    state: &mut AdamState,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats> {
    let cfg = params.config.clone();
    let mut order: Vec<usize> = (0..store.triples(Split::Train).len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(rng);

    let mut total_loss = 0.0;
    let mut total_pos = 0usize;
    let mut grad_norm_acc = 0.0;
    let mut batches = 0usize;
    let mut hinge_terms = 0usize;
    let mut hinge_active = 0usize;
    let mut clamp_count = 0usize;
    let mut max_residual = 0.0_f64;

    for chunk in order.chunks(cfg.batch_size) {
        let positives: Vec<Triple> = chunk
            .iter()
            .map(|&i| store.triples(Split::Train)[i])
            .collect();
        let negatives: Result<Vec<Vec<Triple>>> = positives
            .iter()
            .map(|&p| sample_negatives(p, store, cfg.negatives_per_positive, rng))
            .collect();
        let batch = Batch {
            positives,
            negatives: negatives?,
        };
        let weights = batch_weights(params, &batch)?;
        let pass = forward_backward(params, &batch, &weights)?;

        if cfg.grad_check_interval > 0 && batches.is_multiple_of(cfg.grad_check_interval) {
            let probe = Batch {
                positives: batch.positives[..batch.positives.len().min(2)].to_vec(),
                negatives: batch.negatives[..batch.negatives.len().min(2)].to_vec(),
            };
            let report = gradient_check(params, &probe, GRAD_CHECK_STEP)?;
            if report.max_rel_err > GRAD_CHECK_TOL {
                return Err(Error::GradCheckFailed {
                    max_rel_err: report.max_rel_err,
                });
            }
        }

        total_loss += pass.loss;
        total_pos += batch.positives.len();
        grad_norm_acc += pass.grads.norm();
        hinge_terms += pass.hinge_terms;
        hinge_active += pass.hinge_active;
        clamp_count += pass.clamp_count;
        max_residual = max_residual.max(pass.max_residual);
        batches += 1;

        adam_step(params, &pass.grads, state, cfg.lr, cfg.adam_betas);
    }

    Ok(EpochStats {
        mean_loss: if total_pos > 0 {
            total_loss / total_pos as f64
        } else {
            0.0
        },
        grad_norm: if batches > 0 {
            grad_norm_acc / batches as f64
        } else {
            0.0
        },
        hinge_rate: if hinge_terms > 0 {
            hinge_active as f64 / hinge_terms as f64
        } else {
            0.0
        },
        max_completeness_residual: max_residual,
        clamp_count,
    })
}

/// One structured record per epoch.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mrr: f64,
    pub grad_norm: f64,
    pub max_completeness_residual: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation-MRR epoch.
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mrr: f64,
}

/// Full training loop with early stopping on validation MRR. Returns the
/// best-validation checkpoint, not the last iterate.
pub fn train(store: &TripleStore, config: TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if store.triples(Split::Train).is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if store.triples(Split::Valid).is_empty() {
        return Err(Error::EmptySplit("valid"));
    }
    let mut params = ModelParams::init(store, config.clone())?;
    let mut state = AdamState::new(&params);
    let mut history = Vec::new();
    let mut best_params = params.clone();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut stale = 0usize;

    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 3, epoch as u64));
        let stats = train_epoch(store, &mut params, &mut state, &mut rng)?;
        let evaluator = Evaluator::new(&params, store)?;
        let ranks = evaluator.evaluate_split(Split::Valid)?;
        let val_mrr = metrics(&ranks, RankKind::Filtered)?.mrr;
        history.push(EpochRecord {
            epoch,
            train_loss: stats.mean_loss,
            val_mrr,
            grad_norm: stats.grad_norm,
            max_completeness_residual: stats.max_completeness_residual,
        });
        if val_mrr > best_val {
            best_val = val_mrr;
            best_epoch = epoch;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= config.patience {
            break;
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch,
        best_val_mrr: best_val,
    })
}
