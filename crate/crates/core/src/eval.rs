//! Filtered-ranking link prediction, mapping-pattern stratification,
//! multi-hop evaluation through channel composition, and the per-relation
//! rank diagnostics.
//!
//! Ranks use the mean-rank tie convention: rank = 1 + #strictly-better +
//! #equal/2, stored as a real number. The optimistic convention inflates
//! results on constant-score degenerate models; the mean convention makes
//! them score exactly like a uniform guesser.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::channel::{compose_path, KrausChannel, DEFAULT_KAPPA_CAP};
use crate::choi::{choi_matrix, effective_rank};
use crate::data::{relation_stats, MappingPattern, Split, Triple, TripleStore};
use crate::error::{Error, Result};
use crate::train::{score, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankKind {
    Raw,
    Filtered,
}

/// Rank of the true entity among candidates, raw and filtered. Real-valued
/// because ties contribute half steps.
#[derive(Debug, Clone, Copy)]
pub struct RankResult {
    pub triple: Triple,
    pub direction: Direction,
    pub raw_rank: f64,
    pub filtered_rank: f64,
}

impl RankResult {
    pub fn rank(&self, kind: RankKind) -> f64 {
        match kind {
            RankKind::Raw => self.raw_rank,
            RankKind::Filtered => self.filtered_rank,
        }
    }
}

/// MRR and Hits@K aggregates; optional per-pattern / per-relation
/// breakdowns.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub count: usize,
    pub per_pattern: Option<BTreeMap<MappingPattern, MetricsReport>>,
    pub per_relation: Option<BTreeMap<u32, MetricsReport>>,
}

/// Aggregate ranks into MRR / Hits@{1,3,10}.
pub fn metrics(ranks: &[RankResult], kind: RankKind) -> Result<MetricsReport> {
    if ranks.is_empty() {
        return Err(Error::EmptyRanks);
    }
    let n = ranks.len() as f64;
    let mut mrr = 0.0;
    let (mut h1, mut h3, mut h10) = (0.0, 0.0, 0.0);
    for r in ranks {
        let rank = r.rank(kind);
        mrr += 1.0 / rank;
        if rank <= 1.0 {
            h1 += 1.0;
        }
        if rank <= 3.0 {
            h3 += 1.0;
        }
        if rank <= 10.0 {
            h10 += 1.0;
        }
    }
    Ok(MetricsReport {
        mrr: mrr / n,
        hits1: h1 / n,
        hits3: h3 / n,
        hits10: h10 / n,
        count: ranks.len(),
        per_pattern: None,
        per_relation: None,
    })
}

/// A multi-hop query: only the head and the final answer are observed;
/// intermediate entities are not given.
#[derive(Debug, Clone)]
pub struct PathQuery {
    pub head: u32,
    pub path: Vec<u32>,
    pub answer: u32,
}

/// Per-relation diagnostic row.
#[derive(Debug, Clone)]
pub struct DiagnosticRow {
    pub relation: u32,
    pub fanout: f64,
    pub kappa_eff: usize,
    pub m_rank: usize,
    pub bound: usize,
    pub bound_satisfied: bool,
    pub pattern: MappingPattern,
}

#[derive(Debug, Clone)]
pub struct CorrelationReport {
    /// Spearman rank correlation of fan-out vs effective Kraus rank; NaN
    /// when either column is constant.
    pub rho: f64,
    pub degenerate: bool,
    pub rows: Vec<DiagnosticRow>,
}

/// Scores candidates with the model's channels; channels are built once
/// per evaluator.
pub struct Evaluator<'a> {
    params: &'a ModelParams,
    store: &'a TripleStore,
    channels: Vec<KrausChannel>,
}

impl<'a> Evaluator<'a> {
    pub fn new(params: &'a ModelParams, store: &'a TripleStore) -> Result<Self> {
        if params.entities.len() != store.n_entities() {
            return Err(Error::ShapeMismatch(format!(
                "model has {} entities, store has {}",
                params.entities.len(),
                store.n_entities()
            )));
        }
        let channels: Result<Vec<KrausChannel>> = (0..store.n_relations() as u32)
            .map(|r| params.channel_for(r))
            .collect();
        Ok(Evaluator {
            params,
            store,
            channels: channels?,
        })
    }

    pub fn channel(&self, relation: u32) -> Result<&KrausChannel> {
        self.channels
            .get(relation as usize)
            .ok_or(Error::UnknownId(relation))
    }

    /// Rank the true entity of one slot against all candidate
    /// replacements. Filtering removes candidates that form a different
    /// known-true triple in any split.
    pub fn rank_triple(&self, triple: Triple, direction: Direction) -> Result<RankResult> {
        let n = self.store.n_entities() as u32;
        if triple.head >= n || triple.tail >= n {
            return Err(Error::UnknownId(triple.head.max(triple.tail)));
        }
        let channel = self.channel(triple.relation)?;
        let (target, known): (u32, &[u32]) = match direction {
            Direction::Tail => (
                triple.tail,
                self.store.known_tails(triple.head, triple.relation),
            ),
            Direction::Head => (
                triple.head,
                self.store.known_heads(triple.relation, triple.tail),
            ),
        };

        // Fixed-slot half-products, shared across all candidates: for tail
        // prediction K_i L_h, for head prediction L_t^T K_i.
        let fixed = match direction {
            Direction::Tail => self.params.entity(triple.head)?,
            Direction::Head => self.params.entity(triple.tail)?,
        };
        let fixed_norm = fixed.factor().norm_squared();
        if fixed_norm <= crate::density::ZERO_FACTOR_TOL {
            return Err(Error::ZeroFactor);
        }
        let halves: Vec<nalgebra::DMatrix<f64>> = channel
            .ops()
            .iter()
            .map(|k| match direction {
                Direction::Tail => k * fixed.factor(),
                Direction::Head => fixed.factor().transpose() * k,
            })
            .collect();
        let candidate_score = |c: u32| -> Result<f64> {
            let cand = self.params.entity(c)?;
            let cn = cand.factor().norm_squared();
            if cn <= crate::density::ZERO_FACTOR_TOL {
                return Err(Error::ZeroFactor);
            }
            let raw: f64 = halves
                .iter()
                .map(|half| match direction {
                    Direction::Tail => (cand.factor().transpose() * half).norm_squared(),
                    Direction::Head => (half * cand.factor()).norm_squared(),
                })
                .sum();
            Ok(raw / (fixed_norm * cn))
        };

        let target_score = candidate_score(target)?;
        let mut raw_better = 0usize;
        let mut raw_equal = 0usize;
        let mut filt_better = 0usize;
        let mut filt_equal = 0usize;
        for c in 0..n {
            if c == target {
                continue;
            }
            let s = candidate_score(c)?;
            let filtered_out = known.binary_search(&c).is_ok();
            if s > target_score {
                raw_better += 1;
                if !filtered_out {
                    filt_better += 1;
                }
            } else if s == target_score {
                raw_equal += 1;
                if !filtered_out {
                    filt_equal += 1;
                }
            }
        }
        Ok(RankResult {
            triple,
            direction,
            raw_rank: 1.0 + raw_better as f64 + raw_equal as f64 / 2.0,
            filtered_rank: 1.0 + filt_better as f64 + filt_equal as f64 / 2.0,
        })
    }

    /// Rank every triple of a split in both directions.
    pub fn evaluate_split(&self, split: Split) -> Result<Vec<RankResult>> {
        let triples = self.store.triples(split);
        let results: Result<Vec<Vec<RankResult>>> = triples
            .par_iter()
            .map(|&t| {
                Ok(vec![
                    self.rank_triple(t, Direction::Head)?,
                    self.rank_triple(t, Direction::Tail)?,
                ])
            })
            .collect();
        Ok(results?.into_iter().flatten().collect())
    }

    /// Split metrics with a per-mapping-pattern breakdown. Patterns with no
    /// test triples are simply absent from the map.
    pub fn stratified_eval(&self, split: Split, kind: RankKind) -> Result<MetricsReport> {
        let ranks = self.evaluate_split(split)?;
        let mut overall = metrics(&ranks, kind)?;
        let mut patterns: HashMap<u32, MappingPattern> = HashMap::new();
        for r in 0..self.store.n_relations() as u32 {
            if let Ok(stats) = relation_stats(self.store, r, self.params.config.d) {
                patterns.insert(r, stats.pattern);
            }
        }
        let mut buckets: BTreeMap<MappingPattern, Vec<RankResult>> = BTreeMap::new();
        let mut by_relation: BTreeMap<u32, Vec<RankResult>> = BTreeMap::new();
        for rank in &ranks {
            if let Some(p) = patterns.get(&rank.triple.relation) {
                buckets.entry(*p).or_default().push(*rank);
            }
            by_relation.entry(rank.triple.relation).or_default().push(*rank);
        }
        let mut per_pattern = BTreeMap::new();
        for (p, rs) in buckets {
            per_pattern.insert(p, metrics(&rs, kind)?);
        }
        let mut per_relation = BTreeMap::new();
        for (r, rs) in by_relation {
            per_relation.insert(r, metrics(&rs, kind)?);
        }
        overall.per_pattern = Some(per_pattern);
        overall.per_relation = Some(per_relation);
        Ok(overall)
    }

    /// Evaluate multi-hop queries by composing the channels along the path
    /// and ranking the answer among all entities. Candidates that answer a
    /// different query with the same (head, path) are filtered when
    /// `filter_known_answers` is set. Queries whose composed operator count
    /// exceeds the cap are skipped and counted.
    pub fn multihop_eval(
        &self,
        queries: &[PathQuery],
        filter_known_answers: bool,
    ) -> Result<(MetricsReport, usize)> {
        if queries.is_empty() {
            return Err(Error::EmptyRanks);
        }
        // Known answers per (head, path) for filtering.
        let mut known: HashMap<(u32, &[u32]), Vec<u32>> = HashMap::new();
        for q in queries {
            known
                .entry((q.head, q.path.as_slice()))
                .or_default()
                .push(q.answer);
        }
        for v in known.values_mut() {
            v.sort_unstable();
            v.dedup();
        }

        let mut ranks = Vec::new();
        let mut skipped = 0usize;
        for q in queries {
            if q.path.len() < 2 {
                return Err(Error::InvalidParams(
                    "multi-hop query needs path length >= 2".into(),
                ));
            }
            let hops: Result<Vec<KrausChannel>> =
                q.path.iter().map(|&r| Ok(self.channel(r)?.clone())).collect();
            let composed = match compose_path(&hops?, DEFAULT_KAPPA_CAP) {
                Ok(c) => c,
                Err(Error::KappaOverflow { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let head = self.params.entity(q.head)?;
            let target_score = score(head, &composed, self.params.entity(q.answer)?)?;
            let answers = known[&(q.head, q.path.as_slice())].as_slice();
            let mut better = 0usize;
            let mut equal = 0usize;
            for c in 0..self.store.n_entities() as u32 {
                if c == q.answer {
                    continue;
                }
                if filter_known_answers && answers.binary_search(&c).is_ok() {
                    continue;
                }
                let s = score(head, &composed, self.params.entity(c)?)?;
                if s > target_score {
                    better += 1;
                } else if s == target_score {
                    equal += 1;
                }
            }
            let rank = 1.0 + better as f64 + equal as f64 / 2.0;
            ranks.push(RankResult {
                triple: Triple {
                    head: q.head,
                    relation: q.path[0],
                    tail: q.answer,
                },
                direction: Direction::Tail,
                raw_rank: rank,
                filtered_rank: rank,
            });
        }
        if ranks.is_empty() {
            return Err(Error::EmptyRanks);
        }
        Ok((metrics(&ranks, RankKind::Filtered)?, skipped))
    }

    /// Per-relation diagnostic rows: fan-out, effective Kraus rank of the
    /// learned Choi matrix, empirical-matrix rank and its lower bound.
    /// Requires a Euclidean model (the Choi construction is
    /// definite-metric only). Relations with no train triples are skipped.
    pub fn diagnostic_rows(&self, energy: f64) -> Result<Vec<DiagnosticRow>> {
        let d = self.params.config.d;
        let mut rows = Vec::new();
        for r in 0..self.store.n_relations() as u32 {
            let stats = match relation_stats(self.store, r, d) {
                Ok(s) => s,
                Err(Error::EmptyRelation(_)) => continue,
                Err(e) => return Err(e),
            };
            let choi = choi_matrix(self.channel(r)?)?;
            let kappa_eff = effective_rank(&choi, energy)?;
            rows.push(DiagnosticRow {
                relation: r,
                fanout: stats.fanout,
                kappa_eff,
                m_rank: stats.m_rank,
                bound: stats.bound,
                bound_satisfied: kappa_eff >= stats.bound,
                pattern: stats.pattern,
            });
        }
        Ok(rows)
    }

    /// Fan-out vs effective Kraus rank across relations. Needs at least 3
    /// relations with train triples for the correlation to mean anything.
    pub fn kappa_fanout_correlation(&self, energy: f64) -> Result<CorrelationReport> {
        let rows = self.diagnostic_rows(energy)?;
        if rows.len() < 3 {
            return Err(Error::TooFewRelations(rows.len()));
        }
        let fan: Vec<f64> = rows.iter().map(|r| r.fanout).collect();
        let keff: Vec<f64> = rows.iter().map(|r| r.kappa_eff as f64).collect();
        let (rho, degenerate) = spearman(&fan, &keff);
        Ok(CorrelationReport {
            rho,
            degenerate,
            rows,
        })
    }
}

/// Mid-rank (average) ranks for a sequence with ties.
fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with mid-rank ties. Returns (NaN, true) when
/// either input has no rank variance.
pub fn spearman(a: &[f64], b: &[f64]) -> (f64, bool) {
    assert_eq!(a.len(), b.len());
    let ra = mid_ranks(a);
    let rb = mid_ranks(b);
    let n = a.len() as f64;
    let mean_a = ra.iter().sum::<f64>() / n;
    let mean_b = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for i in 0..a.len() {
        let da = ra[i] - mean_a;
        let db = rb[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a <= 0.0 || var_b <= 0.0 {
        return (f64::NAN, true);
    }
    (cov / (var_a * var_b).sqrt(), false)
}
