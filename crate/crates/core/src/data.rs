//! Triple ingestion, vocabularies, adjacency indices, per-relation
//! statistics, and the empirical relation matrix with its rank oracle.
//!
//! Input files are TSV with one `head<TAB>relation<TAB>tail` triple per
//! line (LF or CRLF). Vocabulary ids are assigned in first-appearance order
//! across train, then valid, then test.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Compacted dimension above which exact dense rank is refused and the
/// randomized sketch is used instead (a dense 4000^2 double matrix is about
/// 128 MB).
pub const DENSE_RANK_CUTOFF: usize = 4000;
/// Pivot / singular value tolerance for rank decisions on 0/1 matrices.
pub const RANK_TOL: f64 = 1e-10;
/// Oversampling columns for the randomized range sketch.
const SKETCH_OVERSAMPLE: usize = 10;

/// A (head, relation, tail) triple by name, before interning.
pub type NamedTriple = (String, String, String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Bidirectional string/id mapping with first-appearance ordering.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Entity/relation vocabularies, split-partitioned triples, and adjacency
/// indices. The `filter_*` indices cover train + valid + test (for the
/// filtered ranking protocol); the `train_*` indices cover train only (for
/// negative-sample rejection, avoiding test leakage).
#[derive(Debug, Clone)]
pub struct TripleStore {
    pub entities: Vocab,
    pub relations: Vocab,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    filter_hr_tails: HashMap<(u32, u32), Vec<u32>>,
    filter_rt_heads: HashMap<(u32, u32), Vec<u32>>,
    train_hr_tails: HashMap<(u32, u32), Vec<u32>>,
    degrees: Vec<u32>,
    /// Duplicate lines dropped per split (train, valid, test).
    pub duplicate_warnings: [usize; 3],
}

impl TripleStore {
    pub fn load(
        train_path: impl AsRef<Path>,
        valid_path: impl AsRef<Path>,
        test_path: impl AsRef<Path>,
    ) -> Result<Self> {
        let train = read_tsv(train_path.as_ref())?;
        let valid = read_tsv(valid_path.as_ref())?;
        let test = read_tsv(test_path.as_ref())?;
        Self::from_named_splits(&train, &valid, &test)
    }

    /// Build a store from already-parsed (head, relation, tail) name
    /// triples. Duplicates within a split are dropped and counted.
    pub fn from_named_splits(
        train: &[NamedTriple],
        valid: &[NamedTriple],
        test: &[NamedTriple],
    ) -> Result<Self> {
        let mut entities = Vocab::default();
        let mut relations = Vocab::default();
        let mut duplicate_warnings = [0usize; 3];

        let mut intern_split = |named: &[NamedTriple],
                                idx: usize,
                                name: &'static str|
         -> Result<Vec<Triple>> {
            let mut out = Vec::with_capacity(named.len());
            let mut seen = HashSet::with_capacity(named.len());
            for (h, r, t) in named {
                let triple = Triple {
                    head: entities.intern(h),
                    relation: relations.intern(r),
                    tail: entities.intern(t),
                };
                if seen.insert(triple) {
                    out.push(triple);
                } else {
                    duplicate_warnings[idx] += 1;
                }
            }
            if out.is_empty() {
                return Err(Error::EmptySplit(name));
            }
            Ok(out)
        };

        let train = intern_split(train, 0, "train")?;
        let valid = intern_split(valid, 1, "valid")?;
        let test = intern_split(test, 2, "test")?;

        let mut filter_hr_tails: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        let mut filter_rt_heads: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        let mut train_hr_tails: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        let mut degrees = vec![0u32; entities.len()];

        for split in [&train, &valid, &test] {
            for t in split {
                filter_hr_tails
                    .entry((t.head, t.relation))
                    .or_default()
                    .push(t.tail);
                filter_rt_heads
                    .entry((t.relation, t.tail))
                    .or_default()
                    .push(t.head);
            }
        }
        for t in &train {
            train_hr_tails
                .entry((t.head, t.relation))
                .or_default()
                .push(t.tail);
            degrees[t.head as usize] += 1;
            degrees[t.tail as usize] += 1;
        }
        for v in filter_hr_tails.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        for v in filter_rt_heads.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        for v in train_hr_tails.values_mut() {
            v.sort_unstable();
        }

        Ok(TripleStore {
            entities,
            relations,
            train,
            valid,
            test,
            filter_hr_tails,
            filter_rt_heads,
            train_hr_tails,
            degrees,
            duplicate_warnings,
        })
    }

    pub fn triples(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    /// Tails t' such that (h, r, t') is true in any split, sorted.
    pub fn known_tails(&self, head: u32, relation: u32) -> &[u32] {
        self.filter_hr_tails
            .get(&(head, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Heads h' such that (h', r, t) is true in any split, sorted.
    pub fn known_heads(&self, relation: u32, tail: u32) -> &[u32] {
        self.filter_rt_heads
            .get(&(relation, tail))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn train_contains(&self, triple: Triple) -> bool {
        self.train_hr_tails
            .get(&(triple.head, triple.relation))
            .map(|tails| tails.binary_search(&triple.tail).is_ok())
            .unwrap_or(false)
    }

    /// Train-split degree (head plus tail occurrences).
    pub fn degree(&self, entity: u32) -> u32 {
        self.degrees[entity as usize]
    }

    pub fn mean_degree(&self) -> f64 {
        if self.degrees.is_empty() {
            return 1.0;
        }
        let total: u64 = self.degrees.iter().map(|&d| d as u64).sum();
        (total as f64 / self.degrees.len() as f64).max(f64::MIN_POSITIVE)
    }

    /// Serialize a split back to TSV in stored order.
    pub fn write_split(&self, split: Split, out: &mut impl Write) -> Result<()> {
        for t in self.triples(split) {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.entities.name(t.head),
                self.relations.name(t.relation),
                self.entities.name(t.tail)
            )?;
        }
        Ok(())
    }
}

fn read_tsv(path: &Path) -> Result<Vec<NamedTriple>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        }
        out.push((
            fields[0].to_string(),
            fields[1].to_string(),
            fields[2].to_string(),
        ));
    }
    Ok(out)
}

/// Relation mapping pattern under the tails-per-head / heads-per-tail
/// threshold rule (cut at 1.5).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MappingPattern {
    OneToOne,
    OneToMany,
    ManyToOne,
    ManyToMany,
}

impl fmt::Display for MappingPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MappingPattern::OneToOne => "1-1",
            MappingPattern::OneToMany => "1-N",
            MappingPattern::ManyToOne => "N-1",
            MappingPattern::ManyToMany => "N-N",
        };
        f.write_str(s)
    }
}

const PATTERN_CUT: f64 = 1.5;

/// Per-relation statistics over the train split.
#[derive(Debug, Clone)]
pub struct RelationStats {
    pub relation_id: u32,
    /// Mean tails per head.
    pub tph: f64,
    /// Mean heads per tail.
    pub hpt: f64,
    /// Empirical fan-out F(r); defined as tph.
    pub fanout: f64,
    pub pattern: MappingPattern,
    /// Real rank of the empirical relation matrix over train.
    pub m_rank: usize,
    pub rank_approximate: bool,
    /// ceil(m_rank / d): minimum Kraus rank for exact reproduction.
    pub bound: usize,
}

pub fn relation_stats(store: &TripleStore, relation: u32, d: usize) -> Result<RelationStats> {
    let triples: Vec<Triple> = store
        .triples(Split::Train)
        .iter()
        .filter(|t| t.relation == relation)
        .cloned()
        .collect();
    if triples.is_empty() {
        return Err(Error::EmptyRelation(relation));
    }
    let heads: HashSet<u32> = triples.iter().map(|t| t.head).collect();
    let tails: HashSet<u32> = triples.iter().map(|t| t.tail).collect();
    let tph = triples.len() as f64 / heads.len() as f64;
    let hpt = triples.len() as f64 / tails.len() as f64;
    let pattern = match (tph >= PATTERN_CUT, hpt >= PATTERN_CUT) {
        (false, false) => MappingPattern::OneToOne,
        (true, false) => MappingPattern::OneToMany,
        (false, true) => MappingPattern::ManyToOne,
        (true, true) => MappingPattern::ManyToMany,
    };
    let m = relation_matrix(store, relation, Split::Train)?;
    let est = matrix_rank(&m)?;
    Ok(RelationStats {
        relation_id: relation,
        tph,
        hpt,
        fanout: tph,
        pattern,
        m_rank: est.rank,
        rank_approximate: est.approximate,
        bound: rank_lower_bound(est.rank, d),
    })
}

/// `ceil(m_rank / d)`.
pub fn rank_lower_bound(m_rank: usize, d: usize) -> usize {
    assert!(d >= 1);
    m_rank.div_ceil(d)
}

/// Sparse 0/1 matrix, compacted to the rows/columns that actually appear
/// (deleting all-zero rows and columns leaves the rank unchanged).
#[derive(Debug, Clone)]
pub struct SparseBinaryMatrix {
    nrows: usize,
    ncols: usize,
    /// Sorted column indices per row.
    rows: Vec<Vec<u32>>,
}

impl SparseBinaryMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, cols) in self.rows.iter().enumerate() {
            for &j in cols {
                m[(i, j as usize)] = 1.0;
            }
        }
        m
    }
}

/// Empirical relation matrix `(M_r)_{ht} = 1` iff (h, r, t) is in the
/// split, compacted over appearing heads/tails.
pub fn relation_matrix(
    store: &TripleStore,
    relation: u32,
    split: Split,
) -> Result<SparseBinaryMatrix> {
    let pairs: Vec<(u32, u32)> = store
        .triples(split)
        .iter()
        .filter(|t| t.relation == relation)
        .map(|t| (t.head, t.tail))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyRelation(relation));
    }
    let mut heads: Vec<u32> = pairs.iter().map(|p| p.0).collect();
    heads.sort_unstable();
    heads.dedup();
    let mut tails: Vec<u32> = pairs.iter().map(|p| p.1).collect();
    tails.sort_unstable();
    tails.dedup();
    let head_idx: HashMap<u32, u32> = heads.iter().enumerate().map(|(i, &h)| (h, i as u32)).collect();
    let tail_idx: HashMap<u32, u32> = tails.iter().enumerate().map(|(i, &t)| (t, i as u32)).collect();
    let mut rows = vec![Vec::new(); heads.len()];
    for (h, t) in pairs {
        rows[head_idx[&h] as usize].push(tail_idx[&t]);
    }
    for r in &mut rows {
        r.sort_unstable();
    }
    Ok(SparseBinaryMatrix {
        nrows: heads.len(),
        ncols: tails.len(),
        rows,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RankEstimate {
    pub rank: usize,
    /// True when the randomized sketch produced the value.
    pub approximate: bool,
}

/// Real rank of a sparse 0/1 matrix. Below the dense cutoff this is exact
/// Gaussian elimination with partial pivoting; above it, a randomized
/// range sketch with `SKETCH_OVERSAMPLE` spare columns, flagged
/// approximate.
pub fn matrix_rank(m: &SparseBinaryMatrix) -> Result<RankEstimate> {
    if m.nnz() == 0 {
        return Err(Error::ZeroMatrix);
    }
    if m.nrows().max(m.ncols()) <= DENSE_RANK_CUTOFF {
        Ok(RankEstimate {
            rank: dense_rank(&m.to_dense(), RANK_TOL),
            approximate: false,
        })
    } else {
        Ok(RankEstimate {
            rank: sketch_rank(m),
            approximate: true,
        })
    }
}

/// Exact rank or an error when the compacted matrix exceeds the dense
/// cutoff.
pub fn matrix_rank_exact(m: &SparseBinaryMatrix) -> Result<usize> {
    if m.nnz() == 0 {
        return Err(Error::ZeroMatrix);
    }
    if m.nrows().max(m.ncols()) > DENSE_RANK_CUTOFF {
        return Err(Error::TooLargeExact {
            rows: m.nrows(),
            cols: m.ncols(),
            cutoff: DENSE_RANK_CUTOFF,
        });
    }
    Ok(dense_rank(&m.to_dense(), RANK_TOL))
}

/// Rank by Gaussian elimination with partial pivoting; pivots at or below
/// `tol` in absolute value end the elimination.
pub fn dense_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let mut a = m.clone();
    let (nr, nc) = (a.nrows(), a.ncols());
    let mut rank = 0;
    let mut row = 0;
    for col in 0..nc {
        if row >= nr {
            break;
        }
        // Partial pivot: largest |entry| in this column at or below `row`.
        let mut pivot_row = row;
        let mut pivot_val = a[(row, col)].abs();
        for r in (row + 1)..nr {
            let v = a[(r, col)].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val <= tol {
            continue;
        }
        a.swap_rows(row, pivot_row);
        let pivot = a[(row, col)];
        for r in (row + 1)..nr {
            let factor = a[(r, col)] / pivot;
            if factor != 0.0 {
                for c in col..nc {
                    let v = a[(row, c)];
                    a[(r, c)] -= factor * v;
                }
            }
        }
        rank += 1;
        row += 1;
    }
    rank
}

/// Fixed seed for the rank sketch so repeated diagnostics agree.
const SKETCH_SEED: u64 = 0x6b72_6175_735f_7261;

/// Randomized range sketch: Y = M * Omega for Gaussian Omega, doubling the
/// sketch width until the sketch rank sits `SKETCH_OVERSAMPLE` columns
/// below the width.
fn sketch_rank(m: &SparseBinaryMatrix) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(SKETCH_SEED);
    let normal = rand_distr::Normal::new(0.0_f64, 1.0).unwrap();
    let max_width = m.nrows().min(m.ncols()) + SKETCH_OVERSAMPLE;
    let mut width = 128.min(max_width);
    loop {
        let omega = DMatrix::from_fn(m.ncols(), width, |_, _| {
            rand_distr::Distribution::sample(&normal, &mut rng)
        });
        let mut y = DMatrix::zeros(m.nrows(), width);
        for (i, cols) in m.rows.iter().enumerate() {
            for &j in cols {
                for c in 0..width {
                    y[(i, c)] += omega[(j as usize, c)];
                }
            }
        }
        let r = dense_rank(&y, RANK_TOL);
        if r + SKETCH_OVERSAMPLE <= width || width >= max_width {
            return r;
        }
        width = (width * 2).min(max_width);
    }
}

/// Synthetic relation fixtures with analytically known empirical-matrix
/// rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// n entities, triples (i, r, sigma(i)) for a seeded permutation sigma.
    /// Rank n.
    Permutation { n: usize },
    /// One head connected to every tail. Rank 1.
    Star { tails: usize },
    /// Complete bipartite block. Rank 1.
    Bipartite { heads: usize, tails: usize },
    /// Disjoint complete bipartite blocks; rank equals the block count.
    HighRank {
        blocks: usize,
        heads_per_block: usize,
        tails_per_block: usize,
    },
}

impl SynthKind {
    pub fn analytic_rank(&self) -> usize {
        match self {
            SynthKind::Permutation { n } => *n,
            SynthKind::Star { .. } | SynthKind::Bipartite { .. } => 1,
            SynthKind::HighRank { blocks, .. } => *blocks,
        }
    }
}

/// Generate named triples for a synthetic relation. Entity names carry the
/// given prefix so multiple fixtures can share a store without colliding.
pub fn synth_relation(
    kind: SynthKind,
    relation: &str,
    prefix: &str,
    seed: u64,
) -> Result<Vec<NamedTriple>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    match kind {
        SynthKind::Permutation { n } => {
            if n == 0 {
                return Err(Error::InvalidParams("permutation needs n >= 1".into()));
            }
            let mut targets: Vec<usize> = (0..n).collect();
            targets.shuffle(&mut rng);
            for (i, &t) in targets.iter().enumerate() {
                out.push((
                    format!("{prefix}n{i}"),
                    relation.to_string(),
                    format!("{prefix}n{t}"),
                ));
            }
        }
        SynthKind::Star { tails } => {
            if tails == 0 {
                return Err(Error::InvalidParams("star needs >= 1 tail".into()));
            }
            for t in 0..tails {
                out.push((
                    format!("{prefix}h0"),
                    relation.to_string(),
                    format!("{prefix}t{t}"),
                ));
            }
        }
        SynthKind::Bipartite { heads, tails } => {
            if heads == 0 || tails == 0 {
                return Err(Error::InvalidParams("bipartite needs heads, tails >= 1".into()));
            }
            for h in 0..heads {
                for t in 0..tails {
                    out.push((
                        format!("{prefix}h{h}"),
                        relation.to_string(),
                        format!("{prefix}t{t}"),
                    ));
                }
            }
        }
        SynthKind::HighRank {
            blocks,
            heads_per_block,
            tails_per_block,
        } => {
            if blocks == 0 || heads_per_block == 0 || tails_per_block == 0 {
                return Err(Error::InvalidParams("high_rank needs positive sizes".into()));
            }
            for b in 0..blocks {
                for h in 0..heads_per_block {
                    for t in 0..tails_per_block {
                        out.push((
                            format!("{prefix}b{b}h{h}"),
                            relation.to_string(),
                            format!("{prefix}b{b}t{t}"),
                        ));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Shuffle triples and split off validation/test fractions, then repair so
/// every entity still appears in train (triples whose entities would
/// otherwise vanish from train are pulled back). Deterministic per seed.
pub fn split_triples(
    mut triples: Vec<NamedTriple>,
    valid_frac: f64,
    test_frac: f64,
    seed: u64,
) -> (
    Vec<NamedTriple>,
    Vec<NamedTriple>,
    Vec<NamedTriple>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    triples.shuffle(&mut rng);
    let n = triples.len();
    let n_valid = ((n as f64) * valid_frac).round() as usize;
    let n_test = ((n as f64) * test_frac).round() as usize;
    let n_holdout = (n_valid + n_test).min(n.saturating_sub(1));

    // Count entity occurrences in the would-be train portion.
    let mut train_count: HashMap<&str, usize> = HashMap::new();
    for (h, _, t) in &triples[n_holdout..] {
        *train_count.entry(h.as_str()).or_default() += 1;
        *train_count.entry(t.as_str()).or_default() += 1;
    }
    let mut train: Vec<NamedTriple> = triples[n_holdout..].to_vec();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for (i, triple) in triples[..n_holdout].iter().enumerate() {
        let (h, _, t) = triple;
        let covered = train_count.get(h.as_str()).copied().unwrap_or(0) > 0
            && train_count.get(t.as_str()).copied().unwrap_or(0) > 0;
        if covered {
            if i % 2 == 0 && valid.len() < n_valid.max(1) {
                valid.push(triple.clone());
            } else {
                test.push(triple.clone());
            }
        } else {
            train.push(triple.clone());
        }
    }
    // Holdouts must not end up empty for usable fixtures.
    if valid.is_empty() {
        if let Some(t) = test.pop() {
            valid.push(t);
        } else if train.len() > 1 {
            valid.push(train.pop().unwrap());
        }
    }
    if test.is_empty() {
        if train.len() > 1 {
            test.push(train.pop().unwrap());
        } else if valid.len() > 1 {
            test.push(valid.pop().unwrap());
        }
    }
    (train, valid, test)
}

/// Replace one side of the triple.
pub fn corrupt_side(triple: Triple, entity: u32, head_side: bool) -> Triple {
    if head_side {
        Triple {
            head: entity,
            ..triple
        }
    } else {
        Triple {
            tail: entity,
            ..triple
        }
    }
}
