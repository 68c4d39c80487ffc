//! Link-prediction AUROC and the temporal-holdout prediction experiment.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{self, Write};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{embed_graph, EmbedError, EmbeddingModel, RelationGraph, SgnsConfig, WalkConfig};
use crate::lexicon::ConceptId;
use crate::semantics::{combine_ranks, position, related_not_connected, QueryError, SemanticHit};
use crate::store::{RelationKey, StoreData};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("score is not a number")]
    NanScore,
    #[error("concept {0} has no embedding")]
    MissingVector(ConceptId),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AurocReport {
    pub auroc: f64,
    pub positives: usize,
    pub negatives: usize,
    pub seed: u64,
    /// Fraction of edges withheld from training; zero when the model was
    /// trained on the full graph.
    pub holdout_fraction: f64,
    #[serde(skip)]
    pub roc: Vec<RocPoint>,
}

impl AurocReport {
    pub fn write_roc_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_roc_csv(&self.roc, out)
    }
}

pub fn write_roc_csv<W: Write>(points: &[RocPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "threshold,fpr,tpr")?;
    for p in points {
        writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
    }
    Ok(())
}

fn check_scores(scores: &[f64]) -> Result<(), EvalError> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::NanScore);
    }
    Ok(())
}

/// Twice the Mann-Whitney U statistic of the positives, from midranks.
/// Kept in integers so that ties cost nothing in precision.
fn twice_u(pos: &[f64], neg: &[f64]) -> u128 {
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum over positives of 2 * midrank, where a tie group spanning ranks
    // first..=last has midrank (first + last) / 2.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let npos = all[i..=j].iter().filter(|x| x.1).count() as u128;
        twice_rank_sum += npos * ((i + 1) + (j + 1)) as u128;
        i = j + 1;
    }
    let n = pos.len() as u128;
    twice_rank_sum - n * (n + 1)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auroc(pos: &[f64], neg: &[f64]) -> Result<f64, EvalError> {
    if pos.is_empty() || neg.is_empty() {
        return Err(EvalError::InsufficientData("need at least one positive and one negative".into()));
    }
    check_scores(pos)?;
    check_scores(neg)?;
    let denom = 2 * pos.len() as u128 * neg.len() as u128;
    Ok(twice_u(pos, neg) as f64 / denom as f64)
}

/// Threshold sweep from the highest score down. Each point classifies
/// `score >= threshold` as positive; the first point is (inf, 0, 0).
pub fn roc_curve(pos: &[f64], neg: &[f64]) -> Vec<RocPoint> {
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (np, nn) = (pos.len().max(1) as f64, neg.len().max(1) as f64);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / nn,
            tpr: tp as f64 / np,
        });
    }
    points
}

fn vector_cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

fn pair_score(graph: &RelationGraph, model: &EmbeddingModel, u: u32, v: u32) -> Result<f64, EvalError> {
    let vec_of = |n: u32| {
        let id = graph.id(n);
        model.vector(id).ok_or_else(|| EvalError::MissingVector(id.clone()))
    };
    Ok(vector_cosine(vec_of(u)?, vec_of(v)?))
}

/// `count` distinct unordered non-adjacent pairs, uniformly at random.
pub fn sample_non_edges(graph: &RelationGraph, count: usize, seed: u64) -> Result<Vec<(u32, u32)>, EvalError> {
    let n = graph.node_count() as u64;
    let available = n * n.saturating_sub(1) / 2 - graph.edge_count() as u64;
    if count as u64 > available {
        return Err(EvalError::InsufficientData(format!(
            "{count} negatives requested but only {available} non-adjacent pairs exist"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if count as u64 * 2 > available {
        let mut all: Vec<(u32, u32)> = (0..n as u32)
            .flat_map(|u| ((u + 1)..n as u32).map(move |v| (u, v)))
            .filter(|&(u, v)| !graph.has_edge(u, v))
            .collect();
        all.shuffle(&mut rng);
        all.truncate(count);
        return Ok(all);
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.gen_range(0..n as u32);
        let v = rng.gen_range(0..n as u32);
        if u == v || graph.has_edge(u, v) {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if seen.insert(key) {
            out.push(key);
        }
    }
    Ok(out)
}

fn negatives_for(edges: usize, ratio: f64) -> Result<usize, EvalError> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(EvalError::Parameter("negative ratio must be positive".into()));
    }
    Ok((ratio * edges as f64).ceil() as usize)
}

/// Every edge is a positive; `ceil(ratio * |E|)` sampled non-edges are
/// negatives; each pair is scored by the cosine of its node vectors.
pub fn auroc_link_prediction(
    graph: &RelationGraph,
    model: &EmbeddingModel,
    negative_ratio: f64,
    seed: u64,
) -> Result<AurocReport, EvalError> {
    if graph.edge_count() < 2 {
        return Err(EvalError::InsufficientData("graph has fewer than two edges".into()));
    }
    let n_neg = negatives_for(graph.edge_count(), negative_ratio)?;
    let pos = graph
        .edges()
        .map(|(u, v, _)| pair_score(graph, model, u, v))
        .collect::<Result<Vec<_>, _>>()?;
    let neg = sample_non_edges(graph, n_neg, seed)?
        .into_iter()
        .map(|(u, v)| pair_score(graph, model, u, v))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AurocReport {
        auroc: auroc(&pos, &neg)?,
        positives: pos.len(),
        negatives: neg.len(),
        seed,
        holdout_fraction: 0.0,
        roc: roc_curve(&pos, &neg),
    })
}

/// Withholds `fraction` of the edges, trains on the rest, and scores the
/// withheld edges against sampled non-edges of the full graph.
pub fn auroc_heldout_edges(
    graph: &RelationGraph,
    fraction: f64,
    walk: &WalkConfig,
    sgns: &SgnsConfig,
    negative_ratio: f64,
    seed: u64,
) -> Result<AurocReport, EvalError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(EvalError::Parameter("holdout fraction must lie strictly between 0 and 1".into()));
    }
    let mut edges: Vec<(u32, u32)> = graph.edges().map(|(u, v, _)| (u, v)).collect();
    let n_held = (fraction * edges.len() as f64).round() as usize;
    if n_held < 1 || n_held >= edges.len() {
        return Err(EvalError::InsufficientData("too few edges to hold any out".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    edges.shuffle(&mut rng);
    let held: HashSet<(u32, u32)> = edges[..n_held].iter().copied().collect();
    let train = graph.filter_edges(|u, v| !held.contains(&(u, v)));
    let model = embed_graph(&train, walk, sgns)?;

    let mut held_sorted: Vec<(u32, u32)> = held.into_iter().collect();
    held_sorted.sort_unstable();
    let pos = held_sorted
        .iter()
        .map(|&(u, v)| pair_score(graph, &model, u, v))
        .collect::<Result<Vec<_>, _>>()?;
    let n_neg = negatives_for(pos.len(), negative_ratio)?;
    let neg = sample_non_edges(graph, n_neg, seed.wrapping_add(1))?
        .into_iter()
        .map(|(u, v)| pair_score(graph, &model, u, v))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AurocReport {
        auroc: auroc(&pos, &neg)?,
        positives: pos.len(),
        negatives: neg.len(),
        seed,
        holdout_fraction: fraction,
        roc: roc_curve(&pos, &neg),
    })
}

/// Random graph with `blocks` groups of `block_size` nodes. Pairs inside a
/// group connect with probability `p_in`, across groups with `p_out`. Node
/// `i` belongs to group `i / block_size`.
pub fn planted_partition(blocks: usize, block_size: usize, p_in: f64, p_out: f64, seed: u64) -> RelationGraph {
    let n = blocks * block_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if u / block_size == v / block_size { p_in } else { p_out };
            if rng.gen_bool(p) {
                edges.push((u, v, 1));
            }
        }
    }
    RelationGraph::from_indexed_edges(n, &edges)
}

/// Expected number of ranks within `1..=depth` if every filtered list were
/// a uniformly random ordering of its candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformBaseline {
    pub depth: usize,
    pub observed: u64,
    pub expected: f64,
    pub variance: f64,
}

impl UniformBaseline {
    /// One-sided z statistic of the observed count against the baseline.
    pub fn z_score(&self) -> f64 {
        if self.variance == 0.0 {
            return if self.observed as f64 > self.expected { f64::INFINITY } else { 0.0 };
        }
        (self.observed as f64 - self.expected) / self.variance.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub cutoff: NaiveDate,
    pub k: usize,
    pub new_relations_total: u64,
    pub excluded_unseen_concept: u64,
    pub unpredictable: u64,
    /// `rank_histogram[r]` counts pairs recorded at rank `r`; index 0 is
    /// always zero so that ranks index directly.
    pub rank_histogram: Vec<u64>,
    pub one_sided_count: u64,
    pub top5_baseline: UniformBaseline,
}

impl HoldoutReport {
    pub fn predicted(&self) -> u64 {
        self.rank_histogram.iter().sum()
    }

    pub fn identity_holds(&self) -> bool {
        self.predicted() + self.unpredictable + self.excluded_unseen_concept == self.new_relations_total
    }
}

/// Pairs first co-occurring after the cutoff, in key order.
pub fn new_relations(full: &StoreData, pre: &StoreData) -> Vec<RelationKey> {
    full.keys()
        .filter(|(k, _)| pre.pair_count(&k.a, &k.b) == 0)
        .map(|(k, _)| k.clone())
        .collect()
}

/// Trains on the triples published up to `cutoff` and records the mutual
/// rank of every pair that first co-occurs afterwards.
pub fn temporal_holdout(
    store: &StoreData,
    cutoff: NaiveDate,
    walk: &WalkConfig,
    sgns: &SgnsConfig,
    k: usize,
) -> Result<HoldoutReport, EvalError> {
    let pre = store.triples_before(cutoff);
    let graph = pre.graph();
    if graph.edge_count() == 0 {
        return Err(EvalError::InsufficientData("no relations before the cutoff".into()));
    }
    let model = embed_graph(&graph, walk, sgns)?;
    holdout_with_model(store, &pre, &graph, &model, cutoff, k)
}

/// The scoring half of [`temporal_holdout`] for a model trained elsewhere.
pub fn holdout_with_model(
    full: &StoreData,
    pre: &StoreData,
    graph: &RelationGraph,
    model: &EmbeddingModel,
    cutoff: NaiveDate,
    k: usize,
) -> Result<HoldoutReport, EvalError> {
    if k == 0 {
        return Err(EvalError::Parameter("k must be positive".into()));
    }
    let fresh = new_relations(full, pre);
    let seen = |c: &ConceptId| graph.node_index(c).is_some() && model.contains(c);
    let (eligible, excluded): (Vec<RelationKey>, Vec<RelationKey>) =
        fresh.iter().cloned().partition(|key| seen(&key.a) && seen(&key.b));

    let wanted: BTreeSet<&ConceptId> = eligible.iter().flat_map(|key| [&key.a, &key.b]).collect();
    let wanted: Vec<&ConceptId> = wanted.into_iter().collect();
    let lists: HashMap<&ConceptId, Vec<SemanticHit>> = wanted
        .par_iter()
        .map(|&c| related_not_connected(c, k, model, graph).map(|l| (c, l)))
        .collect::<Result<_, _>>()?;

    // Candidate-list sizes for the uniform baseline: every embedded concept
    // other than the query and its neighbours.
    let embedded = model.len();
    let candidates = |c: &ConceptId| {
        let deg = graph.node_index(c).map(|n| graph.degree(n)).unwrap_or(0);
        embedded.saturating_sub(1 + deg)
    };

    let mut histogram = vec![0u64; k + 1];
    let mut unpredictable = 0;
    let mut one_sided = 0;
    let depth = 5usize;
    let (mut expected, mut variance, mut observed) = (0.0, 0.0, 0u64);
    for key in &eligible {
        let ra = position(&lists[&key.a], &key.b);
        let rb = position(&lists[&key.b], &key.a);
        match combine_ranks(ra, rb) {
            Some(m) => {
                histogram[m.rank] += 1;
                if !m.two_sided {
                    one_sided += 1;
                }
                if m.rank <= depth {
                    observed += 1;
                }
            }
            None => unpredictable += 1,
        }
        let hit = |m: usize| if m == 0 { 0.0 } else { depth.min(m) as f64 / m as f64 };
        let p = 1.0 - (1.0 - hit(candidates(&key.a))) * (1.0 - hit(candidates(&key.b)));
        expected += p;
        variance += p * (1.0 - p);
    }

    Ok(HoldoutReport {
        cutoff,
        k,
        new_relations_total: fresh.len() as u64,
        excluded_unseen_concept: excluded.len() as u64,
        unpredictable,
        rank_histogram: histogram,
        one_sided_count: one_sided,
        top5_baseline: UniformBaseline {
            depth,
            observed,
            expected,
            variance,
        },
    })
}

/// Rank histogram as `rank,count` rows for ranks `1..=k`.
pub fn write_histogram_csv<W: Write>(report: &HoldoutReport, mut out: W) -> io::Result<()> {
    writeln!(out, "rank,count")?;
    for (r, c) in report.rank_histogram.iter().enumerate().skip(1) {
        writeln!(out, "{r},{c}")?;
    }
    Ok(())
}
