//! Semantic-relatedness queries over node embeddings.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::Serialize;
use thiserror::Error;

use crate::embed::{EmbeddingModel, RelationGraph};
use crate::lexicon::ConceptId;

/// Result count used when a caller does not ask for one.
pub const DEFAULT_TOP_K: usize = 20;
/// List depth used by the relation-prediction protocol.
pub const PREDICTION_TOP_K: usize = 40;

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("concepts without embeddings: {}", .0.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", "))]
    NotFound(Vec<ConceptId>),
    #[error("query needs at least one concept")]
    Empty,
    #[error("query vectors sum to zero")]
    Degenerate,
    #[error("{0} and {1} are directly connected")]
    Connected(ConceptId, ConceptId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryVector {
    pub vector: Vec<f64>,
    pub source_concepts: Vec<ConceptId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticHit {
    pub concept: ConceptId,
    pub score: f64,
    /// An edge joins this concept to at least one source concept.
    pub directly_related: bool,
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Sum of the concepts' vectors, scaled to unit length.
pub fn combine(concepts: &[ConceptId], model: &EmbeddingModel) -> Result<QueryVector, QueryError> {
    if concepts.is_empty() {
        return Err(QueryError::Empty);
    }
    let missing: Vec<ConceptId> = concepts.iter().filter(|c| !model.contains(c)).cloned().collect();
    if !missing.is_empty() {
        return Err(QueryError::NotFound(missing));
    }
    let mut sum = vec![0.0f64; model.dimension()];
    for c in concepts {
        for (s, x) in sum.iter_mut().zip(model.vector(c).unwrap()) {
            *s += *x as f64;
        }
    }
    let n = norm(sum.iter().copied());
    if n == 0.0 || !n.is_finite() {
        return Err(QueryError::Degenerate);
    }
    sum.iter_mut().for_each(|x| *x /= n);
    Ok(QueryVector {
        vector: sum,
        source_concepts: concepts.to_vec(),
    })
}

/// Cosine between a unit query and an embedding row.
pub fn cosine(query: &[f64], v: &[f32]) -> f64 {
    let n = norm(v.iter().map(|&x| x as f64));
    if n == 0.0 {
        return 0.0;
    }
    query.iter().zip(v).map(|(q, &x)| q * x as f64).sum::<f64>() / n
}

/// 3COSMUL score with the query as the only positive term and no negatives:
/// `((1 + cos) / 2) / ε` with ε = 1e-6 added to the empty negative product.
pub fn cosmul_score(query: &[f64], v: &[f32]) -> f64 {
    ((1.0 + cosine(query, v)) / 2.0) / (1.0 + 1e-6)
}

fn rank_by<F>(query: &QueryVector, exclude: &HashSet<ConceptId>, model: &EmbeddingModel, graph: &RelationGraph, score: F) -> Vec<SemanticHit>
where
    F: Fn(&[f64], &[f32]) -> f64,
{
    let sources: Vec<Option<u32>> = query.source_concepts.iter().map(|c| graph.node_index(c)).collect();
    let mut hits: Vec<SemanticHit> = model
        .iter()
        .filter(|(c, _)| !exclude.contains(*c) && !query.source_concepts.contains(c))
        .map(|(c, v)| {
            let node = graph.node_index(c);
            let directly_related = node.is_some_and(|n| sources.iter().flatten().any(|&s| graph.has_edge(s, n)));
            SemanticHit {
                concept: c.clone(),
                score: score(&query.vector, v),
                directly_related,
            }
        })
        .collect();
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.concept.cmp(&b.concept))
    });
    hits
}

/// Every embedded concept outside `exclude` and the query's own concepts,
/// ranked by cosine to the query; the first `k` are returned.
pub fn top_k_related(
    query: &QueryVector,
    k: usize,
    exclude: &HashSet<ConceptId>,
    model: &EmbeddingModel,
    graph: &RelationGraph,
) -> Vec<SemanticHit> {
    let mut hits = rank_by(query, exclude, model, graph, cosine);
    hits.truncate(k);
    hits
}

/// Same ranking as [`top_k_related`] under the 3COSMUL score.
pub fn top_k_related_cosmul(
    query: &QueryVector,
    k: usize,
    exclude: &HashSet<ConceptId>,
    model: &EmbeddingModel,
    graph: &RelationGraph,
) -> Vec<SemanticHit> {
    let mut hits = rank_by(query, exclude, model, graph, cosmul_score);
    hits.truncate(k);
    hits
}

/// Top `k` concepts by relatedness to all of `concepts` that share no edge
/// with any of them.
pub fn related_not_connected_multi(
    concepts: &[ConceptId],
    k: usize,
    model: &EmbeddingModel,
    graph: &RelationGraph,
) -> Result<Vec<SemanticHit>, QueryError> {
    let query = combine(concepts, model)?;
    let mut hits: Vec<SemanticHit> = rank_by(&query, &HashSet::new(), model, graph, cosine)
        .into_iter()
        .filter(|h| !h.directly_related)
        .collect();
    hits.truncate(k);
    Ok(hits)
}

pub fn related_not_connected(
    concept: &ConceptId,
    k: usize,
    model: &EmbeddingModel,
    graph: &RelationGraph,
) -> Result<Vec<SemanticHit>, QueryError> {
    related_not_connected_multi(std::slice::from_ref(concept), k, model, graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MutualRank {
    /// 1-based position within the filtered lists.
    pub rank: usize,
    /// Both concepts appear in each other's list.
    pub two_sided: bool,
}

pub(crate) fn position(hits: &[SemanticHit], c: &ConceptId) -> Option<usize> {
    hits.iter().position(|h| &h.concept == c).map(|p| p + 1)
}

/// Rank of `b` in `a`'s related-but-unconnected list and vice versa. Both
/// present gives the lower rank; one present gives that rank (flagged as
/// one-sided); neither gives `None`.
pub fn mutual_rank(
    a: &ConceptId,
    b: &ConceptId,
    k: usize,
    model: &EmbeddingModel,
    graph: &RelationGraph,
) -> Result<Option<MutualRank>, QueryError> {
    if graph.are_connected(a, b) {
        return Err(QueryError::Connected(a.clone(), b.clone()));
    }
    let ra = position(&related_not_connected(a, k, model, graph)?, b);
    let rb = position(&related_not_connected(b, k, model, graph)?, a);
    Ok(combine_ranks(ra, rb))
}

pub(crate) fn combine_ranks(ra: Option<usize>, rb: Option<usize>) -> Option<MutualRank> {
    match (ra, rb) {
        (Some(x), Some(y)) => Some(MutualRank {
            rank: x.min(y),
            two_sided: true,
        }),
        (Some(r), None) | (None, Some(r)) => Some(MutualRank {
            rank: r,
            two_sided: false,
        }),
        (None, None) => None,
    }
}
