use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{mix_seed, AliasTable, EmbedError, RelationGraph, WalkConfig};

fn bias(graph: &RelationGraph, prev: u32, next: u32, inv_p: f64, inv_q: f64) -> f64 {
    if next == prev {
        inv_p
    } else if graph.has_edge(prev, next) {
        1.0
    } else {
        inv_q
    }
}

/// Next-step distribution from `current`, having arrived from `prev`.
/// Unnormalized weight of neighbour `x` is `w(current, x)` times `1/p` when
/// `x == prev`, `1` when `x` is adjacent to `prev`, and `1/q` otherwise.
/// Without a previous node the weights are used as-is.
pub fn step_distribution(graph: &RelationGraph, prev: Option<u32>, current: u32, p: f64, q: f64) -> Vec<(u32, f64)> {
    let neighbors = graph.neighbors(current);
    let raw: Vec<f64> = neighbors
        .iter()
        .map(|&(x, w)| {
            let alpha = prev.map_or(1.0, |t| bias(graph, t, x, 1.0 / p, 1.0 / q));
            w as f64 * alpha
        })
        .collect();
    let total: f64 = raw.iter().sum();
    neighbors
        .iter()
        .zip(raw)
        .map(|(&(x, _), r)| (x, r / total))
        .collect()
}

enum EdgeTables {
    /// `tables[v][i]`: distribution from `v` after arriving from its `i`-th neighbour.
    Alias(Vec<Vec<AliasTable>>),
    Rejection,
}

/// Precomputed sampling state for one graph and bias setting.
pub struct WalkSampler<'g> {
    graph: &'g RelationGraph,
    inv_p: f64,
    inv_q: f64,
    first_step: Vec<Option<AliasTable>>,
    edges: EdgeTables,
}

impl<'g> WalkSampler<'g> {
    pub fn new(graph: &'g RelationGraph, p: f64, q: f64, alias_budget: usize) -> Self {
        let first_step = (0..graph.node_count() as u32)
            .map(|v| {
                let w: Vec<f64> = graph.neighbors(v).iter().map(|&(_, w)| w as f64).collect();
                (!w.is_empty()).then(|| AliasTable::new(&w))
            })
            .collect();
        let footprint: usize = (0..graph.node_count() as u32).map(|v| graph.degree(v).pow(2)).sum();
        let edges = if footprint <= alias_budget {
            let tables = (0..graph.node_count() as u32)
                .into_par_iter()
                .map(|v| {
                    graph
                        .neighbors(v)
                        .iter()
                        .map(|&(t, _)| {
                            let probs: Vec<f64> = step_distribution(graph, Some(t), v, p, q).into_iter().map(|(_, pr)| pr).collect();
                            AliasTable::new(&probs)
                        })
                        .collect()
                })
                .collect();
            EdgeTables::Alias(tables)
        } else {
            EdgeTables::Rejection
        };
        WalkSampler {
            graph,
            inv_p: 1.0 / p,
            inv_q: 1.0 / q,
            first_step,
            edges,
        }
    }

    /// Forces rejection sampling regardless of graph size.
    pub fn rejection(graph: &'g RelationGraph, p: f64, q: f64) -> Self {
        WalkSampler::new(graph, p, q, 0)
    }

    pub fn uses_alias_tables(&self) -> bool {
        matches!(self.edges, EdgeTables::Alias(_))
    }

    /// One step; `None` when `current` has no neighbours.
    pub fn next<R: Rng + ?Sized>(&self, prev: Option<u32>, current: u32, rng: &mut R) -> Option<u32> {
        let first = self.first_step[current as usize].as_ref()?;
        let neighbors = self.graph.neighbors(current);
        let Some(t) = prev else {
            return Some(neighbors[first.sample(rng)].0);
        };
        match &self.edges {
            EdgeTables::Alias(tables) => {
                let slot = neighbors.binary_search_by_key(&t, |&(n, _)| n).ok()?;
                Some(neighbors[tables[current as usize][slot].sample(rng)].0)
            }
            EdgeTables::Rejection => {
                let ceiling = self.inv_p.max(1.0).max(self.inv_q);
                loop {
                    let x = neighbors[first.sample(rng)].0;
                    let alpha = bias(self.graph, t, x, self.inv_p, self.inv_q);
                    if rng.gen::<f64>() * ceiling < alpha {
                        return Some(x);
                    }
                }
            }
        }
    }

    /// A walk of up to `length` nodes starting at `start`; ends early at a
    /// dead end.
    pub fn walk<R: Rng + ?Sized>(&self, start: u32, length: usize, rng: &mut R) -> Vec<u32> {
        let mut walk = Vec::with_capacity(length);
        walk.push(start);
        let mut prev = None;
        while walk.len() < length {
            let cur = *walk.last().unwrap();
            match self.next(prev, cur, rng) {
                Some(n) => {
                    prev = Some(cur);
                    walk.push(n);
                }
                None => break,
            }
        }
        walk
    }
}

/// `walks_per_node` passes over all nodes. Each pass visits nodes in a
/// seeded shuffled order; each walk draws from its own RNG derived from
/// (seed, pass, start node), so output does not depend on thread count.
pub fn generate_walks(graph: &RelationGraph, config: &WalkConfig) -> Result<Vec<Vec<u32>>, EmbedError> {
    config.validate()?;
    if graph.is_empty() {
        return Err(EmbedError::NoWalks);
    }
    let sampler = WalkSampler::new(graph, config.p, config.q, config.alias_budget);
    let mut walks = Vec::with_capacity(graph.node_count() * config.walks_per_node);
    let mut order: Vec<u32> = (0..graph.node_count() as u32).collect();
    for pass in 0..config.walks_per_node as u64 {
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, pass, u64::MAX]));
        order.shuffle(&mut shuffle_rng);
        let batch: Vec<Vec<u32>> = order
            .par_iter()
            .map(|&start| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, pass, start as u64]));
                sampler.walk(start, config.walk_length, &mut rng)
            })
            .collect();
        walks.extend(batch);
    }
    Ok(walks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn unit_bias_is_plain_weighted_step() {
        let g = RelationGraph::from_indexed_edges(4, &[(1, 0, 1), (1, 2, 3), (1, 3, 4), (0, 2, 1)]);
        let d = step_distribution(&g, Some(0), 1, 1.0, 1.0);
        assert_eq!(d.iter().map(|x| x.0).collect::<Vec<_>>(), [0, 2, 3]);
        for ((_, got), want) in d.iter().zip([1.0 / 8.0, 3.0 / 8.0, 4.0 / 8.0]) {
            assert!(close(*got, want));
        }
    }

    #[test]
    fn triangle_and_path_fixtures() {
        // t=0, v=1, x=2
        let tri = RelationGraph::from_indexed_edges(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]);
        let d = step_distribution(&tri, Some(0), 1, 0.25, 0.25);
        assert!(close(d[0].1, 4.0 / 5.0) && close(d[1].1, 1.0 / 5.0));

        let path = RelationGraph::from_indexed_edges(3, &[(0, 1, 1), (1, 2, 1)]);
        let d = step_distribution(&path, Some(0), 1, 0.25, 0.25);
        assert!(close(d[0].1, 0.5) && close(d[1].1, 0.5));

        let d = step_distribution(&path, None, 1, 0.25, 0.25);
        assert!(close(d[0].1, 0.5));
    }

    #[test]
    fn walk_counts_and_forced_alternation() {
        let g = RelationGraph::from_indexed_edges(3, &[(0, 1, 1), (1, 2, 2)]);
        let cfg = WalkConfig::default();
        assert_eq!(generate_walks(&g, &cfg).unwrap().len(), 54);

        let pair = RelationGraph::from_indexed_edges(2, &[(0, 1, 1)]);
        for w in generate_walks(&pair, &cfg).unwrap() {
            assert_eq!(w.len(), 80);
            for (i, n) in w.iter().enumerate() {
                assert_eq!(*n, if i % 2 == 0 { w[0] } else { 1 - w[0] });
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let g = RelationGraph::from_indexed_edges(6, &[(0, 1, 1), (1, 2, 2), (2, 3, 1), (3, 4, 5), (4, 5, 1), (5, 0, 1), (0, 3, 2)]);
        let cfg = WalkConfig { walks_per_node: 3, walk_length: 20, ..WalkConfig::default() };
        assert_eq!(generate_walks(&g, &cfg).unwrap(), generate_walks(&g, &cfg).unwrap());
        let other = WalkConfig { seed: 7, ..cfg.clone() };
        assert_ne!(generate_walks(&g, &cfg).unwrap(), generate_walks(&g, &other).unwrap());
    }

    #[test]
    fn rejection_and_alias_agree_in_distribution() {
        let g = RelationGraph::from_indexed_edges(5, &[(0, 1, 2), (1, 2, 1), (1, 3, 3), (0, 3, 1), (1, 4, 1)]);
        let exact = step_distribution(&g, Some(0), 1, 0.5, 2.0);
        for sampler in [WalkSampler::new(&g, 0.5, 2.0, usize::MAX), WalkSampler::rejection(&g, 0.5, 2.0)] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut counts = std::collections::HashMap::new();
            for _ in 0..100_000 {
                *counts.entry(sampler.next(Some(0), 1, &mut rng).unwrap()).or_insert(0usize) += 1;
            }
            for (x, p) in &exact {
                let freq = counts.get(x).copied().unwrap_or(0) as f64 / 1e5;
                assert!((freq - p).abs() < 0.01, "node {x}: {freq} vs {p}");
            }
        }
    }

    #[test]
    fn invalid_config() {
        let g = RelationGraph::from_indexed_edges(2, &[(0, 1, 1)]);
        let bad = WalkConfig { p: 0.0, ..WalkConfig::default() };
        assert!(matches!(generate_walks(&g, &bad), Err(EmbedError::Config(_))));
        assert!(matches!(generate_walks(&RelationGraph::default(), &WalkConfig::default()), Err(EmbedError::NoWalks)));
    }
}
