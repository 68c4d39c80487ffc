use std::collections::{BTreeMap, HashMap};

use crate::lexicon::ConceptId;

/// Undirected weighted graph; edge weight is the number of supporting
/// triples. Nodes are stored in concept-id order and adjacency lists are
/// sorted by neighbour index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelationGraph {
    nodes: Vec<ConceptId>,
    index: HashMap<ConceptId, u32>,
    adjacency: Vec<Vec<(u32, u64)>>,
    edge_count: usize,
}

/// One edge per pair; self pairs and zero weights are dropped and repeated
/// pairs add up. Concepts without edges do not become nodes.
pub fn build_graph<'a, I>(edges: I) -> RelationGraph
where
    I: IntoIterator<Item = (&'a ConceptId, &'a ConceptId, u64)>,
{
    let mut merged: BTreeMap<(&ConceptId, &ConceptId), u64> = BTreeMap::new();
    for (x, y, w) in edges {
        if x == y || w == 0 {
            continue;
        }
        let key = if x < y { (x, y) } else { (y, x) };
        *merged.entry(key).or_default() += w;
    }
    let mut ids: Vec<&ConceptId> = merged.keys().flat_map(|(a, b)| [*a, *b]).collect();
    ids.sort();
    ids.dedup();
    let nodes: Vec<ConceptId> = ids.into_iter().cloned().collect();
    let index: HashMap<ConceptId, u32> = nodes.iter().enumerate().map(|(i, c)| (c.clone(), i as u32)).collect();
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for ((a, b), w) in &merged {
        let (ia, ib) = (index[*a], index[*b]);
        adjacency[ia as usize].push((ib, *w));
        adjacency[ib as usize].push((ia, *w));
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    RelationGraph {
        nodes,
        index,
        adjacency,
        edge_count: merged.len(),
    }
}

impl RelationGraph {
    /// Graph over nodes named `n` plus a zero-padded index, for synthetic
    /// experiments.
    pub fn from_indexed_edges(n: usize, edges: &[(usize, usize, u64)]) -> Self {
        let width = n.saturating_sub(1).to_string().len();
        let ids: Vec<ConceptId> = (0..n).map(|i| ConceptId(format!("n{i:0width$}"))).collect();
        build_graph(edges.iter().map(|&(a, b, w)| (&ids[a], &ids[b], w)))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_ids(&self) -> &[ConceptId] {
        &self.nodes
    }

    pub fn id(&self, node: u32) -> &ConceptId {
        &self.nodes[node as usize]
    }

    pub fn node_index(&self, id: &ConceptId) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn neighbors(&self, node: u32) -> &[(u32, u64)] {
        &self.adjacency[node as usize]
    }

    pub fn degree(&self, node: u32) -> usize {
        self.adjacency[node as usize].len()
    }

    pub fn weight(&self, u: u32, v: u32) -> Option<u64> {
        let list = &self.adjacency[u as usize];
        list.binary_search_by_key(&v, |&(n, _)| n).ok().map(|i| list[i].1)
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.weight(u, v).is_some()
    }

    pub fn are_connected(&self, a: &ConceptId, b: &ConceptId) -> bool {
        match (self.node_index(a), self.node_index(b)) {
            (Some(u), Some(v)) => self.has_edge(u, v),
            _ => false,
        }
    }

    /// Same nodes in the same order, keeping only edges that pass `keep`.
    /// Nodes may end up isolated.
    pub fn filter_edges(&self, mut keep: impl FnMut(u32, u32) -> bool) -> RelationGraph {
        let mut adjacency = vec![Vec::new(); self.nodes.len()];
        let mut edge_count = 0;
        for (u, v, w) in self.edges() {
            if keep(u, v) {
                adjacency[u as usize].push((v, w));
                adjacency[v as usize].push((u, w));
                edge_count += 1;
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        RelationGraph {
            nodes: self.nodes.clone(),
            index: self.index.clone(),
            adjacency,
            edge_count,
        }
    }

    /// Each undirected edge once, `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, u64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(u, list)| {
            list.iter()
                .filter(move |&&(v, _)| (u as u32) < v)
                .map(move |&(v, w)| (u as u32, v, w))
        })
    }
}
