use std::collections::BTreeMap;

use super::layers::{REL_BACKWARD, REL_FORWARD, REL_SELF, REL_UNDIRECTED};
use crate::miner::AttributePattern;
use crate::retrieval::{PatternStore, RetrievalConfig};
use crate::sessions::{to_session_graph, AttributeVocab, ItemCatalog, SessionGraph, WeightMode};
use crate::{Error, Result};

/// A pattern ready for encoding: embedding rows per node (row 0 is the
/// unknown-value row) and its undirected edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryPattern {
    pub rows: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl MemoryPattern {
    pub fn from_pattern(pattern: &AttributePattern, vocab: &AttributeVocab) -> Self {
        MemoryPattern {
            rows: pattern
                .graph
                .labels()
                .iter()
                .map(|l| vocab.get(l).map_or(0, |id| id as usize + 1))
                .collect(),
            edges: pattern.graph.edges().to_vec(),
        }
    }
}

/// Every node attends to itself and its pattern neighbors.
pub fn pattern_neighborhood(pattern: &MemoryPattern) -> Vec<Vec<(usize, usize)>> {
    let mut hood: Vec<Vec<(usize, usize)>> =
        (0..pattern.rows.len()).map(|i| vec![(i, REL_SELF)]).collect();
    for &(u, v) in &pattern.edges {
        hood[u].push((v, REL_UNDIRECTED));
        hood[v].push((u, REL_UNDIRECTED));
    }
    hood
}

/// Neighbor lists of a session layer: the node itself first, then up to
/// `max_neighbors` adjacent nodes, latest transition first. A neighbor
/// reached by an outgoing transition counts as forward, otherwise backward.
pub fn layer_neighborhood(layer: &SessionGraph, max_neighbors: usize) -> Vec<Vec<(usize, usize)>> {
    let n = layer.node_count();
    let mut adjacent: Vec<BTreeMap<usize, (usize, usize)>> = vec![BTreeMap::new(); n];
    for (&(u, v), e) in &layer.edges {
        if u == v {
            continue;
        }
        let fwd = adjacent[u].entry(v).or_insert((e.last_pos, REL_FORWARD));
        fwd.0 = fwd.0.max(e.last_pos);
        fwd.1 = REL_FORWARD;
        let bwd = adjacent[v].entry(u).or_insert((e.last_pos, REL_BACKWARD));
        bwd.0 = bwd.0.max(e.last_pos);
    }
    adjacent
        .into_iter()
        .enumerate()
        .map(|(i, adj)| {
            let mut others: Vec<(usize, usize, usize)> =
                adj.into_iter().map(|(j, (pos, rel))| (pos, j, rel)).collect();
            others.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            others.truncate(max_neighbors);
            std::iter::once((i, REL_SELF))
                .chain(others.into_iter().map(|(_, j, rel)| (j, rel)))
                .collect()
        })
        .collect()
}

/// One attribute layer of a session, ready for graph attention.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerInput {
    /// Embedding row per layer node.
    pub rows: Vec<usize>,
    /// Layer node of every sequence position.
    pub position_nodes: Vec<usize>,
    pub neighbors: Vec<Vec<(usize, usize)>>,
}

/// Everything the forward pass needs about one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionInput {
    pub items: Vec<usize>,
    pub layers: Vec<LayerInput>,
    /// Retrieved patterns per attribute type, best first.
    pub memory: Vec<Vec<MemoryPattern>>,
}

impl SessionInput {
    /// Builds the attribute layers of `items` and retrieves memory from
    /// `stores`, which must be empty (no memory) or hold one store per
    /// attribute type in catalog order.
    pub fn build(
        items: &[usize],
        catalog: &ItemCatalog,
        stores: &[PatternStore],
        retrieval: &RetrievalConfig,
        max_neighbors: usize,
    ) -> Result<Self> {
        if let Some(&bad) = items.iter().find(|&&v| v >= catalog.len()) {
            return Err(Error::UnknownItem(format!("#{bad}")));
        }
        let big_m = catalog.num_attributes();
        if !stores.is_empty() && stores.len() != big_m {
            return Err(Error::Contract(format!(
                "{} pattern stores for {big_m} attribute types",
                stores.len()
            )));
        }
        let mut layers = Vec::with_capacity(big_m);
        let mut memory = Vec::with_capacity(big_m);
        for m in 0..big_m {
            let projected: Vec<usize> = items
                .iter()
                .map(|&v| catalog.attributes(v)[m] as usize)
                .collect();
            let graph = to_session_graph(&projected, WeightMode::None);
            let mem = match stores.get(m) {
                Some(store) => {
                    if store.attribute_type() != catalog.schema()[m] {
                        return Err(Error::Contract(format!(
                            "store `{}` in slot of `{}`",
                            store.attribute_type(),
                            catalog.schema()[m]
                        )));
                    }
                    let labeled = crate::sessions::layer_to_labeled(&graph, m, catalog);
                    store
                        .retrieve(&labeled, retrieval)?
                        .into_iter()
                        .map(|p| MemoryPattern::from_pattern(p, catalog.vocab(m)))
                        .collect()
                }
                None => Vec::new(),
            };
            layers.push(LayerInput {
                rows: graph.nodes.iter().map(|&v| v + 1).collect(),
                position_nodes: graph.position_nodes.clone(),
                neighbors: layer_neighborhood(&graph, max_neighbors),
            });
            memory.push(mem);
        }
        Ok(SessionInput {
            items: items.to_vec(),
            layers,
            memory,
        })
    }
}
