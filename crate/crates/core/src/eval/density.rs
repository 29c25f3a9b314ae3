use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::miner::AttributePattern;
use crate::sessions::{to_session_graph, Session, WeightMode};
use crate::{Error, Result};

/// Edge-to-node ratios of simple undirected graphs (self-loops ignored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    /// Mean over per-session transition graphs.
    pub local: f64,
    /// Union of every session's transitions.
    pub global: f64,
    /// Mean over per-session complete graphs on the session's items.
    pub shortcut: f64,
    /// Mean over patterns; absent without patterns.
    pub pattern: Option<f64>,
    pub sessions: usize,
    pub patterns: usize,
}

pub fn density_stats(sessions: &[Session], patterns: &[AttributePattern]) -> Result<DensityReport> {
    if sessions.is_empty() {
        return Err(Error::Input("density needs at least one session".into()));
    }
    let mut local = 0.0;
    let mut shortcut = 0.0;
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for s in sessions {
        let g = to_session_graph(&s.items, WeightMode::None);
        let k = g.node_count() as f64;
        let undirected = g.undirected_edges();
        local += undirected.len() as f64 / k;
        shortcut += (k - 1.0) / 2.0;
        nodes.extend(g.nodes.iter().copied());
        for (u, v) in undirected {
            let (a, b) = (g.nodes[u], g.nodes[v]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let n = sessions.len() as f64;
    let pattern = (!patterns.is_empty()).then(|| {
        patterns
            .iter()
            .map(|p| p.graph.edge_count() as f64 / p.graph.node_count() as f64)
            .sum::<f64>()
            / patterns.len() as f64
    });
    Ok(DensityReport {
        local: local / n,
        global: edges.len() as f64 / nodes.len() as f64,
        shortcut: shortcut / n,
        pattern,
        sessions: sessions.len(),
        patterns: patterns.len(),
    })
}
