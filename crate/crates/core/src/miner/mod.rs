//! Frequent, compact attribute pattern mining.
//!
//! Patterns are small (at most four nodes) cyclic graphs over attribute
//! values. [`mine_frequent`] finds those that occur in at least
//! `min_support` session graphs; [`filter_loose`] keeps only the maximal
//! ones, dropping any pattern that embeds into another.

mod dfs;
mod graph;
mod gspan;
mod store;
mod vf2;

pub use dfs::canonical_code;
pub use graph::{contains_cycle, LabeledGraph};
pub use gspan::mine_frequent;
pub use store::{pattern_file_name, read_patterns, write_patterns, PatternRecord};
pub use vf2::is_subgraph;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A mined pattern. `support` counts distinct source graphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributePattern {
    pub graph: LabeledGraph,
    pub canonical_code: String,
    pub support: usize,
}

impl AttributePattern {
    pub fn attribute_type(&self) -> &str {
        self.graph.attribute_type()
    }

    /// Builds a pattern from a graph, computing its canonical code.
    pub fn from_graph(graph: LabeledGraph, support: usize) -> Result<Self> {
        let canonical_code = canonical_code(&graph)?;
        Ok(AttributePattern {
            graph,
            canonical_code,
            support,
        })
    }
}

pub const MAX_PATTERN_NODES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinerConfig {
    pub max_nodes: usize,
    pub min_support: usize,
    pub require_cycle: bool,
    pub workers: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            max_nodes: MAX_PATTERN_NODES,
            min_support: 10,
            require_cycle: true,
            workers: 1,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_nodes > MAX_PATTERN_NODES {
            return Err(Error::Config(format!(
                "max_nodes {} exceeds {MAX_PATTERN_NODES}",
                self.max_nodes
            )));
        }
        if self.min_support == 0 {
            return Err(Error::Config("min_support must be at least 1".into()));
        }
        Ok(())
    }
}

/// Support threshold used when none is configured: 0.1% of the sessions,
/// but never below 10.
pub fn default_min_support(session_count: usize) -> usize {
    session_count.div_ceil(1000).max(10)
}

/// Whether `small` embeds into `big` (same attribute type required).
pub fn is_subpattern(small: &AttributePattern, big: &AttributePattern) -> bool {
    small.attribute_type() == big.attribute_type() && is_subgraph(&small.graph, &big.graph)
}

/// Keeps the maximal patterns: a pattern is dropped when it embeds into a
/// different pattern of the input. Order is preserved.
pub fn filter_loose(patterns: &[AttributePattern]) -> Vec<AttributePattern> {
    patterns
        .iter()
        .filter(|p| {
            !patterns.iter().any(|q| {
                q.canonical_code != p.canonical_code
                    && q.graph.edge_count() >= p.graph.edge_count()
                    && is_subpattern(p, q)
            })
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(labels: &[&str], edges: &[(usize, usize)], support: usize) -> AttributePattern {
        let g = LabeledGraph::new(
            "category",
            labels.iter().map(|s| s.to_string()).collect(),
            edges.to_vec(),
        )
        .unwrap();
        AttributePattern::from_graph(g, support).unwrap()
    }

    #[test]
    fn single_pattern_unchanged() {
        let t = pattern(&["x", "y", "z"], &[(0, 1), (1, 2), (2, 0)], 3);
        assert_eq!(filter_loose(std::slice::from_ref(&t)), vec![t]);
    }

    #[test]
    fn triangle_dropped_under_pendant_extension() {
        let t = pattern(&["phone", "tablet", "notebook"], &[(0, 1), (1, 2), (2, 0)], 9);
        let p = pattern(
            &["phone", "tablet", "notebook", "watch"],
            &[(0, 1), (1, 2), (2, 0), (2, 3)],
            5,
        );
        assert!(is_subpattern(&t, &p));
        assert_eq!(filter_loose(&[t, p.clone()]), vec![p]);
    }

    #[test]
    fn different_types_never_contain_each_other() {
        let t = pattern(&["x", "y", "z"], &[(0, 1), (1, 2), (2, 0)], 3);
        let mut other = t.clone();
        other.graph = LabeledGraph::new("brand", t.graph.labels().to_vec(), t.graph.edges().to_vec())
            .unwrap();
        assert!(!is_subpattern(&t, &other));
    }

    #[test]
    fn default_support_threshold() {
        assert_eq!(default_min_support(0), 10);
        assert_eq!(default_min_support(9_999), 10);
        assert_eq!(default_min_support(630_789), 631);
    }

    #[test]
    fn config_rejects_five_nodes() {
        let cfg = MinerConfig {
            max_nodes: 5,
            ..MinerConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
