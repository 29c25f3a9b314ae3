//! Jaccard retrieval of mined patterns for a session.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::miner::{pattern_file_name, read_patterns, AttributePattern, LabeledGraph};
use crate::{Error, Result};

/// `|a ∩ b| / (|a| + |b| - |a ∩ b|)`, zero when both sets are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub max_patterns: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { max_patterns: 12 }
    }
}

/// Patterns of one attribute type with a label → pattern inverted index.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternStore {
    attribute_type: String,
    patterns: Vec<AttributePattern>,
    label_sets: Vec<BTreeSet<String>>,
    index: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub index: usize,
    pub score: f64,
}

impl PatternStore {
    pub fn new(attribute_type: impl Into<String>, patterns: Vec<AttributePattern>) -> Result<Self> {
        let attribute_type = attribute_type.into();
        let mut index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut label_sets = Vec::with_capacity(patterns.len());
        for (i, p) in patterns.iter().enumerate() {
            if p.attribute_type() != attribute_type {
                return Err(Error::Input(format!(
                    "pattern of type `{}` in `{attribute_type}` store",
                    p.attribute_type()
                )));
            }
            let labels: BTreeSet<String> = p.graph.labels().iter().cloned().collect();
            for l in &labels {
                index.entry(l.clone()).or_default().push(i);
            }
            label_sets.push(labels);
        }
        Ok(PatternStore {
            attribute_type,
            patterns,
            label_sets,
            index,
        })
    }

    pub fn attribute_type(&self) -> &str {
        &self.attribute_type
    }

    pub fn patterns(&self) -> &[AttributePattern] {
        &self.patterns
    }

    pub fn get(&self, i: usize) -> &AttributePattern {
        &self.patterns[i]
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Distinct labels in the index.
    pub fn label_count(&self) -> usize {
        self.index.len()
    }

    pub fn postings(&self, label: &str) -> &[usize] {
        self.index.get(label).map_or(&[], Vec::as_slice)
    }

    /// Checks that the index mirrors the pattern labels and that patterns are
    /// in miner order with unique codes.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = PatternStore::new(self.attribute_type.clone(), self.patterns.clone())?;
        if rebuilt.index != self.index {
            return Err(Error::Input("inverted index out of sync".into()));
        }
        let mut codes = BTreeSet::new();
        for (i, p) in self.patterns.iter().enumerate() {
            if !codes.insert(p.canonical_code.as_str()) {
                return Err(Error::Input(format!("duplicate pattern code at {i}")));
            }
            if !(3..=crate::miner::MAX_PATTERN_NODES).contains(&p.graph.node_count()) {
                return Err(Error::Input(format!(
                    "pattern {i} has {} nodes",
                    p.graph.node_count()
                )));
            }
        }
        for (i, w) in self.patterns.windows(2).enumerate() {
            if tie_order(&w[0], &w[1]) == Ordering::Greater {
                return Err(Error::Input(format!("patterns {i} and {} out of order", i + 1)));
            }
        }
        Ok(())
    }

    /// Loads `patterns.<type>.jsonl` from `dir`.
    pub fn load(dir: &Path, attribute_type: &str) -> Result<Self> {
        let patterns = read_patterns(&dir.join(pattern_file_name(attribute_type)), attribute_type)?;
        PatternStore::new(attribute_type, patterns)
    }

    /// Top patterns by Jaccard similarity of node-label sets, scored only over
    /// candidates sharing at least one label with the session.
    pub fn retrieve_scored(
        &self,
        session_layer: &LabeledGraph,
        config: &RetrievalConfig,
    ) -> Result<Vec<Scored>> {
        if session_layer.attribute_type() != self.attribute_type {
            return Err(Error::Input(format!(
                "session layer `{}` queried against `{}` store",
                session_layer.attribute_type(),
                self.attribute_type
            )));
        }
        let labels: BTreeSet<String> = session_layer.labels().iter().cloned().collect();
        let mut candidates: BTreeSet<usize> = BTreeSet::new();
        for l in &labels {
            candidates.extend(self.postings(l));
        }
        let mut scored: Vec<Scored> = candidates
            .into_iter()
            .map(|index| Scored {
                index,
                score: jaccard(&labels, &self.label_sets[index]),
            })
            .collect();
        scored.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| tie_order(&self.patterns[a.index], &self.patterns[b.index]))
        });
        scored.truncate(config.max_patterns);
        Ok(scored)
    }

    pub fn retrieve(
        &self,
        session_layer: &LabeledGraph,
        config: &RetrievalConfig,
    ) -> Result<Vec<&AttributePattern>> {
        Ok(self
            .retrieve_scored(session_layer, config)?
            .into_iter()
            .map(|s| &self.patterns[s.index])
            .collect())
    }
}

/// Support descending, then canonical code ascending.
pub fn tie_order(a: &AttributePattern, b: &AttributePattern) -> Ordering {
    b.support
        .cmp(&a.support)
        .then_with(|| a.canonical_code.cmp(&b.canonical_code))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn tri(labels: [&str; 3], support: usize) -> AttributePattern {
        let g = LabeledGraph::new(
            "c",
            labels.iter().map(|s| s.to_string()).collect(),
            vec![(0, 1), (1, 2), (2, 0)],
        )
        .unwrap();
        AttributePattern::from_graph(g, support).unwrap()
    }

    fn layer(labels: &[&str]) -> LabeledGraph {
        LabeledGraph::new("c", labels.iter().map(|s| s.to_string()).collect(), vec![]).unwrap()
    }

    #[test]
    fn jaccard_cases() {
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
        assert_eq!(jaccard(&set(&["a"]), &set(&["b"])), 0.0);
        assert_eq!(jaccard(&set(&["x", "y", "z"]), &set(&["y", "z", "w"])), 0.5);
        assert_eq!(jaccard::<String>(&set(&[]), &set(&[])), 0.0);
    }

    #[test]
    fn empty_store() {
        let store = PatternStore::new("c", vec![]).unwrap();
        assert!(store
            .retrieve(&layer(&["a"]), &RetrievalConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn unrelated_pattern_excluded() {
        let store = PatternStore::new("c", vec![tri(["x", "y", "z"], 3)]).unwrap();
        assert!(store
            .retrieve(&layer(&["a", "b"]), &RetrievalConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn ties_break_by_support_then_code() {
        let store = PatternStore::new(
            "c",
            vec![tri(["a", "q", "r"], 9), tri(["a", "s", "t"], 4), tri(["a", "m", "n"], 4)],
        )
        .unwrap();
        let got = store
            .retrieve_scored(&layer(&["a"]), &RetrievalConfig { max_patterns: 3 })
            .unwrap();
        let order: Vec<usize> = got.iter().map(|s| s.index).collect();
        assert_eq!(order, vec![0, 2, 1]);
    }

    #[test]
    fn type_mismatch() {
        let store = PatternStore::new("brand", vec![]).unwrap();
        assert!(store.retrieve(&layer(&["a"]), &RetrievalConfig::default()).is_err());
    }

    #[test]
    fn truncates_to_limit() {
        let pats: Vec<_> = (0..6).map(|i| tri(["a", &format!("b{i}"), &format!("c{i}")], 1)).collect();
        let store = PatternStore::new("c", pats).unwrap();
        let got = store
            .retrieve(&layer(&["a"]), &RetrievalConfig { max_patterns: 2 })
            .unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(
            store.retrieve(&layer(&["a"]), &RetrievalConfig { max_patterns: 0 }).unwrap().len(),
            0
        );
    }
}
