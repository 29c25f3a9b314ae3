use crate::{Error, Result};

/// Undirected simple graph with string node labels, tagged with the
/// attribute type its labels come from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledGraph {
    attribute_type: String,
    labels: Vec<String>,
    /// Sorted, deduplicated pairs with `u < v`.
    edges: Vec<(usize, usize)>,
}

impl LabeledGraph {
    /// Builds a graph; edges are normalized, deduplicated and stripped of
    /// self-loops.
    pub fn new(
        attribute_type: impl Into<String>,
        labels: Vec<String>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let n = labels.len();
        let mut norm = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Input(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u != v {
                norm.push((u.min(v), u.max(v)));
            }
        }
        norm.sort_unstable();
        norm.dedup();
        Ok(LabeledGraph {
            attribute_type: attribute_type.into(),
            labels,
            edges: norm,
        })
    }

    pub fn attribute_type(&self) -> &str {
        &self.attribute_type
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.labels.len()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        if self.labels.is_empty() {
            return true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.labels.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> LabeledGraph {
        let mut labels = vec![String::new(); self.labels.len()];
        for (i, l) in self.labels.iter().enumerate() {
            labels[perm[i]] = l.clone();
        }
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        LabeledGraph::new(self.attribute_type.clone(), labels, edges)
            .expect("permutation keeps edges in range")
    }
}

/// Whether the graph has a cycle, i.e. some component has at least as many
/// edges as nodes.
pub fn contains_cycle(graph: &LabeledGraph) -> bool {
    let mut parent: Vec<usize> = (0..graph.node_count()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(u, v) in graph.edges() {
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru == rv {
            return true;
        }
        parent[ru] = rv;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize, edges: &[(usize, usize)]) -> LabeledGraph {
        LabeledGraph::new("t", vec!["x".into(); n], edges.to_vec()).unwrap()
    }

    #[test]
    fn triangle_has_cycle() {
        assert!(contains_cycle(&g(3, &[(0, 1), (1, 2), (2, 0)])));
    }

    #[test]
    fn star_has_no_cycle() {
        assert!(!contains_cycle(&g(4, &[(0, 1), (0, 2), (0, 3)])));
    }

    #[test]
    fn diamond_has_cycle() {
        assert!(contains_cycle(&g(4, &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)])));
    }

    #[test]
    fn cycle_in_second_component() {
        assert!(contains_cycle(&g(6, &[(0, 1), (3, 4), (4, 5), (5, 3)])));
    }

    #[test]
    fn construction_normalizes() {
        let graph = g(3, &[(2, 1), (1, 2), (0, 0), (0, 1)]);
        assert_eq!(graph.edges(), &[(0, 1), (1, 2)]);
        assert!(LabeledGraph::new("t", vec!["a".into()], vec![(0, 3)]).is_err());
    }
}
