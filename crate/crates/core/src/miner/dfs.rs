//! gSpan DFS codes over undirected graphs with node labels only.
//!
//! Labels are compared through `u32` ids that must be assigned in the
//! lexicographic order of the label strings, so minimum codes are comparable
//! across graphs interned at different times.

use std::collections::BTreeSet;

use super::graph::LabeledGraph;
use crate::{Error, Result};

/// One edge of a DFS code. `from < to` marks a forward (tree) edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct DfsEdge {
    pub from: usize,
    pub to: usize,
    pub from_label: u32,
    pub to_label: u32,
}

impl DfsEdge {
    pub fn is_forward(&self) -> bool {
        self.from < self.to
    }
}

pub(crate) type DfsCode = Vec<DfsEdge>;

/// Number of vertices a code spans.
pub(crate) fn vertex_count(code: &[DfsEdge]) -> usize {
    code.iter().map(|e| e.from.max(e.to) + 1).max().unwrap_or(0)
}

/// Code vertices on the rightmost path, from the rightmost vertex up to the root.
pub(crate) fn rightmost_path(code: &[DfsEdge]) -> Vec<usize> {
    let n = vertex_count(code);
    if n == 0 {
        return Vec::new();
    }
    let mut parent = vec![usize::MAX; n];
    for e in code.iter().filter(|e| e.is_forward()) {
        parent[e.to] = e.from;
    }
    let mut path = vec![n - 1];
    let mut v = n - 1;
    while parent[v] != usize::MAX {
        v = parent[v];
        path.push(v);
    }
    path
}

/// Dense graph view used while computing minimum codes.
pub(crate) struct CodeGraph {
    pub labels: Vec<u32>,
    /// (neighbor, edge id)
    pub adj: Vec<Vec<(usize, usize)>>,
    pub edge_count: usize,
}

impl CodeGraph {
    pub fn new(labels: Vec<u32>, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); labels.len()];
        for (id, &(u, v)) in edges.iter().enumerate() {
            adj[u].push((v, id));
            adj[v].push((u, id));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        CodeGraph {
            labels,
            adj,
            edge_count: edges.len(),
        }
    }

    /// The graph a code describes.
    pub fn from_code(code: &[DfsEdge]) -> Self {
        let n = vertex_count(code);
        let mut labels = vec![0; n];
        let mut edges = Vec::with_capacity(code.len());
        for e in code {
            labels[e.from] = e.from_label;
            labels[e.to] = e.to_label;
            edges.push((e.from, e.to));
        }
        CodeGraph::new(labels, &edges)
    }

    pub fn edge_id(&self, u: usize, v: usize) -> Option<usize> {
        self.adj[u].iter().find(|&&(w, _)| w == v).map(|&(_, id)| id)
    }
}

#[derive(Clone)]
struct Embedding {
    map: Vec<usize>,
    used: u64,
}

/// Minimum DFS code of a connected graph with at most 64 edges, built
/// greedily: at every step take the smallest rightmost extension among all
/// embeddings of the current prefix.
pub(crate) fn min_code(graph: &CodeGraph) -> DfsCode {
    let mut code = DfsCode::new();
    let mut best: Option<(u32, u32)> = None;
    for (u, nbrs) in graph.adj.iter().enumerate() {
        for &(v, _) in nbrs {
            let key = (graph.labels[u], graph.labels[v]);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
    }
    let Some((lu, lv)) = best else {
        return code;
    };
    let mut embs: Vec<Embedding> = Vec::new();
    for (u, nbrs) in graph.adj.iter().enumerate() {
        for &(v, id) in nbrs {
            if graph.labels[u] == lu && graph.labels[v] == lv {
                embs.push(Embedding {
                    map: vec![u, v],
                    used: 1 << id,
                });
            }
        }
    }
    code.push(DfsEdge {
        from: 0,
        to: 1,
        from_label: lu,
        to_label: lv,
    });

    while code.len() < graph.edge_count {
        let path = rightmost_path(&code);
        let rm = path[0];

        let mut back_target: Option<usize> = None;
        for emb in &embs {
            for &j in &path[1..] {
                if let Some(id) = graph.edge_id(emb.map[rm], emb.map[j]) {
                    if emb.used & (1 << id) == 0 && back_target.is_none_or(|b| j < b) {
                        back_target = Some(j);
                    }
                }
            }
        }
        if let Some(j) = back_target {
            let mut next = Vec::with_capacity(embs.len());
            for mut emb in embs {
                if let Some(id) = graph.edge_id(emb.map[rm], emb.map[j]) {
                    if emb.used & (1 << id) == 0 {
                        emb.used |= 1 << id;
                        next.push(emb);
                    }
                }
            }
            embs = next;
            code.push(DfsEdge {
                from: rm,
                to: j,
                from_label: graph.labels[embs[0].map[rm]],
                to_label: graph.labels[embs[0].map[j]],
            });
            continue;
        }

        let new_vertex = vertex_count(&code);
        let mut chosen: Option<(usize, u32)> = None;
        for &i in &path {
            let mut min_label: Option<u32> = None;
            for emb in &embs {
                for &(w, _) in &graph.adj[emb.map[i]] {
                    if !emb.map.contains(&w) {
                        let l = graph.labels[w];
                        if min_label.is_none_or(|m| l < m) {
                            min_label = Some(l);
                        }
                    }
                }
            }
            if let Some(l) = min_label {
                chosen = Some((i, l));
                break;
            }
        }
        let (i, to_label) = chosen.expect("connected graph has an extension");
        let mut next = Vec::new();
        for emb in &embs {
            for &(w, id) in &graph.adj[emb.map[i]] {
                if !emb.map.contains(&w) && graph.labels[w] == to_label {
                    let mut map = emb.map.clone();
                    map.push(w);
                    next.push(Embedding {
                        map,
                        used: emb.used | (1 << id),
                    });
                }
            }
        }
        code.push(DfsEdge {
            from: i,
            to: new_vertex,
            from_label: graph.labels[embs[0].map[i]],
            to_label,
        });
        embs = next;
    }
    code
}

pub(crate) fn is_min(code: &[DfsEdge]) -> bool {
    min_code(&CodeGraph::from_code(code)) == code
}

/// Renders a code with label names, e.g. `[[0,1,"a","b"],[1,2,"b","c"]]`.
pub(crate) fn render(code: &[DfsEdge], names: &[String]) -> String {
    let rows: Vec<(usize, usize, &str, &str)> = code
        .iter()
        .map(|e| {
            (
                e.from,
                e.to,
                names[e.from_label as usize].as_str(),
                names[e.to_label as usize].as_str(),
            )
        })
        .collect();
    serde_json::to_string(&rows).expect("code rows serialize")
}

/// Canonical (minimum DFS) code of a connected graph with at least one edge.
/// Isomorphic graphs, and only those, share a code.
pub fn canonical_code(graph: &LabeledGraph) -> Result<String> {
    if graph.edge_count() == 0 || !graph.is_connected() {
        return Err(Error::Input(
            "canonical codes need a connected graph with at least one edge".into(),
        ));
    }
    if graph.edge_count() > 64 {
        return Err(Error::Input("graph too large for a canonical code".into()));
    }
    let names: Vec<String> = graph
        .labels()
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let ids: Vec<u32> = graph
        .labels()
        .iter()
        .map(|l| names.binary_search(l).expect("label interned") as u32)
        .collect();
    let code = min_code(&CodeGraph::new(ids, graph.edges()));
    Ok(render(&code, &names))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lg(labels: &[&str], edges: &[(usize, usize)]) -> LabeledGraph {
        LabeledGraph::new("t", labels.iter().map(|s| s.to_string()).collect(), edges.to_vec())
            .unwrap()
    }

    #[test]
    fn triangle_code() {
        let t = lg(&["z", "x", "y"], &[(0, 1), (1, 2), (2, 0)]);
        assert_eq!(
            canonical_code(&t).unwrap(),
            r#"[[0,1,"x","y"],[1,2,"y","z"],[2,0,"z","x"]]"#
        );
    }

    #[test]
    fn code_is_min_of_itself() {
        let g = lg(&["a", "a", "b", "a"], &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]);
        let ids = vec![0, 0, 1, 0];
        let code = min_code(&CodeGraph::new(ids, g.edges()));
        assert!(is_min(&code));
        assert_eq!(code.len(), 5);
    }

    #[test]
    fn non_minimal_code_detected() {
        // Path b-a-a written starting from the `b` end.
        let code = vec![
            DfsEdge { from: 0, to: 1, from_label: 1, to_label: 0 },
            DfsEdge { from: 1, to: 2, from_label: 0, to_label: 0 },
        ];
        assert!(!is_min(&code));
    }

    #[test]
    fn rejects_disconnected() {
        assert!(canonical_code(&lg(&["a", "b", "c"], &[(0, 1)])).is_err());
    }

    #[test]
    fn rightmost_path_follows_tree_edges() {
        let code = vec![
            DfsEdge { from: 0, to: 1, from_label: 0, to_label: 0 },
            DfsEdge { from: 1, to: 2, from_label: 0, to_label: 0 },
            DfsEdge { from: 2, to: 0, from_label: 0, to_label: 0 },
            DfsEdge { from: 0, to: 3, from_label: 0, to_label: 0 },
        ];
        assert_eq!(rightmost_path(&code), vec![3, 0]);
    }
}
