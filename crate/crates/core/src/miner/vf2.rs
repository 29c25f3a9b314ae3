//! VF2-style state-space search for label-preserving subgraph monomorphism.

use super::graph::LabeledGraph;

struct Side {
    adj: Vec<Vec<usize>>,
    matrix: Vec<Vec<bool>>,
    core: Vec<Option<usize>>,
}

impl Side {
    fn new(g: &LabeledGraph) -> Self {
        let n = g.node_count();
        let mut matrix = vec![vec![false; n]; n];
        for &(u, v) in g.edges() {
            matrix[u][v] = true;
            matrix[v][u] = true;
        }
        Side {
            adj: g.adjacency(),
            matrix,
            core: vec![None; n],
        }
    }

    /// Unmapped nodes adjacent to the mapped set.
    fn terminal(&self) -> Vec<bool> {
        let mut t = vec![false; self.core.len()];
        for (u, c) in self.core.iter().enumerate() {
            if c.is_some() {
                for &w in &self.adj[u] {
                    if self.core[w].is_none() {
                        t[w] = true;
                    }
                }
            }
        }
        t
    }

    /// (unmapped neighbors in the terminal set, all unmapped neighbors)
    fn lookahead(&self, node: usize, terminal: &[bool]) -> (usize, usize) {
        let mut in_t = 0;
        let mut free = 0;
        for &w in &self.adj[node] {
            if self.core[w].is_none() {
                free += 1;
                if terminal[w] {
                    in_t += 1;
                }
            }
        }
        (in_t, free)
    }
}

struct Matcher<'a> {
    small_labels: &'a [String],
    big_labels: &'a [String],
    small: Side,
    big: Side,
    depth: usize,
}

impl Matcher<'_> {
    fn feasible(&self, n: usize, m: usize, t_small: &[bool], t_big: &[bool]) -> bool {
        if self.small_labels[n] != self.big_labels[m] {
            return false;
        }
        if self.small.adj[n].len() > self.big.adj[m].len() {
            return false;
        }
        for &w in &self.small.adj[n] {
            if let Some(img) = self.small.core[w] {
                if !self.big.matrix[m][img] {
                    return false;
                }
            }
        }
        let (st, sf) = self.small.lookahead(n, t_small);
        let (bt, bf) = self.big.lookahead(m, t_big);
        st <= bt && sf <= bf
    }

    fn search(&mut self) -> bool {
        let total = self.small.core.len();
        if self.depth == total {
            return true;
        }
        let t_small = self.small.terminal();
        let t_big = self.big.terminal();
        let frontier = t_small.iter().any(|&t| t);
        let n = (0..total)
            .find(|&u| self.small.core[u].is_none() && (!frontier || t_small[u]))
            .expect("an unmapped node remains");
        for m in 0..self.big.core.len() {
            if self.big.core[m].is_some() || (frontier && !t_big[m]) {
                continue;
            }
            if !self.feasible(n, m, &t_small, &t_big) {
                continue;
            }
            self.small.core[n] = Some(m);
            self.big.core[m] = Some(n);
            self.depth += 1;
            if self.search() {
                return true;
            }
            self.depth -= 1;
            self.small.core[n] = None;
            self.big.core[m] = None;
        }
        false
    }
}

/// Whether an injective, label-preserving node map from `small` into `big`
/// carries every edge of `small` onto an edge of `big`.
pub fn is_subgraph(small: &LabeledGraph, big: &LabeledGraph) -> bool {
    if small.node_count() > big.node_count() || small.edge_count() > big.edge_count() {
        return false;
    }
    let mut want: Vec<&String> = small.labels().iter().collect();
    let mut have: Vec<&String> = big.labels().iter().collect();
    want.sort();
    have.sort();
    let mut hi = 0;
    for l in want {
        while hi < have.len() && have[hi] < l {
            hi += 1;
        }
        if hi == have.len() || have[hi] != l {
            return false;
        }
        hi += 1;
    }
    let mut matcher = Matcher {
        small_labels: small.labels(),
        big_labels: big.labels(),
        small: Side::new(small),
        big: Side::new(big),
        depth: 0,
    };
    matcher.search()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lg(labels: &[&str], edges: &[(usize, usize)]) -> LabeledGraph {
        LabeledGraph::new("t", labels.iter().map(|s| s.to_string()).collect(), edges.to_vec())
            .unwrap()
    }

    #[test]
    fn graph_embeds_in_itself() {
        let g = lg(&["a", "b", "a", "c"], &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        assert!(is_subgraph(&g, &g));
    }

    #[test]
    fn label_mismatch() {
        let t1 = lg(&["x", "y", "z"], &[(0, 1), (1, 2), (2, 0)]);
        let t2 = lg(&["x", "y", "w"], &[(0, 1), (1, 2), (2, 0)]);
        assert!(!is_subgraph(&t1, &t2));
    }

    #[test]
    fn triangle_inside_paw() {
        let tri = lg(&["x", "y", "z"], &[(0, 1), (1, 2), (2, 0)]);
        let paw = lg(&["w", "z", "x", "y"], &[(0, 1), (1, 2), (2, 3), (3, 1)]);
        assert!(is_subgraph(&tri, &paw));
        assert!(!is_subgraph(&paw, &tri));
    }

    #[test]
    fn monomorphism_not_induced() {
        // A 4-cycle sits inside K4 even though K4 has extra chords.
        let c4 = lg(&["a"; 4], &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let k4 = lg(&["a"; 4], &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert!(is_subgraph(&c4, &k4));
    }

    #[test]
    fn disconnected_small_graph() {
        let two_edges = lg(&["a", "b", "a", "b"], &[(0, 1), (2, 3)]);
        let path = lg(&["a", "b", "a", "b"], &[(0, 1), (1, 2), (2, 3)]);
        assert!(is_subgraph(&two_edges, &path));
        let short = lg(&["a", "b", "a"], &[(0, 1), (1, 2)]);
        assert!(!is_subgraph(&two_edges, &short));
    }
}
