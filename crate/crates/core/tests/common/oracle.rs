//! Brute-force references: exhaustive embedding search, permutation-based
//! canonical forms, and enumerate-count-filter mining.

use std::collections::{BTreeMap, BTreeSet};

use attrpat::miner::LabeledGraph;

type Edges = BTreeSet<(usize, usize)>;

fn edge_set(g: &LabeledGraph) -> Edges {
    g.edges().iter().copied().collect()
}

/// Whether some injective, label-preserving map sends every edge of
/// `small` onto an edge of `big`.
pub fn embeds(small: &LabeledGraph, big: &LabeledGraph) -> bool {
    let (n, m) = (small.node_count(), big.node_count());
    if n > m {
        return false;
    }
    let big_edges = edge_set(big);
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; m];
    fn go(
        i: usize,
        small: &LabeledGraph,
        big: &LabeledGraph,
        big_edges: &Edges,
        map: &mut [usize],
        used: &mut [bool],
    ) -> bool {
        if i == map.len() {
            return small.edges().iter().all(|&(u, v)| {
                let (a, b) = (map[u], map[v]);
                big_edges.contains(&(a.min(b), a.max(b)))
            });
        }
        for t in 0..big.node_count() {
            if !used[t] && small.labels()[i] == big.labels()[t] {
                used[t] = true;
                map[i] = t;
                if go(i + 1, small, big, big_edges, map, used) {
                    return true;
                }
                used[t] = false;
            }
        }
        false
    }
    go(0, small, big, &big_edges, &mut map, &mut used)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Smallest (labels, sorted edges) rendering over all node orders.
pub fn canonical_form(g: &LabeledGraph) -> String {
    let n = g.node_count();
    permutations(n)
        .into_iter()
        .map(|perm| {
            // perm[old] = new
            let mut labels = vec![String::new(); n];
            for (old, &new) in perm.iter().enumerate() {
                labels[new] = g.labels()[old].clone();
            }
            let mut edges: Vec<(usize, usize)> = g
                .edges()
                .iter()
                .map(|&(u, v)| (perm[u].min(perm[v]), perm[u].max(perm[v])))
                .collect();
            edges.sort_unstable();
            format!("{labels:?}{edges:?}")
        })
        .min()
        .unwrap()
}

fn connected(nodes: &[usize], edges: &[(usize, usize)]) -> bool {
    let mut seen = BTreeSet::from([nodes[0]]);
    let mut stack = vec![nodes[0]];
    while let Some(u) = stack.pop() {
        for &(a, b) in edges {
            let next = if a == u { b } else if b == u { a } else { continue };
            if seen.insert(next) {
                stack.push(next);
            }
        }
    }
    seen.len() == nodes.len()
}

fn has_cycle(nodes: usize, edges: usize) -> bool {
    // A connected graph is a tree exactly when it has n - 1 edges.
    edges >= nodes
}

/// Every connected subgraph (node subset plus edge subset) with at most
/// `max_nodes` nodes, as relabeled graphs.
pub fn connected_subgraphs(g: &LabeledGraph, max_nodes: usize) -> Vec<LabeledGraph> {
    let n = g.node_count();
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        let nodes: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        if nodes.len() > max_nodes {
            continue;
        }
        let induced: Vec<(usize, usize)> = g
            .edges()
            .iter()
            .copied()
            .filter(|&(u, v)| mask >> u & 1 == 1 && mask >> v & 1 == 1)
            .collect();
        for emask in 0u32..(1 << induced.len()) {
            let chosen: Vec<(usize, usize)> = (0..induced.len())
                .filter(|i| emask >> i & 1 == 1)
                .map(|i| induced[i])
                .collect();
            if !connected(&nodes, &chosen) {
                continue;
            }
            let local = |x: usize| nodes.iter().position(|&y| y == x).unwrap();
            let labels = nodes.iter().map(|&v| g.labels()[v].clone()).collect();
            let edges = chosen.iter().map(|&(u, v)| (local(u), local(v))).collect();
            out.push(LabeledGraph::new(g.attribute_type(), labels, edges).unwrap());
        }
    }
    out
}

/// Canonical form -> (representative, support) of all connected subgraphs
/// with a cycle, at most `max_nodes` nodes, and support >= `min_support`,
/// with non-maximal ones removed.
pub fn mine_oracle(
    graphs: &[LabeledGraph],
    max_nodes: usize,
    min_support: usize,
) -> BTreeMap<String, (LabeledGraph, usize)> {
    let mut found: BTreeMap<String, (LabeledGraph, BTreeSet<usize>)> = BTreeMap::new();
    for (gi, g) in graphs.iter().enumerate() {
        for sub in connected_subgraphs(g, max_nodes) {
            if !has_cycle(sub.node_count(), sub.edge_count()) {
                continue;
            }
            let key = canonical_form(&sub);
            found.entry(key).or_insert_with(|| (sub, BTreeSet::new())).1.insert(gi);
        }
    }
    let frequent: Vec<(String, LabeledGraph, usize)> = found
        .into_iter()
        .filter(|(_, (_, s))| s.len() >= min_support)
        .map(|(k, (g, s))| (k, g, s.len()))
        .collect();
    frequent
        .iter()
        .filter(|(k, g, _)| !frequent.iter().any(|(k2, g2, _)| k2 != k && embeds(g, g2)))
        .map(|(k, g, s)| (k.clone(), (g.clone(), *s)))
        .collect()
}
