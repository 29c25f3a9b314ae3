//! Restricted gSpan: grows DFS codes by rightmost extension up to
//! `max_nodes` vertices and reports the cyclic ones that reach `min_support`.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::dfs::{self, CodeGraph, DfsCode, DfsEdge};
use super::graph::LabeledGraph;
use super::{AttributePattern, MinerConfig};
use crate::{Error, Result};

#[derive(Clone)]
struct Projection {
    gid: usize,
    map: Vec<usize>,
    used: Vec<usize>,
}

struct Found {
    code: DfsCode,
    support: usize,
}

struct Miner<'a> {
    graphs: &'a [CodeGraph],
    config: &'a MinerConfig,
}

fn support(projections: &[Projection]) -> usize {
    let mut count = 0;
    let mut last = usize::MAX;
    for p in projections {
        if p.gid != last {
            count += 1;
            last = p.gid;
        }
    }
    count
}

impl Miner<'_> {
    fn grow(&self, code: &mut DfsCode, projections: &[Projection], out: &mut Vec<Found>) {
        if !dfs::is_min(code) {
            return;
        }
        let nodes = dfs::vertex_count(code);
        let cyclic = code.len() >= nodes;
        if nodes >= 3 && (cyclic || !self.config.require_cycle) {
            out.push(Found {
                code: code.clone(),
                support: support(projections),
            });
        }

        let path = dfs::rightmost_path(code);
        let rm = path[0];
        let mut extensions: BTreeMap<DfsEdge, Vec<Projection>> = BTreeMap::new();
        for p in projections {
            let g = &self.graphs[p.gid];
            let rm_vertex = p.map[rm];
            for &j in &path[1..] {
                if let Some(id) = g.edge_id(rm_vertex, p.map[j]) {
                    if !p.used.contains(&id) {
                        let key = DfsEdge {
                            from: rm,
                            to: j,
                            from_label: g.labels[rm_vertex],
                            to_label: g.labels[p.map[j]],
                        };
                        let mut next = p.clone();
                        next.used.push(id);
                        extensions.entry(key).or_default().push(next);
                    }
                }
            }
            if nodes < self.config.max_nodes {
                for &i in &path {
                    for &(w, id) in &g.adj[p.map[i]] {
                        if p.map.contains(&w) {
                            continue;
                        }
                        let key = DfsEdge {
                            from: i,
                            to: nodes,
                            from_label: g.labels[p.map[i]],
                            to_label: g.labels[w],
                        };
                        let mut next = p.clone();
                        next.map.push(w);
                        next.used.push(id);
                        extensions.entry(key).or_default().push(next);
                    }
                }
            }
        }
        for (edge, projs) in extensions {
            if support(&projs) >= self.config.min_support {
                code.push(edge);
                self.grow(code, &projs, out);
                code.pop();
            }
        }
    }
}

/// Mines frequent patterns from graphs of a single attribute type. Output is
/// sorted by support (descending) then canonical code.
pub fn mine_frequent(
    graphs: &[LabeledGraph],
    config: &MinerConfig,
) -> Result<Vec<AttributePattern>> {
    config.validate()?;
    let Some(first) = graphs.first() else {
        return Ok(Vec::new());
    };
    let attribute_type = first.attribute_type().to_owned();
    if let Some(bad) = graphs.iter().find(|g| g.attribute_type() != attribute_type) {
        return Err(Error::Input(format!(
            "mixed attribute types `{attribute_type}` and `{}`",
            bad.attribute_type()
        )));
    }
    let names: Vec<String> = graphs
        .iter()
        .flat_map(|g| g.labels().iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let coded: Vec<CodeGraph> = graphs
        .iter()
        .map(|g| {
            let ids = g
                .labels()
                .iter()
                .map(|l| names.binary_search(l).expect("label interned") as u32)
                .collect();
            CodeGraph::new(ids, g.edges())
        })
        .collect();

    let mut seeds: BTreeMap<DfsEdge, Vec<Projection>> = BTreeMap::new();
    for (gid, g) in coded.iter().enumerate() {
        for (u, nbrs) in g.adj.iter().enumerate() {
            for &(v, id) in nbrs {
                if g.labels[u] <= g.labels[v] {
                    let key = DfsEdge {
                        from: 0,
                        to: 1,
                        from_label: g.labels[u],
                        to_label: g.labels[v],
                    };
                    seeds.entry(key).or_default().push(Projection {
                        gid,
                        map: vec![u, v],
                        used: vec![id],
                    });
                }
            }
        }
    }
    let seeds: Vec<(DfsEdge, Vec<Projection>)> = seeds
        .into_iter()
        .filter(|(_, p)| support(p) >= config.min_support)
        .collect();

    let miner = Miner {
        graphs: &coded,
        config,
    };
    let run = |(edge, projs): &(DfsEdge, Vec<Projection>)| {
        let mut out = Vec::new();
        miner.grow(&mut vec![*edge], projs, &mut out);
        out
    };
    let found: Vec<Found> = if config.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| seeds.par_iter().flat_map_iter(run).collect())
    } else {
        seeds.iter().flat_map(run).collect()
    };

    let mut patterns: Vec<AttributePattern> = found
        .into_iter()
        .map(|f| {
            let graph = CodeGraph::from_code(&f.code);
            let labels = graph
                .labels
                .iter()
                .map(|&l| names[l as usize].clone())
                .collect();
            let edges = f.code.iter().map(|e| (e.from, e.to)).collect();
            AttributePattern {
                graph: LabeledGraph::new(attribute_type.clone(), labels, edges)
                    .expect("code edges in range"),
                canonical_code: dfs::render(&f.code, &names),
                support: f.support,
            }
        })
        .collect();
    patterns.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then_with(|| a.canonical_code.cmp(&b.canonical_code))
    });
    Ok(patterns)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lg(labels: &[&str], edges: &[(usize, usize)]) -> LabeledGraph {
        LabeledGraph::new(
            "category",
            labels.iter().map(|s| s.to_string()).collect(),
            edges.to_vec(),
        )
        .unwrap()
    }

    fn config(min_support: usize) -> MinerConfig {
        MinerConfig {
            min_support,
            ..MinerConfig::default()
        }
    }

    #[test]
    fn repeated_triangle_is_the_only_pattern() {
        let graphs = vec![lg(&["x", "y", "z"], &[(0, 1), (1, 2), (2, 0)]); 5];
        let out = mine_frequent(&graphs, &config(5)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].support, 5);
        assert_eq!(out[0].graph.node_count(), 3);
        assert_eq!(out[0].graph.edge_count(), 3);
    }

    #[test]
    fn paths_have_no_cyclic_patterns() {
        let graphs = vec![lg(&["x", "y", "z"], &[(0, 1), (1, 2)]); 5];
        assert!(mine_frequent(&graphs, &config(1)).unwrap().is_empty());
    }

    #[test]
    fn acyclic_patterns_when_cycle_filter_off() {
        let graphs = vec![lg(&["x", "y", "z"], &[(0, 1), (1, 2)]); 5];
        let cfg = MinerConfig {
            require_cycle: false,
            ..config(5)
        };
        let out = mine_frequent(&graphs, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].graph.edge_count(), 2);
    }

    #[test]
    fn support_counts_graphs_not_embeddings() {
        // K4 with identical labels holds four triangle embeddings.
        let k4 = lg(&["a"; 4], &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        let out = mine_frequent(&[k4.clone(), k4], &config(2)).unwrap();
        assert!(out.iter().all(|p| p.support == 2));
        // C3, paw, C4, diamond, K4
        assert_eq!(out.len(), 5);
    }

    #[test]
    fn mixed_attribute_types_rejected() {
        let a = lg(&["x", "y"], &[(0, 1)]);
        let b = LabeledGraph::new("brand", vec!["x".into(), "y".into()], vec![(0, 1)]).unwrap();
        assert!(matches!(
            mine_frequent(&[a, b], &config(1)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let graphs: Vec<LabeledGraph> = (0..6)
            .map(|i| {
                let labels = ["a", "b", "a", "c", "b"];
                let mut edges = vec![(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 1)];
                edges.truncate(3 + i % 4);
                lg(&labels, &edges)
            })
            .collect();
        let serial = mine_frequent(&graphs, &config(2)).unwrap();
        let parallel = mine_frequent(
            &graphs,
            &MinerConfig {
                workers: 4,
                ..config(2)
            },
        )
        .unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn codes_match_standalone_canonicalization() {
        let graphs = vec![
            lg(&["q", "p", "r", "p"], &[(0, 1), (1, 2), (2, 3), (3, 0), (1, 3)]);
            3
        ];
        for p in mine_frequent(&graphs, &config(3)).unwrap() {
            assert_eq!(
                dfs::canonical_code(&p.graph).unwrap(),
                p.canonical_code
            );
        }
    }
}
