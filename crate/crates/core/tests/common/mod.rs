#![allow(dead_code)]

pub mod oracle;

use attrpat::miner::LabeledGraph;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random labeled graph with up to `max_nodes` nodes over `labels` labels.
pub fn random_graph(rng: &mut ChaCha8Rng, ty: &str, max_nodes: usize, labels: usize, density: f64) -> LabeledGraph {
    let n = rng.gen_range(1..=max_nodes);
    let names = (0..n).map(|_| format!("l{}", rng.gen_range(0..labels))).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(density) {
                edges.push((u, v));
            }
        }
    }
    LabeledGraph::new(ty, names, edges).unwrap()
}
