//! Builds a pattern store and retrieves the most similar patterns for a
//! session's attribute layer.

use attrpat::miner::{AttributePattern, LabeledGraph};
use attrpat::retrieval::{PatternStore, RetrievalConfig};

fn pattern(labels: &[&str], edges: &[(usize, usize)], support: usize) -> attrpat::Result<AttributePattern> {
    let g = LabeledGraph::new("brand", labels.iter().map(|s| s.to_string()).collect(), edges.to_vec())?;
    AttributePattern::from_graph(g, support)
}

fn main() -> attrpat::Result<()> {
    let tri = [(0, 1), (1, 2), (0, 2)];
    let store = PatternStore::new(
        "brand",
        vec![
            pattern(&["acme", "zenith", "orbit"], &tri, 40)?,
            pattern(&["acme", "acme", "zenith"], &tri, 25)?,
            pattern(&["nova", "orbit", "nova", "orbit"], &[(0, 1), (1, 2), (2, 3), (0, 3)], 31)?,
            pattern(&["lumen", "nova", "lumen"], &tri, 12)?,
        ],
    )?;

    let session = LabeledGraph::new(
        "brand",
        vec!["acme".into(), "zenith".into(), "nova".into()],
        vec![(0, 1), (1, 2)],
    )?;
    let config = RetrievalConfig { max_patterns: 3 };
    println!("session labels {:?}", session.labels());
    for s in store.retrieve_scored(&session, &config)? {
        let p = store.get(s.index);
        println!("  jaccard {:.3}  support {:>2}  {:?}", s.score, p.support, p.graph.labels());
    }
    println!("postings for `nova`: {:?}", store.postings("nova"));
    Ok(())
}
