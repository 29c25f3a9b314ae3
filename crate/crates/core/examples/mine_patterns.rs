//! Mines frequent cyclic attribute patterns from a synthetic corpus, keeps
//! the maximal ones, and writes them to a pattern file.

use attrpat::miner::{filter_loose, is_subgraph, mine_frequent, read_patterns, write_patterns, MinerConfig};
use attrpat::sessions::session_layer;
use attrpat::synth::{corpus, SynthConfig};

fn main() -> attrpat::Result<()> {
    let (catalog, sessions) = corpus(&SynthConfig::default())?;
    let m = catalog.attribute_index("category").expect("synthetic schema");
    let graphs: Vec<_> = sessions.iter().map(|s| session_layer(&s.items, m, &catalog)).collect();

    let config = MinerConfig {
        min_support: 15,
        ..MinerConfig::default()
    };
    let frequent = mine_frequent(&graphs, &config)?;
    let kept = filter_loose(&frequent);
    println!("{} frequent cyclic patterns, {} maximal", frequent.len(), kept.len());
    for p in &kept {
        println!(
            "  support {:>3}  {} nodes {} edges  labels {:?}",
            p.support,
            p.graph.node_count(),
            p.graph.edge_count(),
            p.graph.labels()
        );
    }
    for p in frequent.iter().filter(|p| !kept.contains(p)).take(3) {
        let host = kept.iter().find(|q| is_subgraph(&p.graph, &q.graph)).expect("dropped patterns embed");
        println!("dropped {} (embeds into {})", p.canonical_code, host.canonical_code);
    }

    let dir = std::env::temp_dir().join("attrpat-mine-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("patterns.category.jsonl");
    write_patterns(&path, &kept)?;
    assert_eq!(read_patterns(&path, "category")?, kept);
    println!("wrote {}", path.display());
    Ok(())
}
