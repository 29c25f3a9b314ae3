//! Parses a small click log, applies core filtering and a day split, and
//! prints the item graph and attribute layers of one session.

use attrpat::sessions::{core_filter, parse_sessions, split_by_day, to_multiplex, to_session_graph, WeightMode};

const LOG: &str = r#"{"id":"a","day":1,"items":["p1","p2","p1","p3"],"attrs":{"category":["shoes","socks","shoes","hats"]}}
{"id":"b","day":2,"items":["p2","p3"],"attrs":{"category":["socks","hats"]}}
{"id":"c","day":3,"items":["p1","p3","p2"],"attrs":{"category":["shoes","hats","socks"]}}
{"id":"d","day":4,"items":["p3","p1"],"attrs":{"category":["hats","shoes"]}}
{"id":"e","day":5,"items":["p4","p1"],"attrs":{"category":["bags","shoes"]}}
"#;

fn main() -> attrpat::Result<()> {
    let (catalog, sessions) = parse_sessions(LOG.as_bytes(), &["category".to_string()], 50)?;
    println!("{} sessions, {} items", sessions.len(), catalog.len());

    // p4 appears on a single day and is dropped with min_days = 2.
    let kept = core_filter(&sessions, 2);
    println!("after core filter: {:?}", kept.iter().map(|s| s.id.as_str()).collect::<Vec<_>>());

    let split = split_by_day(&kept, 1, 1)?;
    println!(
        "train {} / valid {} / test {} (valid after day {}, test after day {})",
        split.train.len(),
        split.valid.len(),
        split.test.len(),
        split.valid_after,
        split.test_after
    );

    let s = &sessions[0];
    let g = to_session_graph(&s.items, WeightMode::Outdegree);
    println!("\nsession {}: {} nodes, {} edges", s.id, g.node_count(), g.edge_count());
    for ((u, v), w) in g.weights() {
        let (a, b) = (catalog.item_id(g.nodes[u]), catalog.item_id(g.nodes[v]));
        println!("  {a} -> {b}  weight {w:.2}");
    }
    let mx = to_multiplex(&s.items, &catalog)?;
    let layer = mx.labeled_layer(0, &catalog);
    println!("category layer: labels {:?}, edges {:?}", layer.labels(), layer.edges());
    Ok(())
}
