//! Compares edge density of session graphs, their union, complete
//! shortcut graphs and mined patterns.

use attrpat::eval::density_stats;
use attrpat::miner::{default_min_support, filter_loose, mine_frequent, MinerConfig};
use attrpat::sessions::session_layer;
use attrpat::synth::{corpus, SynthConfig};

fn main() -> attrpat::Result<()> {
    let (catalog, sessions) = corpus(&SynthConfig {
        sessions: 600,
        max_len: 12,
        ..SynthConfig::default()
    })?;
    let miner = MinerConfig {
        min_support: default_min_support(sessions.len()),
        ..MinerConfig::default()
    };
    let mut patterns = Vec::new();
    for m in 0..catalog.num_attributes() {
        let graphs: Vec<_> = sessions.iter().map(|s| session_layer(&s.items, m, &catalog)).collect();
        patterns.extend(filter_loose(&mine_frequent(&graphs, &miner)?));
    }
    let r = density_stats(&sessions, &patterns)?;
    println!("{} sessions, {} patterns", r.sessions, r.patterns);
    println!("  session graphs  {:.3}", r.local);
    println!("  global graph    {:.3}", r.global);
    println!("  shortcut graphs {:.3}", r.shortcut);
    if let Some(p) = r.pattern {
        println!("  patterns        {p:.3}");
    }
    Ok(())
}
