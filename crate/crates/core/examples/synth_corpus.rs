//! Writes a seeded synthetic session log.
//!
//! cargo run --example synth_corpus -- sessions.jsonl [sessions] [seed]

use attrpat::synth::{generate, write_records, SynthConfig};

fn main() -> attrpat::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let path = args.first().map_or("sessions.jsonl", String::as_str);
    let mut config = SynthConfig::default();
    if let Some(n) = args.get(1) {
        config.sessions = n.parse().expect("session count");
    }
    if let Some(s) = args.get(2) {
        config.seed = s.parse().expect("seed");
    }
    let records = generate(&config)?;
    write_records(path.as_ref(), &records)?;
    println!("{} sessions over {} days -> {path}", records.len(), config.days);
    for r in records.iter().take(3) {
        println!("  {} day {}: {}", r.id, r.day, r.items.join(" "));
    }
    Ok(())
}
