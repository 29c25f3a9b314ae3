//! The full command-line pipeline (ingest, mine, index, train, eval,
//! recommend, stats) in a temporary directory.

use attrpat::cli::main_with;
use attrpat::synth::{generate, write_records, SynthConfig};

const CONFIG: &str = r#"{
    "attribute_types": ["category", "brand"],
    "ingest": {"min_days": 3, "valid_days": 4, "test_days": 4},
    "miner": {"min_support": 10},
    "model": {"d": 16, "heads": 2},
    "train": {"epochs": 3, "batch_size": 32, "lr": 0.005},
    "seed": 1
}"#;

fn main() -> attrpat::Result<()> {
    let dir = std::env::temp_dir().join("attrpat-pipeline-example");
    std::fs::create_dir_all(&dir)?;
    write_records(&dir.join("sessions.jsonl"), &generate(&SynthConfig::default())?)?;
    std::fs::write(dir.join("attrpat.json"), CONFIG)?;
    std::fs::write(
        dir.join("query.jsonl"),
        r#"{"id":"q","day":0,"items":["item010","item011"]}"#,
    )?;

    let cfg = dir.join("attrpat.json");
    let query = dir.join("query.jsonl");
    let steps: [&[&str]; 7] = [
        &["ingest"],
        &["mine"],
        &["index"],
        &["train"],
        &["eval"],
        &["recommend", "-k", "5", "--input", query.to_str().unwrap()],
        &["stats"],
    ];
    for step in steps {
        println!("$ attrpat {}", step.join(" "));
        let mut args = vec!["attrpat", "-c", cfg.to_str().unwrap()];
        args.extend_from_slice(step);
        let code = main_with(args, &mut std::io::stdout(), &mut std::io::stderr());
        if code != 0 {
            std::process::exit(code);
        }
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}
