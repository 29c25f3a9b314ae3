//! One forward pass with pattern memory: prints the retrieved memory, the
//! per-position gate over attribute types, the readout weights and the
//! top-scored items.

use attrpat::autodiff::Tape;
use attrpat::eval::top_k;
use attrpat::miner::{filter_loose, mine_frequent, MinerConfig};
use attrpat::model::{Model, ModelConfig, SessionInput};
use attrpat::retrieval::{PatternStore, RetrievalConfig};
use attrpat::sessions::session_layer;
use attrpat::synth::{corpus, SynthConfig};

fn main() -> attrpat::Result<()> {
    let (catalog, sessions) = corpus(&SynthConfig::default())?;
    let miner = MinerConfig {
        min_support: 10,
        ..MinerConfig::default()
    };
    let mut stores = Vec::new();
    for (m, t) in catalog.schema().iter().enumerate() {
        let graphs: Vec<_> = sessions.iter().map(|s| session_layer(&s.items, m, &catalog)).collect();
        stores.push(PatternStore::new(t.clone(), filter_loose(&mine_frequent(&graphs, &miner)?))?);
    }

    let config = ModelConfig {
        d: 16,
        heads: 2,
        ..ModelConfig::default()
    };
    let vocab: Vec<usize> = (0..catalog.num_attributes()).map(|m| catalog.vocab(m).len()).collect();
    let model = Model::new(config, catalog.schema().to_vec(), catalog.len(), &vocab, 7)?;
    println!("{} parameters in {} tensors", model.params().numel(), model.params().len());

    let items = &sessions[3].items;
    let input = SessionInput::build(items, &catalog, &stores, &RetrievalConfig::default(), 12)?;
    for (t, mem) in catalog.schema().iter().zip(&input.memory) {
        println!("{t}: {} memory patterns", mem.len());
    }

    let mut tape = Tape::new();
    let vars = model.bind_frozen(&mut tape);
    let trace = model.forward(&mut tape, &vars, &input)?;
    if let Some(beta) = trace.beta {
        let beta = tape.value(beta);
        for r in 0..beta.rows() {
            let row: Vec<String> = beta.row_slice(r).iter().map(|b| format!("{b:.3}")).collect();
            println!("  gate at position {r}: [{}]", row.join(", "));
        }
    }
    let gamma = tape.value(trace.prediction.gamma);
    println!("readout weights {:?}", gamma.data().iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>());
    let scores = tape.value(trace.scores()).data().to_vec();
    let session: Vec<&str> = items.iter().map(|&i| catalog.item_id(i)).collect();
    println!("session {session:?}");
    for v in top_k(&scores, 5) {
        println!("  {}  {:.4}", catalog.item_id(v), scores[v]);
    }
    Ok(())
}
