//! Trains a small model on a synthetic corpus, selecting the epoch with the
//! best validation MRR@10, and saves the checkpoint.

use attrpat::miner::{filter_loose, mine_frequent, MinerConfig};
use attrpat::model::{Model, ModelConfig};
use attrpat::retrieval::{PatternStore, RetrievalConfig};
use attrpat::sessions::{core_filter, session_layer, split_by_day};
use attrpat::synth::{corpus, SynthConfig};
use attrpat::training::{prepare_examples, train, LossKind, TrainConfig};

fn main() -> attrpat::Result<()> {
    let loss = match std::env::args().nth(1).as_deref() {
        Some("bpr") => LossKind::Bpr,
        _ => LossKind::CrossEntropy,
    };
    let (catalog, sessions) = corpus(&SynthConfig::default())?;
    let split = split_by_day(&core_filter(&sessions, 3), 4, 4)?;

    let miner = MinerConfig {
        min_support: 10,
        ..MinerConfig::default()
    };
    let mut stores = Vec::new();
    for (m, t) in catalog.schema().iter().enumerate() {
        let graphs: Vec<_> = split.train.iter().map(|s| session_layer(&s.items, m, &catalog)).collect();
        stores.push(PatternStore::new(t.clone(), filter_loose(&mine_frequent(&graphs, &miner)?))?);
    }

    let retrieval = RetrievalConfig::default();
    let train_set = prepare_examples(&split.train, &catalog, &stores, &retrieval, 12, true)?;
    let valid_set = prepare_examples(&split.valid, &catalog, &stores, &retrieval, 12, true)?;
    println!("{} training and {} validation examples", train_set.len(), valid_set.len());

    let config = ModelConfig {
        d: 16,
        heads: 2,
        ..ModelConfig::default()
    };
    let vocab: Vec<usize> = (0..catalog.num_attributes()).map(|m| catalog.vocab(m).len()).collect();
    let model = Model::new(config, catalog.schema().to_vec(), catalog.len(), &vocab, 1)?;
    let tc = TrainConfig {
        lr: 5e-3,
        batch_size: 32,
        epochs: 5,
        loss,
        ..TrainConfig::default()
    };
    let outcome = train(model, train_set, &valid_set, &tc)?;
    for e in &outcome.log {
        println!(
            "epoch {}  loss {:.4}  valid MRR@10 {:.4}  lr {:.2e}",
            e.epoch, e.train_loss, e.valid_mrr10, e.lr
        );
    }
    let dir = std::env::temp_dir().join("attrpat-train-example");
    std::fs::create_dir_all(&dir)?;
    outcome.model.save(&dir, "model")?;
    println!("kept epoch {} -> {}", outcome.best_epoch, dir.join("model.ckpt").display());
    Ok(())
}
