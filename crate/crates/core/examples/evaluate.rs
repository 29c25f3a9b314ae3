//! Ranking metrics by hand, then the three evaluation protocols on a
//! briefly trained model.

use attrpat::eval::{attribute_estimation, evaluate, metrics_at_k, period_recommendation, EvalConfig};
use attrpat::model::{Model, ModelConfig};
use attrpat::retrieval::RetrievalConfig;
use attrpat::sessions::split_by_day;
use attrpat::synth::{corpus, SynthConfig};
use attrpat::training::{prepare_examples, train, TrainConfig};

fn main() -> attrpat::Result<()> {
    let m = metrics_at_k(&[Some(1), None, Some(3)], 10)?;
    println!("ranks [1, miss, 3] @10: hits {:.4} ndcg {:.4} mrr {:.4}", m.hits, m.ndcg, m.mrr);
    if let Some((recall, ndcg, mrr)) = period_recommendation(&[4, 9, 2, 7], &[9, 7, 30]) {
        println!("period: recall {recall:.4} ndcg {ndcg:.4} first-hit rr {mrr:.4}");
    }

    let (catalog, sessions) = corpus(&SynthConfig::default())?;
    let brand = catalog.attribute_index("brand").expect("synthetic schema");
    println!(
        "brand of {} ranks {:?} among the brands of the first 5 items",
        catalog.item_id(7),
        attribute_estimation(&[0, 1, 2, 3, 4], &catalog, 7, brand)
    );

    // Pattern memory is left out here; see train_model for the full setup.
    let split = split_by_day(&sessions, 4, 4)?;
    let examples = prepare_examples(&split.train, &catalog, &[], &RetrievalConfig::default(), 12, true)?;
    let config = ModelConfig {
        d: 16,
        heads: 2,
        ..ModelConfig::default()
    };
    let vocab: Vec<usize> = (0..catalog.num_attributes()).map(|m| catalog.vocab(m).len()).collect();
    let model = Model::new(config, catalog.schema().to_vec(), catalog.len(), &vocab, 3)?;
    let tc = TrainConfig {
        lr: 5e-3,
        batch_size: 32,
        epochs: 3,
        ..TrainConfig::default()
    };
    let model = train(model, examples, &[], &tc)?.model;

    let lines = evaluate(&model, &split.test, &catalog, &[], &RetrievalConfig::default(), &EvalConfig::default())?;
    for l in &lines {
        let what = l.attribute.clone().or(l.n.map(|n| format!("next {n}"))).unwrap_or_default();
        println!(
            "{:<10} {:<10} K={:<3} hits {:.4} ndcg {:.4} mrr {:.4}",
            l.protocol, what, l.k, l.hits, l.ndcg, l.mrr
        );
    }
    Ok(())
}
