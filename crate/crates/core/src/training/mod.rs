//! Optimization: losses, the warmup/decay schedule, Adam and the epoch loop.

mod optim;

pub use optim::{lr_at, Adam};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::eval::{metrics_at_k, rank_in_scores};
use crate::model::{Model, SessionInput};
use crate::retrieval::{PatternStore, RetrievalConfig};
use crate::sessions::{ItemCatalog, Session};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    CrossEntropy,
    Bpr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub warmup_fraction: f64,
    pub bpr_negatives: usize,
    /// One example per session prefix rather than only the full session.
    pub prefix_expansion: bool,
    /// Stop after this many epochs without a better validation MRR@10.
    pub patience: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            weight_decay: 1e-5,
            batch_size: 100,
            epochs: 10,
            seed: 0,
            loss: LossKind::CrossEntropy,
            warmup_fraction: 0.1,
            bpr_negatives: 1,
            prefix_expansion: true,
            patience: Some(5),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train.warmup_fraction = {} outside (0, 1)",
                self.warmup_fraction
            )));
        }
        if self.lr < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("train.lr and train.weight_decay must be non-negative".into()));
        }
        if self.loss == LossKind::Bpr && self.bpr_negatives == 0 {
            return Err(Error::Config("train.bpr_negatives must be at least 1".into()));
        }
        Ok(())
    }
}

/// `-log softmax(scores)[target]`, or the mean of
/// `-log σ(s_target - s_neg)` over `negatives`.
pub fn compute_loss(
    tape: &mut Tape,
    scores: Var,
    target: usize,
    kind: LossKind,
    negatives: &[usize],
) -> Result<Var> {
    let n = tape.value(scores).numel();
    if target >= n {
        return Err(Error::Input(format!("target {target} outside {n} items")));
    }
    match kind {
        LossKind::CrossEntropy => {
            let ls = tape.log_softmax(scores)?;
            let picked = tape.take(ls, vec![target], vec![1, 1])?;
            tape.scale(picked, -1.0)
        }
        LossKind::Bpr => {
            if negatives.is_empty() {
                return Err(Error::Input("BPR needs at least one negative".into()));
            }
            if let Some(&bad) = negatives.iter().find(|&&v| v >= n || v == target) {
                return Err(Error::Input(format!("invalid negative {bad}")));
            }
            let pos = tape.take(scores, vec![target; negatives.len()], vec![1, negatives.len()])?;
            let neg = tape.take(scores, negatives.to_vec(), vec![1, negatives.len()])?;
            let diff = tape.sub(pos, neg)?;
            let ls = tape.log_sigmoid(diff)?;
            let total = tape.sum(ls)?;
            tape.scale(total, -1.0 / negatives.len() as f64)
        }
    }
}

/// Uniform draws from `0..num_items` excluding `target`.
pub fn sample_negatives(rng: &mut ChaCha8Rng, num_items: usize, target: usize, count: usize) -> Result<Vec<usize>> {
    if num_items < 2 {
        return Err(Error::Input("negative sampling needs at least two items".into()));
    }
    Ok((0..count)
        .map(|_| {
            let v = rng.gen_range(0..num_items - 1);
            if v >= target {
                v + 1
            } else {
                v
            }
        })
        .collect())
}

/// A prefix with its next item and everything the forward pass needs.
#[derive(Debug, Clone)]
pub struct Example {
    pub input: SessionInput,
    pub target: usize,
}

/// Turns sessions into next-item examples: every prefix of length `l >= 1`
/// predicts item `l + 1`, or only the last item without prefix expansion.
pub fn prepare_examples(
    sessions: &[Session],
    catalog: &ItemCatalog,
    stores: &[PatternStore],
    retrieval: &RetrievalConfig,
    max_neighbors: usize,
    prefix_expansion: bool,
) -> Result<Vec<Example>> {
    let cuts: Vec<(usize, usize)> = sessions
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            let l = s.items.len();
            let range = if l < 2 {
                0..0
            } else if prefix_expansion {
                1..l
            } else {
                l - 1..l
            };
            range.map(move |c| (i, c))
        })
        .collect();
    cuts.par_iter()
        .map(|&(i, c)| {
            let items = &sessions[i].items;
            Ok(Example {
                input: SessionInput::build(&items[..c], catalog, stores, retrieval, max_neighbors)?,
                target: items[c],
            })
        })
        .collect()
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_mrr10: f64,
    pub lr: f64,
}

/// Mixes a seed with two counters into an independent stream seed.
fn stream_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Loss and parameter gradients of one example.
pub fn example_gradients(
    model: &Model,
    example: &Example,
    loss: LossKind,
    negatives: &[usize],
    dropout_seed: Option<u64>,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = match dropout_seed {
        Some(s) => Tape::training(s),
        None => Tape::new(),
    };
    let vars = model.bind(&mut tape);
    let trace = model.forward(&mut tape, &vars, &example.input)?;
    let l = compute_loss(&mut tape, trace.scores(), example.target, loss, negatives)?;
    let value = tape.value(l).item();
    let mut grads = tape.backward(l)?;
    let g = vars
        .iter()
        .zip(model.params().iter())
        .map(|(&v, (_, p))| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape().to_vec())))
        .collect();
    Ok((value, g))
}

/// Owns the model and optimizer state across epochs.
pub struct Trainer {
    model: Model,
    config: TrainConfig,
    optimizer: Adam,
    train: Vec<Example>,
    total_steps: usize,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig, train: Vec<Example>) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::Config("no training examples".into()));
        }
        let optimizer = Adam::new(model.params(), config.beta1, config.beta2, config.eps);
        let total_steps = config.epochs * train.len().div_ceil(config.batch_size);
        Ok(Trainer {
            model,
            config,
            optimizer,
            train,
            total_steps,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn steps_taken(&self) -> usize {
        self.optimizer.steps() as usize
    }

    /// One pass over shuffled training examples; returns the mean loss and
    /// the learning rate of the last update.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<(f64, f64)> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.config.seed, epoch as u64, 0));
        order.shuffle(&mut rng);
        let chunk = rayon::current_num_threads().max(1);
        let mut total_loss = 0.0;
        let mut last_lr = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let negatives: Vec<Vec<usize>> = batch
                .iter()
                .map(|&i| match self.config.loss {
                    LossKind::Bpr => sample_negatives(
                        &mut rng,
                        self.model.num_items(),
                        self.train[i].target,
                        self.config.bpr_negatives,
                    ),
                    LossKind::CrossEntropy => Ok(Vec::new()),
                })
                .collect::<Result<_>>()?;
            let mut sum: Option<Vec<Tensor>> = None;
            let mut batch_loss = 0.0;
            let dropout = self.model.config().dropout > 0.0 || self.model.config().attention_dropout > 0.0;
            for (part, negs) in batch.chunks(chunk).zip(negatives.chunks(chunk)) {
                let results: Vec<(f64, Vec<Tensor>)> = part
                    .par_iter()
                    .zip(negs.par_iter())
                    .map(|(&i, negs)| {
                        let seed = dropout.then(|| stream_seed(self.config.seed, epoch as u64, i as u64 + 1));
                        example_gradients(&self.model, &self.train[i], self.config.loss, negs, seed)
                    })
                    .collect::<Result<_>>()?;
                for (loss, grads) in results {
                    batch_loss += loss;
                    match &mut sum {
                        None => sum = Some(grads),
                        Some(acc) => {
                            for (a, g) in acc.iter_mut().zip(grads) {
                                for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                                    *x += y;
                                }
                            }
                        }
                    }
                }
            }
            let mut grads = sum.expect("batches are non-empty");
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.data_mut().iter_mut().for_each(|x| *x *= scale);
            }
            let step = self.optimizer.steps() as usize + 1;
            let lr = lr_at(step.min(self.total_steps), self.total_steps, &self.config);
            self.optimizer
                .step(self.model.params_mut(), &grads, lr, self.config.weight_decay);
            total_loss += batch_loss;
            last_lr = lr;
        }
        Ok((total_loss / self.train.len() as f64, last_lr))
    }

    /// Ranks of each example's target under the current parameters.
    pub fn ranks(&self, examples: &[Example]) -> Result<Vec<usize>> {
        examples
            .par_iter()
            .map(|e| Ok(rank_in_scores(&self.model.score(&e.input)?, e.target)))
            .collect()
    }

    /// Runs all epochs, keeping the parameters with the best validation
    /// MRR@10 (the last epoch's when there is no validation data).
    pub fn fit(mut self, valid: &[Example]) -> Result<TrainOutcome> {
        let mut log = Vec::new();
        let mut best: Option<(f64, usize, Model)> = None;
        let mut stale = 0;
        for epoch in 1..=self.config.epochs {
            let (train_loss, lr) = self.run_epoch(epoch)?;
            let valid_mrr10 = if valid.is_empty() {
                0.0
            } else {
                let ranks: Vec<Option<usize>> = self.ranks(valid)?.into_iter().map(Some).collect();
                metrics_at_k(&ranks, 10)?.mrr
            };
            log.push(EpochLog {
                epoch,
                train_loss,
                valid_mrr10,
                lr,
            });
            let improved = match &best {
                None => true,
                Some((score, _, _)) => valid.is_empty() || valid_mrr10 > *score,
            };
            if improved {
                best = Some((valid_mrr10, epoch, self.model.clone()));
                stale = 0;
            } else {
                stale += 1;
                if self.config.patience.is_some_and(|p| stale >= p) {
                    break;
                }
            }
        }
        let (_, best_epoch, model) = match best {
            Some(b) => b,
            None => (0.0, 0, self.model),
        };
        Ok(TrainOutcome {
            model,
            log,
            best_epoch,
        })
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
}

/// Trains `model` on `train`, selecting by validation MRR@10.
pub fn train(model: Model, train: Vec<Example>, valid: &[Example], config: &TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(model, config.clone(), train)?.fit(valid)
}
