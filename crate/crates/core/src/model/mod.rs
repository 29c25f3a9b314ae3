//! The recommendation network.
//!
//! Per attribute type, relational graph attention encodes the session's
//! attribute layer and each retrieved pattern. Pattern vectors act as
//! memory for a causal attention over the sequence; a gate mixes the
//! per-type results, a transformer block aggregates the session and a
//! similarity head scores every item.

mod config;
mod input;
pub mod layers;

pub use config::{relative_bucket, ModelConfig};
pub use input::{layer_neighborhood, pattern_neighborhood, LayerInput, MemoryPattern, SessionInput};

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{read_checkpoint, write_checkpoint, ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};
use layers::{
    fuse_views, gat_layer, multi_head_attention, predict_scores, transformer_block, Attended, AttentionLayout,
    AttentionWeights, BlockOutput, BlockWeights, GatOutput, HeadWeights, Prediction, NUM_RELATIONS,
};

#[derive(Debug, Clone)]
struct AttrLayout {
    emb: usize,
    rel: usize,
    gate_w: usize,
    gate_b: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    items: usize,
    cls: usize,
    mask: usize,
    mem_bias: usize,
    block: [usize; 16],
    positions: usize,
    wz: usize,
    bz: usize,
    wg: usize,
    bg: usize,
    rg: usize,
    attrs: Vec<AttrLayout>,
}

const BLOCK_NAMES: [&str; 16] = [
    "block.wq", "block.bq", "block.wk", "block.bk", "block.wv", "block.bv", "block.wo", "block.bo",
    "block.ln1.gain", "block.ln1.bias", "block.ff1.w", "block.ff1.b", "block.ff2.w", "block.ff2.b",
    "block.ln2.gain", "block.ln2.bias",
];

impl Layout {
    fn resolve(params: &ParamStore, types: &[String]) -> Result<Self> {
        let at = |name: &str| {
            params
                .position(name)
                .ok_or_else(|| Error::Input(format!("parameter `{name}` missing")))
        };
        let mut block = [0; 16];
        for (slot, name) in block.iter_mut().zip(BLOCK_NAMES) {
            *slot = at(name)?;
        }
        let attrs = types
            .iter()
            .map(|t| {
                Ok(AttrLayout {
                    emb: at(&format!("attr.{t}.emb"))?,
                    rel: at(&format!("attr.{t}.rel"))?,
                    gate_w: at(&format!("attr.{t}.gate.w"))?,
                    gate_b: at(&format!("attr.{t}.gate.b"))?,
                    wq: at(&format!("attr.{t}.mem.wq"))?,
                    wk: at(&format!("attr.{t}.mem.wk"))?,
                    wv: at(&format!("attr.{t}.mem.wv"))?,
                    wo: at(&format!("attr.{t}.mem.wo"))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Layout {
            items: at("item.emb")?,
            cls: at("cls")?,
            mask: at("mask")?,
            mem_bias: at("mem.bias")?,
            block,
            positions: at("head.positions")?,
            wz: at("head.wz")?,
            bz: at("head.bz")?,
            wg: at("head.wg")?,
            bg: at("head.bg")?,
            rg: at("head.rg")?,
            attrs,
        })
    }
}

/// Checkpoint companion describing the architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub d: usize,
    pub heads: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub attribute_types: Vec<String>,
    pub max_len: usize,
}

/// Values recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Per attribute type: graph attention over the session layer.
    pub layers: Vec<GatOutput>,
    /// Per attribute type, per memory pattern: graph attention over the pattern.
    pub patterns: Vec<Vec<GatOutput>>,
    /// Per attribute type: stacked pattern vectors (`None` without memory).
    pub memory: Vec<Option<Var>>,
    /// `(L + 2) x d` rows `[e_CLS, h̄_1 .. h̄_L, e_MASK]` after view fusion.
    pub fused: Var,
    /// Per attribute type: memory-attention output.
    pub attended: Vec<Attended>,
    /// `(L + 2) x M` gate weights.
    pub beta: Option<Var>,
    pub gated: Var,
    pub block: BlockOutput,
    /// `(L + 2) x d` final sequence representation.
    pub hidden: Var,
    pub prediction: Prediction,
}

impl ForwardTrace {
    pub fn scores(&self) -> Var {
        self.prediction.scores
    }
}

/// Model parameters plus the configuration they were built for.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    attribute_types: Vec<String>,
    params: ParamStore,
    layout: Layout,
}

fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect()).expect("shape")
}

impl Model {
    /// Fresh parameters for `num_items` items and, per attribute type, a
    /// vocabulary of `vocab_sizes[m]` values (one extra row is reserved for
    /// unknown values).
    pub fn new(
        config: ModelConfig,
        attribute_types: Vec<String>,
        num_items: usize,
        vocab_sizes: &[usize],
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if vocab_sizes.len() != attribute_types.len() {
            return Err(Error::Config(format!(
                "{} vocabularies for {} attribute types",
                vocab_sizes.len(),
                attribute_types.len()
            )));
        }
        if num_items == 0 {
            return Err(Error::Config("model needs at least one item".into()));
        }
        let d = config.d;
        let s = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        p.insert("item.emb", uniform(&mut rng, vec![num_items, d], s))?;
        p.insert("cls", uniform(&mut rng, vec![1, d], s))?;
        p.insert("mask", uniform(&mut rng, vec![1, d], s))?;
        for (t, &v) in attribute_types.iter().zip(vocab_sizes) {
            p.insert(format!("attr.{t}.emb"), uniform(&mut rng, vec![v + 1, d], s))?;
            p.insert(format!("attr.{t}.rel"), uniform(&mut rng, vec![NUM_RELATIONS, d], s))?;
            p.insert(format!("attr.{t}.gate.w"), uniform(&mut rng, vec![d, d], s))?;
            p.insert(format!("attr.{t}.gate.b"), Tensor::zeros(vec![1, d]))?;
            for w in ["wq", "wk", "wv", "wo"] {
                p.insert(format!("attr.{t}.mem.{w}"), uniform(&mut rng, vec![d, d], s))?;
            }
        }
        p.insert("mem.bias", Tensor::zeros(vec![config.heads, config.num_buckets + 1]))?;
        let f = d * config.ffn_mult;
        for name in BLOCK_NAMES {
            let t = match name.rsplit('.').next() {
                Some("gain") => Tensor::filled(vec![1, d], 1.0),
                Some("bias") | Some("bq") | Some("bk") | Some("bv") | Some("bo") => {
                    Tensor::zeros(vec![1, d])
                }
                _ if name == "block.ff1.w" => uniform(&mut rng, vec![d, f], s),
                _ if name == "block.ff1.b" => Tensor::zeros(vec![1, f]),
                _ if name == "block.ff2.w" => uniform(&mut rng, vec![f, d], 1.0 / (f as f64).sqrt()),
                _ if name == "block.ff2.b" => Tensor::zeros(vec![1, d]),
                _ => uniform(&mut rng, vec![d, d], s),
            };
            p.insert(name, t)?;
        }
        p.insert("head.positions", uniform(&mut rng, vec![config.max_len + 2, d], s))?;
        p.insert("head.wz", uniform(&mut rng, vec![2 * d, d], 1.0 / ((2 * d) as f64).sqrt()))?;
        p.insert("head.bz", Tensor::zeros(vec![1, d]))?;
        p.insert("head.wg", uniform(&mut rng, vec![d, d], s))?;
        p.insert("head.bg", Tensor::zeros(vec![1, d]))?;
        p.insert("head.rg", uniform(&mut rng, vec![d, 1], s))?;
        Model::from_params(config, attribute_types, p)
    }

    /// Wraps existing parameters, checking every shape against `config`.
    pub fn from_params(
        config: ModelConfig,
        attribute_types: Vec<String>,
        params: ParamStore,
    ) -> Result<Self> {
        config.validate()?;
        let layout = Layout::resolve(&params, &attribute_types)?;
        let d = config.d;
        let f = d * config.ffn_mult;
        let n_items = params.tensor(layout.items).rows();
        let mut expect: Vec<(usize, Vec<usize>)> = vec![
            (layout.items, vec![n_items, d]),
            (layout.cls, vec![1, d]),
            (layout.mask, vec![1, d]),
            (layout.mem_bias, vec![config.heads, config.num_buckets + 1]),
            (layout.positions, vec![config.max_len + 2, d]),
            (layout.wz, vec![2 * d, d]),
            (layout.bz, vec![1, d]),
            (layout.wg, vec![d, d]),
            (layout.bg, vec![1, d]),
            (layout.rg, vec![d, 1]),
        ];
        for (i, name) in BLOCK_NAMES.iter().enumerate() {
            let shape = match *name {
                "block.ff1.w" => vec![d, f],
                "block.ff1.b" => vec![1, f],
                "block.ff2.w" => vec![f, d],
                n if n.starts_with("block.w") => vec![d, d],
                _ => vec![1, d],
            };
            expect.push((layout.block[i], shape));
        }
        for a in &layout.attrs {
            let v = params.tensor(a.emb).rows();
            expect.push((a.emb, vec![v.max(1), d]));
            expect.push((a.rel, vec![NUM_RELATIONS, d]));
            expect.push((a.gate_w, vec![d, d]));
            expect.push((a.gate_b, vec![1, d]));
            for w in [a.wq, a.wk, a.wv, a.wo] {
                expect.push((w, vec![d, d]));
            }
        }
        for (i, shape) in expect {
            if params.tensor(i).shape() != shape.as_slice() {
                return Err(Error::Input(format!(
                    "parameter `{}` has shape {:?}, expected {shape:?}",
                    params.name(i),
                    params.tensor(i).shape()
                )));
            }
        }
        Ok(Model {
            config,
            attribute_types,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn attribute_types(&self) -> &[String] {
        &self.attribute_types
    }

    pub fn num_attributes(&self) -> usize {
        self.attribute_types.len()
    }

    pub fn num_items(&self) -> usize {
        self.params.tensor(self.layout.items).rows()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            d: self.config.d,
            heads: self.config.heads,
            m: self.attribute_types.len(),
            attribute_types: self.attribute_types.clone(),
            max_len: self.config.max_len,
        }
    }

    /// Writes `<stem>.ckpt` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        write_checkpoint(&dir.join(format!("{stem}.ckpt")), &self.params)?;
        let mut manifest = serde_json::to_string(&self.manifest())?;
        manifest.push('\n');
        fs::write(dir.join(format!("{stem}.json")), manifest)?;
        Ok(())
    }

    /// Loads a saved model. Fields of `config` that the manifest records
    /// must agree with it.
    pub fn load(dir: &Path, stem: &str, config: ModelConfig) -> Result<Self> {
        let manifest_path = dir.join(format!("{stem}.json"));
        let text = fs::read_to_string(&manifest_path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingDependency {
                path: manifest_path.clone(),
                hint: "run `train` first".into(),
            },
            _ => Error::Io(e),
        })?;
        let manifest: Manifest = serde_json::from_str(text.trim())?;
        if manifest.m != manifest.attribute_types.len() {
            return Err(Error::Input("manifest M disagrees with its attribute types".into()));
        }
        if (manifest.d, manifest.heads, manifest.max_len) != (config.d, config.heads, config.max_len) {
            return Err(Error::Config(format!(
                "checkpoint has d={}, heads={}, max_len={}; configuration asks for d={}, heads={}, max_len={}",
                manifest.d, manifest.heads, manifest.max_len, config.d, config.heads, config.max_len
            )));
        }
        let params = read_checkpoint(&dir.join(format!("{stem}.ckpt")))?;
        Model::from_params(config, manifest.attribute_types, params)
    }

    /// Puts every parameter on `tape` as a trainable leaf, in store order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params
            .iter()
            .map(|(_, t)| tape.variable(t.clone()))
            .collect()
    }

    fn attention_weights(&self, vars: &[Var], m: usize) -> AttentionWeights {
        let a = &self.layout.attrs[m];
        AttentionWeights {
            wq: vars[a.wq],
            wk: vars[a.wk],
            wv: vars[a.wv],
            wo: vars[a.wo],
            bq: None,
            bk: None,
            bv: None,
            bo: None,
        }
    }

    fn block_weights(&self, vars: &[Var]) -> BlockWeights {
        let b = |i: usize| vars[self.layout.block[i]];
        BlockWeights {
            attention: AttentionWeights {
                wq: b(0),
                bq: Some(b(1)),
                wk: b(2),
                bk: Some(b(3)),
                wv: b(4),
                bv: Some(b(5)),
                wo: b(6),
                bo: Some(b(7)),
            },
            ln1_gain: b(8),
            ln1_bias: b(9),
            ff1_w: b(10),
            ff1_b: b(11),
            ff2_w: b(12),
            ff2_b: b(13),
            ln2_gain: b(14),
            ln2_bias: b(15),
        }
    }

    fn head_weights(&self, vars: &[Var]) -> HeadWeights {
        let l = &self.layout;
        HeadWeights {
            positions: vars[l.positions],
            wz: vars[l.wz],
            bz: vars[l.bz],
            wg: vars[l.wg],
            bg: vars[l.bg],
            rg: vars[l.rg],
            items: vars[l.items],
        }
    }

    fn check_bound(&self, vars: &[Var]) -> Result<()> {
        if vars.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "{} bound variables for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        Ok(())
    }

    fn check_items(&self, items: &[usize]) -> Result<()> {
        if items.is_empty() {
            return Err(Error::Input("empty session".into()));
        }
        if items.len() > self.config.max_len {
            return Err(Error::Input(format!(
                "session of {} exceeds max_len {}",
                items.len(),
                self.config.max_len
            )));
        }
        if let Some(&bad) = items.iter().find(|&&v| v >= self.num_items()) {
            return Err(Error::UnknownItem(format!("#{bad}")));
        }
        Ok(())
    }

    /// Graph attention over a pattern followed by mean pooling.
    pub fn encode_pattern(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        m: usize,
        pattern: &MemoryPattern,
    ) -> Result<(GatOutput, Var)> {
        let a = &self.layout.attrs[m];
        let embeds = tape.rows(vars[a.emb], &pattern.rows)?;
        let hood = pattern_neighborhood(pattern);
        let out = gat_layer(tape, embeds, vars[a.rel], &hood, self.config.heads, self.config.leaky_slope)?;
        let pooled = tape.mean(out.reps, 0)?;
        Ok((out, pooled))
    }

    /// Bucket indices into the shared bias table for `slots` memory rows and
    /// `seq` sequence rows, and the causal visibility mask.
    pub fn memory_layout(&self, slots: usize, seq: usize) -> AttentionLayout {
        let nb = self.config.num_buckets;
        let keys = slots + seq;
        let mut index = Vec::with_capacity(self.config.heads * seq * keys);
        let mut mask = Vec::with_capacity(seq * keys);
        for h in 0..self.config.heads {
            for r in 0..seq {
                for c in 0..keys {
                    let bucket = if c < slots {
                        nb
                    } else {
                        let s = c - slots;
                        if s <= r {
                            relative_bucket(r - s, nb, self.config.max_distance)
                        } else {
                            0
                        }
                    };
                    index.push(h * (nb + 1) + bucket);
                    if h == 0 {
                        mask.push(c < slots || c - slots <= r);
                    }
                }
            }
        }
        AttentionLayout {
            bias_index: Some(index),
            mask: Some(mask),
        }
    }

    /// Causal attention of the sequence rows over `[memory; sequence]` for
    /// attribute type `m`. Row `r` sees every memory slot and sequence rows
    /// `0..=r`.
    pub fn memory_attention(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        m: usize,
        memory: Option<Var>,
        sequence: Var,
    ) -> Result<Attended> {
        self.check_bound(vars)?;
        let slots = memory.map_or(0, |v| tape.value(v).rows());
        let seq = tape.value(sequence).rows();
        let keys = match memory {
            Some(mem) => tape.concat(&[mem, sequence], 0)?,
            None => sequence,
        };
        let w = self.attention_weights(vars, m);
        let layout = self.memory_layout(slots, seq);
        multi_head_attention(
            tape,
            sequence,
            keys,
            &w,
            self.config.heads,
            &layout,
            Some(vars[self.layout.mem_bias]),
            self.config.attention_dropout,
        )
    }

    /// `β = softmax_m(mean(X_m W_β + b_β))` per row, then
    /// `Σ_m β_m ĥ_m + fused`.
    pub fn gate_fuse(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        gate_inputs: &[Var],
        attended: &[Var],
        fused: Var,
    ) -> Result<(Option<Var>, Var)> {
        if gate_inputs.is_empty() {
            return Ok((None, fused));
        }
        let mut logits = Vec::with_capacity(gate_inputs.len());
        for (m, &x) in gate_inputs.iter().enumerate() {
            let a = &self.layout.attrs[m];
            let g = tape.matmul(x, vars[a.gate_w])?;
            let g = tape.add(g, vars[a.gate_b])?;
            logits.push(tape.mean(g, 1)?);
        }
        let logits = tape.concat(&logits, 1)?;
        let beta = tape.softmax(logits)?;
        let mut out = fused;
        for (m, &h) in attended.iter().enumerate() {
            let b = tape.columns(beta, m, 1)?;
            let term = tape.mul(h, b)?;
            out = tape.add(out, term)?;
        }
        Ok((Some(beta), out))
    }

    fn finish(&self, tape: &mut Tape, vars: &[Var], gated: Var) -> Result<(BlockOutput, Prediction)> {
        let bw = self.block_weights(vars);
        let block = transformer_block(
            tape,
            gated,
            &bw,
            self.config.heads,
            self.config.layer_norm_eps,
            self.config.dropout,
            self.config.attention_dropout,
        )?;
        let prediction = predict_scores(tape, block.out, &self.head_weights(vars))?;
        Ok((block, prediction))
    }

    /// Full forward pass. `vars` come from [`Model::bind`] (or any
    /// same-shaped stand-ins).
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], input: &SessionInput) -> Result<ForwardTrace> {
        self.check_bound(vars)?;
        self.check_items(&input.items)?;
        let big_m = self.num_attributes();
        if input.layers.len() != big_m || input.memory.len() != big_m {
            return Err(Error::Contract(format!(
                "input prepared for {} attribute types, model has {big_m}",
                input.layers.len()
            )));
        }
        let l = &self.layout;
        let item_rows = tape.rows(vars[l.items], &input.items)?;

        let mut layers = Vec::with_capacity(big_m);
        let mut per_position = Vec::with_capacity(big_m);
        for (m, layer) in input.layers.iter().enumerate() {
            let a = &l.attrs[m];
            let embeds = tape.rows(vars[a.emb], &layer.rows)?;
            let out = gat_layer(
                tape,
                embeds,
                vars[a.rel],
                &layer.neighbors,
                self.config.heads,
                self.config.leaky_slope,
            )?;
            per_position.push(tape.rows(out.reps, &layer.position_nodes)?);
            layers.push(out);
        }

        let mut patterns = Vec::with_capacity(big_m);
        let mut memory = Vec::with_capacity(big_m);
        for (m, pats) in input.memory.iter().enumerate() {
            let mut outs = Vec::new();
            let mut pooled = Vec::new();
            for p in pats.iter().take(self.config.max_patterns) {
                let (o, v) = self.encode_pattern(tape, vars, m, p)?;
                outs.push(o);
                pooled.push(v);
            }
            memory.push(if pooled.is_empty() {
                None
            } else {
                Some(tape.concat(&pooled, 0)?)
            });
            patterns.push(outs);
        }

        let views = fuse_views(tape, &per_position, item_rows)?;
        let (cls, mask) = (vars[l.cls], vars[l.mask]);
        let fused = tape.concat(&[cls, views, mask], 0)?;
        let fused = tape.dropout(fused, self.config.dropout)?;

        let mut gate_inputs = Vec::with_capacity(big_m);
        let mut attended = Vec::with_capacity(big_m);
        for m in 0..big_m {
            let x = tape.concat(&[cls, per_position[m], mask], 0)?;
            let x = tape.dropout(x, self.config.dropout)?;
            attended.push(self.memory_attention(tape, vars, m, memory[m], x)?);
            gate_inputs.push(x);
        }
        let outs: Vec<Var> = attended.iter().map(|a| a.out).collect();
        let (beta, gated) = self.gate_fuse(tape, vars, &gate_inputs, &outs, fused)?;
        let (block, prediction) = self.finish(tape, vars, gated)?;
        Ok(ForwardTrace {
            layers,
            patterns,
            memory,
            fused,
            attended,
            beta,
            gated,
            hidden: block.out,
            block,
            prediction,
        })
    }

    /// The pipeline without any attribute machinery: item embeddings framed
    /// by CLS and MASK, the transformer block and the head.
    pub fn forward_plain(&self, tape: &mut Tape, vars: &[Var], items: &[usize]) -> Result<Prediction> {
        self.check_bound(vars)?;
        self.check_items(items)?;
        let l = &self.layout;
        let rows = tape.rows(vars[l.items], items)?;
        let seq = tape.concat(&[vars[l.cls], rows, vars[l.mask]], 0)?;
        let seq = tape.dropout(seq, self.config.dropout)?;
        Ok(self.finish(tape, vars, seq)?.1)
    }

    /// Puts every parameter on `tape` as a constant.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Vec<Var> {
        self.params
            .iter()
            .map(|(_, t)| tape.constant(t.clone()))
            .collect()
    }

    /// Inference scores for one session.
    pub fn score(&self, input: &SessionInput) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.bind_frozen(&mut tape);
        let trace = self.forward(&mut tape, &vars, input)?;
        Ok(tape.value(trace.scores()).data().to_vec())
    }
}

#[cfg(test)]
mod tests;
