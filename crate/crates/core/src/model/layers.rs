//! Building blocks shared by the full and plain pipelines. Each takes its
//! parameters as tape variables so that callers can bind them however they
//! like (model weights, hand-set test values, finite-difference probes).

use crate::autodiff::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Edge classes for the relation vectors of the graph attention.
pub const REL_SELF: usize = 0;
pub const REL_FORWARD: usize = 1;
pub const REL_BACKWARD: usize = 2;
pub const REL_UNDIRECTED: usize = 3;
pub const NUM_RELATIONS: usize = 4;

/// `d x heads` indicator: column `h` selects the `h`-th block of `d / heads`
/// coordinates.
fn head_blocks(d: usize, heads: usize) -> Tensor {
    let dh = d / heads;
    let mut t = Tensor::zeros(vec![d, heads]);
    for c in 0..d {
        t.data_mut()[c * heads + c / dh] = 1.0;
    }
    t
}

fn transpose(t: &Tensor) -> Tensor {
    let (m, n) = (t.rows(), t.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = t.get(i, j);
        }
    }
    Tensor::matrix(n, m, out).expect("transposed shape")
}

/// Output of one graph-attention pass.
#[derive(Debug, Clone, Copy)]
pub struct GatOutput {
    /// `n x d` node representations.
    pub reps: Var,
    /// `(heads * n) x max_degree` attention weights; row `h * n + i` holds
    /// node `i`'s distribution over its neighbor slots for head `h`, padded
    /// slots exactly 0.
    pub alpha: Option<Var>,
}

/// Relational multi-head graph attention.
///
/// `neighbors[i]` lists `(node, relation)` pairs; it should contain `i`
/// itself. For each head the score of neighbor `j` is
/// `LeakyReLU(r_rel · (e_j ∘ e_i))` over that head's coordinates; the
/// softmax-normalized scores weight the neighbor embeddings `e_j`.
pub fn gat_layer(
    tape: &mut Tape,
    embeds: Var,
    relations: Var,
    neighbors: &[Vec<(usize, usize)>],
    heads: usize,
    slope: f64,
) -> Result<GatOutput> {
    let n = neighbors.len();
    let d = tape.value(embeds).cols();
    if tape.value(embeds).rows() != n {
        return Err(Error::shape(
            "gat_layer",
            format!("{} embeddings for {n} nodes", tape.value(embeds).rows()),
        ));
    }
    if n == 0 {
        let reps = tape.constant(Tensor::zeros(vec![0, d]));
        return Ok(GatOutput { reps, alpha: None });
    }
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::shape("gat_layer", format!("{heads} heads for width {d}")));
    }
    let max_deg = neighbors.iter().map(Vec::len).max().unwrap_or(0);
    if let Some(i) = neighbors.iter().position(Vec::is_empty) {
        return Err(Error::shape("gat_layer", format!("node {i} has no neighbors")));
    }

    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut rel = Vec::new();
    let mut slot = Vec::new();
    for (i, hood) in neighbors.iter().enumerate() {
        for (k, &(j, r)) in hood.iter().enumerate() {
            if j >= n {
                return Err(Error::shape("gat_layer", format!("neighbor {j} of {n} nodes")));
            }
            src.push(i);
            dst.push(j);
            rel.push(r);
            slot.push(k);
        }
    }
    let pairs = src.len();

    let ei = tape.rows(embeds, &src)?;
    let ej = tape.rows(embeds, &dst)?;
    let r = tape.rows(relations, &rel)?;
    let prod = tape.mul(ei, ej)?;
    let prod = tape.mul(prod, r)?;
    let blocks = head_blocks(d, heads);
    let spread = tape.constant(transpose(&blocks));
    let blocks = tape.constant(blocks);
    let scores = tape.matmul(prod, blocks)?;
    let scores = tape.leaky_relu(scores, slope)?;

    let mut gather = vec![0; heads * n * max_deg];
    let mut mask = vec![false; heads * n * max_deg];
    let mut back = vec![0; pairs * heads];
    for p in 0..pairs {
        for h in 0..heads {
            let at = (h * n + src[p]) * max_deg + slot[p];
            gather[at] = p * heads + h;
            mask[at] = true;
            back[p * heads + h] = at;
        }
    }
    let logits = tape.take(scores, gather, vec![heads * n, max_deg])?;
    let alpha = tape.masked_softmax(logits, mask)?;
    let per_pair = tape.take(alpha, back, vec![pairs, heads])?;
    let per_pair = tape.matmul(per_pair, spread)?;
    let weighted = tape.mul(per_pair, ej)?;
    let mut scatter = Tensor::zeros(vec![n, pairs]);
    for (p, &i) in src.iter().enumerate() {
        scatter.data_mut()[i * pairs + p] = 1.0;
    }
    let scatter = tape.constant(scatter);
    let reps = tape.matmul(scatter, weighted)?;
    Ok(GatOutput {
        reps,
        alpha: Some(alpha),
    })
}

/// `(1/M) Σ_m views[m] + items`; with no views the item rows pass through
/// untouched.
pub fn fuse_views(tape: &mut Tape, views: &[Var], items: Var) -> Result<Var> {
    let Some((&first, rest)) = views.split_first() else {
        return Ok(items);
    };
    let mut acc = first;
    for &v in rest {
        acc = tape.add(acc, v)?;
    }
    let mean = tape.scale(acc, 1.0 / views.len() as f64)?;
    tape.add(mean, items)
}

/// Projections of one attention module. Biases are optional.
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub bq: Option<Var>,
    pub bk: Option<Var>,
    pub bv: Option<Var>,
    pub bo: Option<Var>,
}

fn affine(tape: &mut Tape, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    match b {
        Some(b) => tape.add(y, b),
        None => Ok(y),
    }
}

/// Result of a multi-head attention call.
#[derive(Debug, Clone)]
pub struct Attended {
    pub out: Var,
    /// Per-head `queries x keys` probabilities (before dropout).
    pub probs: Vec<Var>,
}

/// Per-head additive logits and visibility for an attention call.
pub struct AttentionLayout {
    /// Flat indices into the bias table, `heads x queries x keys`; `None`
    /// means no bias.
    pub bias_index: Option<Vec<usize>>,
    /// `queries x keys`; `None` means every key is visible.
    pub mask: Option<Vec<bool>>,
}

/// Scaled dot-product attention of `queries` over `keys`, split into
/// `heads` column blocks.
pub fn multi_head_attention(
    tape: &mut Tape,
    queries: Var,
    keys: Var,
    w: &AttentionWeights,
    heads: usize,
    layout: &AttentionLayout,
    bias_table: Option<Var>,
    dropout: f64,
) -> Result<Attended> {
    let d = tape.value(queries).cols();
    let (tq, tk) = (tape.value(queries).rows(), tape.value(keys).rows());
    let dh = d / heads;
    let q = affine(tape, queries, w.wq, w.bq)?;
    let k = affine(tape, keys, w.wk, w.bk)?;
    let v = affine(tape, keys, w.wv, w.bv)?;
    let mut contexts = Vec::with_capacity(heads);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.columns(q, h * dh, dh)?;
        let kh = tape.columns(k, h * dh, dh)?;
        let vh = tape.columns(v, h * dh, dh)?;
        let kt = tape.transpose(kh)?;
        let logits = tape.matmul(qh, kt)?;
        let mut logits = tape.scale(logits, 1.0 / (dh as f64).sqrt())?;
        if let (Some(index), Some(table)) = (&layout.bias_index, bias_table) {
            let per_head = index[h * tq * tk..(h + 1) * tq * tk].to_vec();
            let bias = tape.take(table, per_head, vec![tq, tk])?;
            logits = tape.add(logits, bias)?;
        }
        let p = match &layout.mask {
            Some(mask) => tape.masked_softmax(logits, mask.clone())?,
            None => tape.softmax(logits)?,
        };
        probs.push(p);
        let p = tape.dropout(p, dropout)?;
        contexts.push(tape.matmul(p, vh)?);
    }
    let ctx = tape.concat(&contexts, 1)?;
    let out = affine(tape, ctx, w.wo, w.bo)?;
    Ok(Attended { out, probs })
}

/// Weights of the post-norm transformer block.
#[derive(Debug, Clone, Copy)]
pub struct BlockWeights {
    pub attention: AttentionWeights,
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub ff1_w: Var,
    pub ff1_b: Var,
    pub ff2_w: Var,
    pub ff2_b: Var,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
}

#[derive(Debug, Clone)]
pub struct BlockOutput {
    pub out: Var,
    pub attention: Attended,
}

/// One bidirectional transformer block:
/// `x1 = LN(x + MHA(x))`, `out = LN(x1 + W2 gelu(W1 x1))`.
pub fn transformer_block(
    tape: &mut Tape,
    x: Var,
    w: &BlockWeights,
    heads: usize,
    eps: f64,
    dropout: f64,
    attention_dropout: f64,
) -> Result<BlockOutput> {
    let layout = AttentionLayout {
        bias_index: None,
        mask: None,
    };
    let attention = multi_head_attention(tape, x, x, &w.attention, heads, &layout, None, attention_dropout)?;
    let a = tape.dropout(attention.out, dropout)?;
    let x1 = tape.add(x, a)?;
    let x1 = tape.layer_norm(x1, eps)?;
    let x1 = tape.mul(x1, w.ln1_gain)?;
    let x1 = tape.add(x1, w.ln1_bias)?;
    let f = affine(tape, x1, w.ff1_w, Some(w.ff1_b))?;
    let f = tape.gelu(f)?;
    let f = affine(tape, f, w.ff2_w, Some(w.ff2_b))?;
    let f = tape.dropout(f, dropout)?;
    let x2 = tape.add(x1, f)?;
    let x2 = tape.layer_norm(x2, eps)?;
    let x2 = tape.mul(x2, w.ln2_gain)?;
    let out = tape.add(x2, w.ln2_bias)?;
    Ok(BlockOutput { out, attention })
}

#[derive(Debug, Clone, Copy)]
pub struct HeadWeights {
    /// Reversed positional table, row `k` is `t_k`.
    pub positions: Var,
    pub wz: Var,
    pub bz: Var,
    pub wg: Var,
    pub bg: Var,
    pub rg: Var,
    pub items: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    /// `L x 1` soft-attention weights of the item rows.
    pub gamma: Var,
    /// `1 x d` session vector.
    pub session: Var,
    /// `1 x N` item scores.
    pub scores: Var,
}

/// Similarity head over `H` with rows `[CLS, item 1..L, MASK]`.
///
/// `z_i = tanh([h_i ‖ t_{L-i+1}] W_z + b_z)`, the MASK row giving `z_mask`;
/// `γ_i = r_γᵀ σ(z_i W_γ + z_mask + b_γ)` for the item rows;
/// `u = Σ γ_i h_i`; scores are `u · e_v` for every item.
pub fn predict_scores(tape: &mut Tape, hidden: Var, w: &HeadWeights) -> Result<Prediction> {
    let rows = tape.value(hidden).rows();
    if rows < 3 {
        return Err(Error::shape("predict_scores", format!("{rows} rows, need L + 2 with L >= 1")));
    }
    let len = rows - 2;
    let available = tape.value(w.positions).rows();
    if len + 2 > available {
        return Err(Error::shape(
            "predict_scores",
            format!("session of {len} needs {} positions, table has {available}", len + 2),
        ));
    }
    let reversed: Vec<usize> = (0..rows).map(|i| len + 1 - i).collect();
    let t = tape.rows(w.positions, &reversed)?;
    let cat = tape.concat(&[hidden, t], 1)?;
    let z = affine(tape, cat, w.wz, Some(w.bz))?;
    let z = tape.tanh(z)?;
    let z_mask = tape.rows(z, &[len + 1])?;
    let item_rows: Vec<usize> = (1..=len).collect();
    let zi = tape.rows(z, &item_rows)?;
    let g = tape.matmul(zi, w.wg)?;
    let g = tape.add(g, z_mask)?;
    let g = tape.add(g, w.bg)?;
    let g = tape.sigmoid(g)?;
    let gamma = tape.matmul(g, w.rg)?;
    let h = tape.rows(hidden, &item_rows)?;
    let gt = tape.transpose(gamma)?;
    let session = tape.matmul(gt, h)?;
    let et = tape.transpose(w.items)?;
    let scores = tape.matmul(session, et)?;
    Ok(Prediction {
        gamma,
        session,
        scores,
    })
}
