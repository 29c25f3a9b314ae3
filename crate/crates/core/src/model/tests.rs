use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::*;
use super::*;
use crate::autodiff::grad_check;

type Mat = Vec<Vec<f64>>;

fn mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

fn mm(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

fn add_row(a: &Mat, b: &[f64]) -> Mat {
    a.iter().map(|r| r.iter().zip(b).map(|(x, y)| x + y).collect()).collect()
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn layer_norm(a: &Mat, gain: &[f64], bias: &[f64]) -> Mat {
    a.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            r.iter()
                .enumerate()
                .map(|(c, x)| (x - mean) / (var + 1e-12).sqrt() * gain[c] + bias[c])
                .collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn close(a: &Mat, b: &Mat, tol: f64) {
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < tol, "{x} vs {y}");
        }
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn small_config(d: usize, heads: usize) -> ModelConfig {
    ModelConfig {
        d,
        heads,
        max_len: 8,
        attention_dropout: 0.0,
        ffn_mult: 2,
        ..ModelConfig::default()
    }
}

/// A model whose parameters (biases and tables included) are all random.
fn random_model(types: &[&str], items: usize, vocab: &[usize], d: usize, heads: usize, seed: u64) -> Model {
    let mut model = Model::new(
        small_config(d, heads),
        types.iter().map(|s| s.to_string()).collect(),
        items,
        vocab,
        seed,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for i in 0..model.params().len() {
        for v in model.params_mut().tensor_mut(i).data_mut() {
            *v = rng.gen_range(-0.8..0.8);
        }
    }
    model
}

fn catalog() -> ItemCatalog {
    let mut c = ItemCatalog::new(vec!["brand".into(), "category".into()]);
    for (item, b, k) in [
        ("iphone", "apple", "phone"),
        ("ipad", "apple", "tablet"),
        ("galaxy", "samsung", "phone"),
        ("macbook", "apple", "notebook"),
        ("tab", "samsung", "tablet"),
        ("pixel", "google", "phone"),
    ] {
        c.insert(item, &[b, k]).unwrap();
    }
    c
}

use crate::miner::{AttributePattern, LabeledGraph};
use crate::retrieval::{PatternStore, RetrievalConfig};
use crate::sessions::ItemCatalog;

fn triangle(t: &str, labels: [&str; 3], support: usize) -> AttributePattern {
    let g = LabeledGraph::new(
        t,
        labels.iter().map(|s| s.to_string()).collect(),
        vec![(0, 1), (1, 2), (0, 2)],
    )
    .unwrap();
    AttributePattern::from_graph(g, support).unwrap()
}

fn stores() -> Vec<PatternStore> {
    vec![
        PatternStore::new(
            "brand",
            vec![triangle("brand", ["apple", "samsung", "google"], 4)],
        )
        .unwrap(),
        PatternStore::new(
            "category",
            vec![triangle("category", ["phone", "tablet", "notebook"], 7)],
        )
        .unwrap(),
    ]
}

#[test]
fn config_requires_divisible_heads() {
    assert!(ModelConfig::default().validate().is_ok());
    assert!(ModelConfig { d: 10, heads: 4, ..ModelConfig::default() }.validate().is_err());
    assert!(ModelConfig { dropout: 1.0, ..ModelConfig::default() }.validate().is_err());
}

#[test]
fn buckets_are_exact_then_logarithmic() {
    for d in 0..16 {
        assert_eq!(relative_bucket(d, 32, 128), d);
    }
    let mut last = 0;
    for d in 0..300 {
        let b = relative_bucket(d, 32, 128);
        assert!(b >= last && b < 32);
        last = b;
    }
    assert_eq!(relative_bucket(127, 32, 128), 31);
    assert_eq!(relative_bucket(1000, 32, 128), 31);
    assert!(relative_bucket(16, 32, 128) == 16);
}

#[test]
fn isolated_node_keeps_its_embedding() {
    let mut t = Tape::new();
    let e = t.constant(Tensor::row(vec![0.3, -1.2, 2.0]));
    let r = t.constant(Tensor::filled(vec![NUM_RELATIONS, 3], 0.5));
    let out = gat_layer(&mut t, e, r, &[vec![(0, REL_SELF)]], 1, 0.01).unwrap();
    assert_eq!(t.value(out.alpha.unwrap()).data(), &[1.0]);
    assert_eq!(t.value(out.reps).data(), &[0.3, -1.2, 2.0]);
}

#[test]
fn two_node_attention_by_hand() {
    let e0 = [1.0, 2.0];
    let e1 = [0.5, -1.0];
    let r_self = [1.0, 1.0];
    let r_fwd = [0.5, 2.0];
    let r_bwd = [-1.0, 0.25];
    let mut t = Tape::new();
    let e = t.constant(Tensor::from_rows(&[e0.to_vec(), e1.to_vec()]).unwrap());
    let r = t.constant(
        Tensor::from_rows(&[r_self.to_vec(), r_fwd.to_vec(), r_bwd.to_vec(), vec![0.0, 0.0]]).unwrap(),
    );
    let hood = vec![vec![(0, REL_SELF), (1, REL_FORWARD)], vec![(1, REL_SELF), (0, REL_BACKWARD)]];
    let out = gat_layer(&mut t, e, r, &hood, 1, 0.01).unwrap();

    // node 0: self score 1*1*1 + 1*2*2 = 5; forward score 0.5*0.5*1 + 2*(-1)*2 = -3.75 -> leaky -0.0375
    let a0 = softmax(&[5.0, -0.0375]);
    // node 1: self score 0.25 + 1 = 1.25; backward score -1*0.5*1 + 0.25*(-1)*2 = -1 -> leaky -0.01
    let a1 = softmax(&[1.25, -0.01]);
    let want = vec![
        vec![a0[0] * e0[0] + a0[1] * e1[0], a0[0] * e0[1] + a0[1] * e1[1]],
        vec![a1[0] * e1[0] + a1[1] * e0[0], a1[0] * e1[1] + a1[1] * e0[1]],
    ];
    close(&mat(t.value(out.reps)), &want, 1e-14);
}

#[test]
fn attention_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let n = rng.gen_range(1..7);
        let mut hood: Vec<Vec<(usize, usize)>> = (0..n).map(|i| vec![(i, REL_SELF)]).collect();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen_bool(0.4) {
                    hood[i].push((j, rng.gen_range(1..4)));
                }
            }
        }
        let mut t = Tape::new();
        let e = t.constant(random_tensor(&mut rng, n, 8));
        let r = t.constant(random_tensor(&mut rng, NUM_RELATIONS, 8));
        let out = gat_layer(&mut t, e, r, &hood, 2, 0.01).unwrap();
        let alpha = t.value(out.alpha.unwrap());
        for row in 0..alpha.rows() {
            let s: f64 = alpha.row_slice(row).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn pattern_of_identical_nodes_encodes_to_that_vector() {
    let model = random_model(&["category"], 3, &[2], 4, 2, 1);
    let mut model = model;
    let emb = model.params().position("attr.category.emb").unwrap();
    let q = [0.1, -0.4, 0.9, 0.2];
    for r in 0..3 {
        model.params_mut().tensor_mut(emb).data_mut()[r * 4..r * 4 + 4].copy_from_slice(&q);
    }
    let pattern = MemoryPattern {
        rows: vec![0, 1, 2],
        edges: vec![(0, 1), (1, 2), (0, 2)],
    };
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let (_, p) = model.encode_pattern(&mut t, &vars, 0, &pattern).unwrap();
    for (a, b) in t.value(p).data().iter().zip(q) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn path_pattern_is_mean_of_node_reps() {
    let model = random_model(&["category"], 3, &[3], 4, 1, 2);
    let pattern = MemoryPattern {
        rows: vec![1, 2, 3],
        edges: vec![(0, 1), (1, 2)],
    };
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let (out, p) = model.encode_pattern(&mut t, &vars, 0, &pattern).unwrap();
    let reps = mat(t.value(out.reps));
    let want: Vec<f64> = (0..4).map(|c| (reps[0][c] + reps[1][c] + reps[2][c]) / 3.0).collect();
    close(&mat(t.value(p)), &vec![want], 1e-15);
}

#[test]
fn unknown_pattern_value_uses_reserved_row() {
    let c = catalog();
    let p = triangle("brand", ["apple", "nokia", "google"], 1);
    let mp = MemoryPattern::from_pattern(&p, c.vocab(0));
    assert_eq!(mp.rows, vec![1, 0, 3]);
}

#[test]
fn fusion_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let e = random_tensor(&mut rng, 3, 4);
    let x = random_tensor(&mut rng, 3, 4);
    let mut t = Tape::new();
    let ev = t.constant(e.clone());
    assert_eq!(fuse_views(&mut t, &[], ev).unwrap(), ev);

    let xv = t.constant(x.clone());
    let neg = t.scale(xv, -1.0).unwrap();
    let f = fuse_views(&mut t, &[xv, neg], ev).unwrap();
    close(&mat(t.value(f)), &mat(&e), 1e-15);

    let y = random_tensor(&mut rng, 3, 4);
    let yv = t.constant(y.clone());
    let f = fuse_views(&mut t, &[xv, yv], ev).unwrap();
    let want: Mat = (0..3)
        .map(|r| (0..4).map(|c| (x.get(r, c) + y.get(r, c)) / 2.0 + e.get(r, c)).collect())
        .collect();
    close(&mat(t.value(f)), &want, 1e-15);
}

/// Single-head memory attention computed with plain loops.
fn memory_reference(model: &Model, x: &Mat, mem: &Mat) -> Mat {
    let p = model.params();
    let w = |n: &str| mat(p.get(n).unwrap());
    let bias = p.get("mem.bias").unwrap().row_slice(0).to_vec();
    let kv: Mat = mem.iter().chain(x.iter()).cloned().collect();
    let q = mm(x, &w("attr.brand.mem.wq"));
    let k = mm(&kv, &w("attr.brand.mem.wk"));
    let v = mm(&kv, &w("attr.brand.mem.wv"));
    let d = x[0].len() as f64;
    let slots = mem.len();
    let ctx: Mat = (0..x.len())
        .map(|r| {
            let mut logits = Vec::new();
            let mut keep = Vec::new();
            for c in 0..kv.len() {
                let dot: f64 = q[r].iter().zip(&k[c]).map(|(a, b)| a * b).sum::<f64>() / d.sqrt();
                if c < slots {
                    logits.push(dot + bias[32]);
                    keep.push(c);
                } else if c - slots <= r {
                    logits.push(dot + bias[relative_bucket(r - (c - slots), 32, 128)]);
                    keep.push(c);
                }
            }
            let a = softmax(&logits);
            (0..x[0].len())
                .map(|j| keep.iter().zip(&a).map(|(&c, w)| w * v[c][j]).sum())
                .collect()
        })
        .collect();
    mm(&ctx, &w("attr.brand.mem.wo"))
}

#[test]
fn memory_attention_matches_loops() {
    let model = random_model(&["brand"], 4, &[3], 4, 1, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_tensor(&mut rng, 4, 4);
    let mem = random_tensor(&mut rng, 1, 4);
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let xv = t.constant(x.clone());
    let mv = t.constant(mem.clone());
    let out = model.memory_attention(&mut t, &vars, 0, Some(mv), xv).unwrap();
    close(&mat(t.value(out.out)), &memory_reference(&model, &mat(&x), &mat(&mem)), 1e-13);
    let first = t.value(out.probs[0]);
    // CLS row sees only the memory slot and itself
    assert!(first.row_slice(0)[2..].iter().all(|&p| p == 0.0));
}

#[test]
fn memory_attention_without_memory() {
    let model = random_model(&["brand"], 4, &[3], 4, 2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let xv = t.constant(random_tensor(&mut rng, 3, 4));
    let out = model.memory_attention(&mut t, &vars, 0, None, xv).unwrap();
    for p in &out.probs {
        let row1 = t.value(*p).row_slice(1);
        assert_eq!(row1[2], 0.0);
        assert!((row1[0] + row1[1] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn memory_order_does_not_matter() {
    let model = random_model(&["brand"], 4, &[3], 4, 2, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_tensor(&mut rng, 4, 4);
    let a = random_tensor(&mut rng, 1, 4);
    let b = random_tensor(&mut rng, 1, 4);
    let run = |first: &Tensor, second: &Tensor| {
        let mut t = Tape::new();
        let vars = model.bind(&mut t);
        let xv = t.constant(x.clone());
        let mem = t.constant(Tensor::from_rows(&[first.data().to_vec(), second.data().to_vec()]).unwrap());
        let out = model.memory_attention(&mut t, &vars, 0, Some(mem), xv).unwrap();
        mat(t.value(out.out))
    };
    close(&run(&a, &b), &run(&b, &a), 1e-13);
}

#[test]
fn gate_cases() {
    let model = random_model(&["brand", "category"], 4, &[3, 3], 4, 1, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let x1 = t.constant(random_tensor(&mut rng, 3, 4));
    let x2 = t.constant(random_tensor(&mut rng, 3, 4));
    let h1 = t.constant(random_tensor(&mut rng, 3, 4));
    let h2 = t.constant(random_tensor(&mut rng, 3, 4));
    let fused = t.constant(random_tensor(&mut rng, 3, 4));

    let (beta, out) = model.gate_fuse(&mut t, &vars, &[x1], &[h1], fused).unwrap();
    assert!(t.value(beta.unwrap()).data().iter().all(|&b| b == 1.0));
    let want: Mat = (0..3)
        .map(|r| (0..4).map(|c| t.value(h1).get(r, c) + t.value(fused).get(r, c)).collect())
        .collect();
    close(&mat(t.value(out)), &want, 1e-15);

    let (beta, _) = model.gate_fuse(&mut t, &vars, &[x1, x2], &[h1, h2], fused).unwrap();
    let beta = mat(t.value(beta.unwrap()));
    let gate = |x: Var, m: &str| -> Vec<f64> {
        let g = add_row(
            &mm(&mat(t.value(x)), &mat(model.params().get(&format!("attr.{m}.gate.w")).unwrap())),
            model.params().get(&format!("attr.{m}.gate.b")).unwrap().data(),
        );
        g.iter().map(|r| r.iter().sum::<f64>() / 4.0).collect()
    };
    let (g1, g2) = (gate(x1, "brand"), gate(x2, "category"));
    for r in 0..3 {
        let want = softmax(&[g1[r], g2[r]]);
        assert!((beta[r][0] - want[0]).abs() < 1e-14);
        assert!((beta[r][0] + beta[r][1] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn gate_is_uniform_for_identical_types() {
    let mut model = random_model(&["brand", "category"], 4, &[3, 3], 4, 1, 10);
    let (a, b) = (
        model.params().position("attr.brand.gate.w").unwrap(),
        model.params().position("attr.category.gate.w").unwrap(),
    );
    let w = model.params().tensor(a).clone();
    *model.params_mut().tensor_mut(b) = w;
    let (a, b) = (
        model.params().position("attr.brand.gate.b").unwrap(),
        model.params().position("attr.category.gate.b").unwrap(),
    );
    let w = model.params().tensor(a).clone();
    *model.params_mut().tensor_mut(b) = w;
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = t.constant(random_tensor(&mut rng, 3, 4));
    let h = t.constant(random_tensor(&mut rng, 3, 4));
    let (beta, _) = model.gate_fuse(&mut t, &vars, &[x, x], &[h, h], h).unwrap();
    assert!(t.value(beta.unwrap()).data().iter().all(|&b| (b - 0.5).abs() < 1e-15));
}

fn block_of(model: &Model, t: &mut Tape) -> (Vec<Var>, BlockWeights) {
    let vars = model.bind(t);
    let p = model.params();
    let v = |n: &str| vars[p.position(n).unwrap()];
    let w = BlockWeights {
        attention: AttentionWeights {
            wq: v("block.wq"),
            wk: v("block.wk"),
            wv: v("block.wv"),
            wo: v("block.wo"),
            bq: Some(v("block.bq")),
            bk: Some(v("block.bk")),
            bv: Some(v("block.bv")),
            bo: Some(v("block.bo")),
        },
        ln1_gain: v("block.ln1.gain"),
        ln1_bias: v("block.ln1.bias"),
        ff1_w: v("block.ff1.w"),
        ff1_b: v("block.ff1.b"),
        ff2_w: v("block.ff2.w"),
        ff2_b: v("block.ff2.b"),
        ln2_gain: v("block.ln2.gain"),
        ln2_bias: v("block.ln2.bias"),
    };
    (vars, w)
}

#[test]
fn transformer_block_matches_loops() {
    let model = random_model(&[], 4, &[], 4, 2, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = random_tensor(&mut rng, 3, 4);
    let mut t = Tape::new();
    let (_, w) = block_of(&model, &mut t);
    let xv = t.constant(x.clone());
    let out = transformer_block(&mut t, xv, &w, 2, 1e-12, 0.0, 0.0).unwrap();

    let p = model.params();
    let g = |n: &str| mat(p.get(n).unwrap());
    let b = |n: &str| p.get(n).unwrap().data().to_vec();
    let x = mat(&x);
    let q = add_row(&mm(&x, &g("block.wq")), &b("block.bq"));
    let k = add_row(&mm(&x, &g("block.wk")), &b("block.bk"));
    let v = add_row(&mm(&x, &g("block.wv")), &b("block.bv"));
    let mut ctx = vec![vec![0.0; 4]; 3];
    for h in 0..2 {
        let cols = h * 2..h * 2 + 2;
        for r in 0..3 {
            let logits: Vec<f64> = (0..3)
                .map(|c| cols.clone().map(|j| q[r][j] * k[c][j]).sum::<f64>() / 2f64.sqrt())
                .collect();
            let a = softmax(&logits);
            for j in cols.clone() {
                ctx[r][j] = (0..3).map(|c| a[c] * v[c][j]).sum();
            }
        }
    }
    let attn = add_row(&mm(&ctx, &g("block.wo")), &b("block.bo"));
    let x1: Mat = x.iter().zip(&attn).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect()).collect();
    let x1 = layer_norm(&x1, &b("block.ln1.gain"), &b("block.ln1.bias"));
    let f = add_row(&mm(&x1, &g("block.ff1.w")), &b("block.ff1.b"));
    let f: Mat = f.iter().map(|r| r.iter().map(|&v| gelu(v)).collect()).collect();
    let f = add_row(&mm(&f, &g("block.ff2.w")), &b("block.ff2.b"));
    let x2: Mat = x1.iter().zip(&f).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect()).collect();
    let want = layer_norm(&x2, &b("block.ln2.gain"), &b("block.ln2.bias"));
    close(&mat(t.value(out.out)), &want, 1e-12);
}

#[test]
fn identical_rows_stay_identical() {
    let model = random_model(&[], 4, &[], 4, 2, 22);
    let mut t = Tape::new();
    let (_, w) = block_of(&model, &mut t);
    let xv = t.constant(Tensor::from_rows(&vec![vec![0.3, -0.1, 0.7, 0.2]; 5]).unwrap());
    let out = transformer_block(&mut t, xv, &w, 2, 1e-12, 0.0, 0.0).unwrap();
    let o = mat(t.value(out.out));
    assert_eq!(o.len(), 5);
    for r in &o[1..] {
        assert_eq!(r, &o[0]);
    }
}

fn head_of(model: &Model, vars: &[Var]) -> HeadWeights {
    let p = model.params();
    let v = |n: &str| vars[p.position(n).unwrap()];
    HeadWeights {
        positions: v("head.positions"),
        wz: v("head.wz"),
        bz: v("head.bz"),
        wg: v("head.wg"),
        bg: v("head.bg"),
        rg: v("head.rg"),
        items: v("item.emb"),
    }
}

#[test]
fn prediction_head_matches_loops() {
    let model = random_model(&[], 5, &[], 4, 1, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let hidden = random_tensor(&mut rng, 4, 4);
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let w = head_of(&model, &vars);
    let hv = t.constant(hidden.clone());
    let pred = predict_scores(&mut t, hv, &w).unwrap();

    let p = model.params();
    let g = |n: &str| mat(p.get(n).unwrap());
    let h = mat(&hidden);
    let pos = g("head.positions");
    let len = 2;
    let z: Mat = (0..4)
        .map(|i| {
            let cat: Vec<f64> = h[i].iter().chain(&pos[len + 1 - i]).copied().collect();
            let zr = add_row(&mm(&vec![cat], &g("head.wz")), p.get("head.bz").unwrap().data());
            zr[0].iter().map(|v| v.tanh()).collect()
        })
        .collect();
    let zm = &z[3];
    let rg = g("head.rg");
    let gamma: Vec<f64> = (1..=len)
        .map(|i| {
            let s = mm(&vec![z[i].clone()], &g("head.wg"));
            (0..4)
                .map(|c| {
                    let a = s[0][c] + zm[c] + p.get("head.bg").unwrap().data()[c];
                    rg[c][0] / (1.0 + (-a).exp())
                })
                .sum()
        })
        .collect();
    let u: Vec<f64> = (0..4).map(|c| gamma[0] * h[1][c] + gamma[1] * h[2][c]).collect();
    let items = g("item.emb");
    let scores: Vec<f64> = items.iter().map(|e| e.iter().zip(&u).map(|(a, b)| a * b).sum()).collect();
    close(&mat(t.value(pred.gamma)), &gamma.iter().map(|&g| vec![g]).collect(), 1e-13);
    close(&mat(t.value(pred.scores)), &vec![scores], 1e-13);
}

#[test]
fn single_item_session_reduces_to_one_term() {
    let model = random_model(&[], 5, &[], 4, 1, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let w = head_of(&model, &vars);
    let hv = t.constant(random_tensor(&mut rng, 3, 4));
    let pred = predict_scores(&mut t, hv, &w).unwrap();
    let gamma = t.value(pred.gamma).item();
    let h1 = t.value(hv).row_slice(1).to_vec();
    let u = t.value(pred.session).data();
    for c in 0..4 {
        assert!((u[c] - gamma * h1[c]).abs() < 1e-15);
    }
}

#[test]
fn aligned_target_ranks_first() {
    let model = random_model(&[], 4, &[], 4, 1, 34);
    let mut t = Tape::new();
    let mut vars = model.bind(&mut t);
    let hv = t.constant(Tensor::from_rows(&[vec![0.0; 4], vec![1.0, 2.0, -1.0, 0.5], vec![0.0; 4]]).unwrap());
    // Find u first, then place the target along u and others orthogonal to it.
    let w = head_of(&model, &vars);
    let pred = predict_scores(&mut t, hv, &w).unwrap();
    let u = t.value(pred.session).data().to_vec();
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target: Vec<f64> = u.iter().map(|x| 10.0 * x / norm).collect();
    let basis = [vec![u[1], -u[0], 0.0, 0.0], vec![0.0, 0.0, u[3], -u[2]], vec![0.0; 4]];
    let mut rows = basis.to_vec();
    rows.insert(2, target);
    let items = model.params().position("item.emb").unwrap();
    vars[items] = t.constant(Tensor::from_rows(&rows).unwrap());
    let w = head_of(&model, &vars);
    let pred = predict_scores(&mut t, hv, &w).unwrap();
    let scores = t.value(pred.scores).data().to_vec();
    let best = (0..4).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
    assert_eq!(best, 2);
}

fn input(items: &[usize], with_memory: bool) -> SessionInput {
    let c = catalog();
    let s = if with_memory { stores() } else { vec![] };
    SessionInput::build(items, &c, &s, &RetrievalConfig::default(), 12).unwrap()
}

#[test]
fn forward_shapes_and_distributions() {
    let model = random_model(&["brand", "category"], 6, &[3, 3], 4, 2, 40);
    let inp = input(&[0, 1, 2, 0], true);
    assert_eq!(inp.memory[0].len(), 1);
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let tr = model.forward(&mut t, &vars, &inp).unwrap();
    assert_eq!(t.value(tr.hidden).shape(), &[6, 4]);
    assert_eq!(t.value(tr.scores()).shape(), &[1, 6]);
    let beta = t.value(tr.beta.unwrap());
    for r in 0..6 {
        assert!((beta.row_slice(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    for a in &tr.attended {
        for p in &a.probs {
            for r in 0..6 {
                assert!((t.value(*p).row_slice(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn repeated_items_share_graph_rows() {
    let model = random_model(&["brand", "category"], 6, &[3, 3], 4, 2, 41);
    let inp = input(&[0, 1, 0], true);
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let tr = model.forward(&mut t, &vars, &inp).unwrap();
    let fused = t.value(tr.fused);
    assert_eq!(fused.row_slice(1), fused.row_slice(3));
}

#[test]
fn single_item_session() {
    let model = random_model(&["brand", "category"], 6, &[3, 3], 4, 2, 42);
    let inp = input(&[3], true);
    assert!(inp.layers[0].neighbors[0] == vec![(0, REL_SELF)]);
    let scores = model.score(&inp).unwrap();
    assert_eq!(scores.len(), 6);
    assert!(scores.iter().all(|s| s.is_finite()));
}

#[test]
fn no_attributes_equals_plain_pipeline() {
    let model = random_model(&[], 6, &[], 4, 2, 43);
    let c = ItemCatalog::new(vec![]);
    let mut c = c;
    for i in 0..6 {
        c.insert(&format!("i{i}"), &[]).unwrap();
    }
    let inp = SessionInput::build(&[2, 4, 2, 1], &c, &[], &RetrievalConfig::default(), 12).unwrap();
    let mut t = Tape::new();
    let vars = model.bind(&mut t);
    let full = model.forward(&mut t, &vars, &inp).unwrap();
    let plain = model.forward_plain(&mut t, &vars, &[2, 4, 2, 1]).unwrap();
    let a: Vec<u64> = t.value(full.scores()).data().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = t.value(plain.scores).data().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
}

#[test]
fn neighbor_lists_prefer_recent_transitions() {
    let mut seq = vec![0];
    for k in 1..=15 {
        seq.push(k);
        seq.push(0);
    }
    let g = crate::sessions::to_session_graph(&seq, crate::sessions::WeightMode::None);
    let hood = layer_neighborhood(&g, 12);
    assert_eq!(hood[0].len(), 13);
    assert_eq!(hood[0][0], (0, REL_SELF));
    // 15 -> 0 is the latest transition; 0 -> 15 also exists, so it counts as forward
    assert_eq!(hood[0][1], (g.position_nodes[29], REL_FORWARD));
    assert!(hood[0].iter().all(|&(j, _)| g.nodes[j] == 0 || g.nodes[j] >= 4));
}

#[test]
fn end_to_end_gradient() {
    let model = random_model(&["brand", "category"], 6, &[3, 3], 4, 2, 44);
    let inp = input(&[0, 2, 1], true);
    let point: Vec<Tensor> = model.params().iter().map(|(_, t)| t.clone()).collect();
    let report = grad_check(
        |t, vars| {
            let tr = model.forward(t, vars, &inp)?;
            let ls = t.log_softmax(tr.scores())?;
            let target = t.take(ls, vec![4], vec![1, 1])?;
            t.scale(target, -1.0)
        },
        &point,
        1e-5,
        1e-3,
    )
    .unwrap();
    let names: Vec<_> = model.params().iter().map(|(n, _)| n.to_string()).collect();
    assert!(report.passed(), "{:?}", names.iter().zip(&report.max_rel_error).collect::<Vec<_>>());
}

#[test]
fn save_and_load() {
    let model = random_model(&["brand", "category"], 6, &[3, 3], 4, 2, 45);
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path(), "model").unwrap();
    let back = Model::load(dir.path(), "model", model.config().clone()).unwrap();
    assert_eq!(back.params(), model.params());
    let manifest = std::fs::read_to_string(dir.path().join("model.json")).unwrap();
    assert_eq!(
        manifest.trim(),
        r#"{"d":4,"heads":2,"M":2,"attribute_types":["brand","category"],"max_len":8}"#
    );
    let wrong = ModelConfig { d: 8, ..model.config().clone() };
    assert!(Model::load(dir.path(), "model", wrong).is_err());
    assert!(matches!(
        Model::load(&dir.path().join("nope"), "model", model.config().clone()),
        Err(Error::MissingDependency { .. })
    ));
}
