use hgnn::dense::Matrix;
use hgnn::metapath::{Metapath, PathKind, SemanticMatrix};
use hgnn::model::{
    backward, compare_gradients, cross_entropy, forward, grad_check, grad_check_with_step,
    init_params, input_specs, logit_gradient, loss_and_grad, FusionMode, FusionParams, Mode,
    ModelConfig, ModelParams,
};
use hgnn::model::checkpoint::{decode_checkpoint, encode_checkpoint};
use hgnn::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn path(types: &str, kind: PathKind) -> Metapath {
    Metapath::unchecked(types.chars().map(|c| c.to_string()).collect(), kind)
}

struct Tiny {
    inputs: Vec<SemanticMatrix>,
    labels: Vec<Option<usize>>,
    rows: Vec<usize>,
}

fn tiny(seed: u64, k: usize, classes: usize) -> Tiny {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 6;
    let names = ["P", "PA", "PAP", "PS", "PSP"];
    let mut inputs = Vec::new();
    for i in 0..k {
        let (mp, dim) = if i + 1 == k && k > 1 {
            (path("PAP", PathKind::Label), classes)
        } else {
            (path(names[i], PathKind::Feature), 3 + i)
        };
        let data = (0..n * dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        inputs.push(SemanticMatrix {
            metapath: mp,
            matrix: Matrix::from_vec(n, dim, data).unwrap(),
        });
    }
    let labels = (0..n).map(|_| Some(rng.random_range(0..classes))).collect();
    Tiny {
        inputs,
        labels,
        rows: vec![0, 2, 3, 5],
    }
}

fn config(fusion: FusionMode) -> ModelConfig {
    ModelConfig {
        fusion,
        dropout: 0.0,
        ..ModelConfig::new(8, 4)
    }
}

fn model(t: &Tiny, fusion: FusionMode, seed: u64) -> ModelParams<f64> {
    let mut p: ModelParams<f64> = init_params(&config(fusion), &input_specs(&t.inputs), seed).unwrap();
    // Move norm parameters and biases off their initial values so every tensor is exercised.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for t in p.tensors_mut() {
        if t.rows() == 1 {
            for v in t.as_mut_slice() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    }
    p
}

// ---------------------------------------------------------------------------
// Straight-line reference forward on plain vectors, written independently of
// the library's matrix helpers.

fn affine(x: &[f64], w: &Matrix<f64>, b: &Matrix<f64>) -> Vec<f64> {
    (0..w.cols())
        .map(|j| b.get(0, j) + (0..w.rows()).map(|i| x[i] * w.get(i, j)).sum::<f64>())
        .collect()
}

fn reference_mlp(x: &[f64], mlp: &hgnn::model::mlp::Mlp<f64>) -> Vec<f64> {
    let mut h = x.to_vec();
    for (l, layer) in mlp.layers.iter().enumerate() {
        let z = affine(&h, &layer.weight, &layer.bias);
        if l + 1 == mlp.layers.len() {
            return z;
        }
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = (var + 1e-5).sqrt();
        let norm = &mlp.norms[l];
        h = z
            .iter()
            .enumerate()
            .map(|(j, v)| ((v - mean) / sd * norm.scale.get(0, j) + norm.shift.get(0, j)).max(0.0))
            .collect();
    }
    unreachable!()
}

fn mat_vec(x: &[f64], w: &Matrix<f64>) -> Vec<f64> {
    (0..w.cols())
        .map(|j| (0..w.rows()).map(|i| x[i] * w.get(i, j)).sum())
        .collect()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn reference_forward(p: &ModelParams<f64>, inputs: &[SemanticMatrix], node: usize) -> Vec<f64> {
    let hs: Vec<Vec<f64>> = p
        .projections
        .iter()
        .zip(inputs)
        .map(|(mlp, sm)| reference_mlp(sm.matrix.row(node), mlp))
        .collect();
    let fused: Vec<f64> = match &p.fusion {
        FusionParams::Transformer { query, key, value, beta } => {
            let q: Vec<_> = hs.iter().map(|h| mat_vec(h, query)).collect();
            let k: Vec<_> = hs.iter().map(|h| mat_vec(h, key)).collect();
            let v: Vec<_> = hs.iter().map(|h| mat_vec(h, value)).collect();
            let mut out = Vec::new();
            for i in 0..hs.len() {
                let logits: Vec<f64> = (0..hs.len())
                    .map(|j| q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum())
                    .collect();
                let alpha = softmax(&logits);
                for d in 0..hs[i].len() {
                    let att: f64 = (0..hs.len()).map(|j| alpha[j] * v[j][d]).sum();
                    out.push(beta.get(0, 0) * att + hs[i][d]);
                }
            }
            out
        }
        FusionParams::WeightedSum { .. } => unreachable!("reference covers transformer fusion"),
    };
    softmax(&reference_mlp(&fused, &p.classifier))
}

#[test]
fn forward_matches_straight_line_reference() {
    for seed in 0..3 {
        let t = tiny(seed, 3, 4);
        let p = model(&t, FusionMode::Transformer, seed);
        let (probs, _) = forward(&p, &t.inputs, &t.rows, Mode::Eval).unwrap();
        for (r, &node) in t.rows.iter().enumerate() {
            let want = reference_forward(&p, &t.inputs, node);
            for (a, b) in probs.row(r).iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "seed {seed}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn gradients_match_finite_differences_in_both_fusion_modes() {
    for fusion in [FusionMode::Transformer, FusionMode::WeightedSum] {
        for seed in 0..4 {
            let t = tiny(seed, 3, 4);
            let p = model(&t, fusion, seed);
            let err = grad_check(&p, &t.inputs, &t.rows, &t.labels).unwrap();
            assert!(err <= 1e-4, "{fusion:?} seed {seed}: {err}");
        }
    }
}

#[test]
fn gradients_match_with_scaled_attention() {
    let t = tiny(9, 3, 4);
    let mut p = model(&t, FusionMode::Transformer, 9);
    p.config.attention_scaling = true;
    assert!(grad_check(&p, &t.inputs, &t.rows, &t.labels).unwrap() <= 1e-4);
}

#[test]
fn corrupted_backward_is_detected() {
    let t = tiny(1, 3, 4);
    let p = model(&t, FusionMode::Transformer, 1);
    let (_, mut grads) = loss_and_grad(&p, &t.inputs, &t.rows, &t.labels, Mode::Eval).unwrap();
    if let FusionParams::Transformer { query, .. } = &mut grads.fusion {
        query.scale(-1.0);
    }
    let err = compare_gradients(&p, &t.inputs, &t.rows, &t.labels, &grads, 1e-5).unwrap();
    assert!(err > 1e-2, "{err}");
}

#[test]
fn larger_step_grows_error_but_stays_bounded() {
    let t = tiny(2, 3, 4);
    let p = model(&t, FusionMode::Transformer, 2);
    let fine = grad_check_with_step(&p, &t.inputs, &t.rows, &t.labels, 1e-5).unwrap();
    let coarse = grad_check_with_step(&p, &t.inputs, &t.rows, &t.labels, 1e-3).unwrap();
    assert!(coarse > fine, "{coarse} <= {fine}");
    assert!(coarse <= 1e-2, "{coarse}");
}

#[test]
fn dropout_gradients_use_the_recorded_mask() {
    let t = tiny(4, 3, 4);
    let mut p = model(&t, FusionMode::Transformer, 4);
    p.config.dropout = 0.5;
    let mode = Mode::Train { seed: 77 };
    let (_, analytic) = loss_and_grad(&p, &t.inputs, &t.rows, &t.labels, mode).unwrap();
    // Finite differences under the same mask seed.
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for ti in 0..p.tensors().len() {
        for i in 0..p.tensors()[ti].as_slice().len() {
            let mut up = p.clone();
            up.tensors_mut()[ti].as_mut_slice()[i] += step;
            let mut down = p.clone();
            down.tensors_mut()[ti].as_mut_slice()[i] -= step;
            let lu = hgnn::model::loss(&up, &t.inputs, &t.rows, &t.labels, mode).unwrap();
            let ld = hgnn::model::loss(&down, &t.inputs, &t.rows, &t.labels, mode).unwrap();
            let num = (lu - ld) / (2.0 * step);
            let a = analytic.tensors()[ti].as_slice()[i];
            worst = worst.max((a - num).abs());
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn single_metapath_attention_is_identity() {
    let t = tiny(3, 1, 4);
    let p = model(&t, FusionMode::Transformer, 3);
    let (_, cache) = forward(&p, &t.inputs, &t.rows, Mode::Eval).unwrap();
    let alpha = cache.attention().unwrap();
    assert!(alpha.as_slice().iter().all(|&a| a == 1.0));
    let FusionParams::Transformer { value, beta, .. } = &p.fusion else { unreachable!() };
    let v = cache.projected[0].matmul(value).unwrap();
    for r in 0..t.rows.len() {
        for d in 0..8 {
            let want = beta.get(0, 0) * v.get(r, d) + cache.projected[0].get(r, d);
            assert!((cache.fused.get(r, d) - want).abs() < 1e-14);
        }
    }
}

#[test]
fn identical_metapaths_share_attention_equally() {
    let mut t = tiny(5, 2, 4);
    t.inputs[1].matrix = t.inputs[0].matrix.clone();
    t.inputs[1].metapath = path("PA", PathKind::Feature);
    let mut p: ModelParams<f64> =
        init_params(&config(FusionMode::Transformer), &input_specs(&t.inputs), 5).unwrap();
    p.projections[1] = p.projections[0].clone();
    let (_, cache) = forward(&p, &t.inputs, &t.rows, Mode::Eval).unwrap();
    for &a in cache.attention().unwrap().as_slice() {
        assert!((a - 0.5).abs() < 1e-15, "{a}");
    }
}

#[test]
fn beta_zero_decouples_attention() {
    let t = tiny(6, 3, 4);
    let mut p = model(&t, FusionMode::Transformer, 6);
    if let FusionParams::Transformer { beta, .. } = &mut p.fusion {
        beta.set(0, 0, 0.0);
    }
    let (_, cache) = forward(&p, &t.inputs, &t.rows, Mode::Eval).unwrap();
    let concat = hgnn::model::fusion::hconcat(&cache.projected);
    assert_eq!(cache.fused, concat);
    let (_, grads) = loss_and_grad(&p, &t.inputs, &t.rows, &t.labels, Mode::Eval).unwrap();
    let FusionParams::Transformer { query, key, value, beta } = &grads.fusion else { unreachable!() };
    for m in [query, key, value] {
        assert!(m.as_slice().iter().all(|&g| g == 0.0));
    }
    assert!(beta.get(0, 0) != 0.0);
}

#[test]
fn permuting_metapaths_permutes_outputs_and_keeps_loss() {
    let t = tiny(7, 3, 4);
    let p = model(&t, FusionMode::Transformer, 7);
    let perm = [2usize, 0, 1];
    let d = p.config.hidden;

    let mut q = p.clone();
    q.inputs = perm.iter().map(|&i| p.inputs[i].clone()).collect();
    q.projections = perm.iter().map(|&i| p.projections[i].clone()).collect();
    let w = &p.classifier.layers[0].weight;
    let mut permuted = Matrix::zeros(w.rows(), w.cols());
    for (new_block, &old_block) in perm.iter().enumerate() {
        for r in 0..d {
            permuted.row_mut(new_block * d + r).copy_from_slice(w.row(old_block * d + r));
        }
    }
    q.classifier.layers[0].weight = permuted;
    let inputs_q: Vec<_> = perm.iter().map(|&i| t.inputs[i].clone()).collect();

    let (lp, _) = loss_and_grad(&p, &t.inputs, &t.rows, &t.labels, Mode::Eval).unwrap();
    let (lq, _) = loss_and_grad(&q, &inputs_q, &t.rows, &t.labels, Mode::Eval).unwrap();
    assert!((lp - lq).abs() < 1e-12, "{lp} vs {lq}");

    let (_, cp) = forward(&p, &t.inputs, &t.rows, Mode::Eval).unwrap();
    let (_, cq) = forward(&q, &inputs_q, &t.rows, Mode::Eval).unwrap();
    let bp = hgnn::model::split_fused(&cp.fused, 3);
    let bq = hgnn::model::split_fused(&cq.fused, 3);
    for (new_block, &old_block) in perm.iter().enumerate() {
        assert!(bq[new_block].max_abs_diff(&bp[old_block]) < 1e-12);
    }
}

#[test]
fn weighted_sum_edge_cases() {
    let t = tiny(8, 1, 4);
    let p = model(&t, FusionMode::WeightedSum, 8);
    let (_, cache) = forward(&p, &t.inputs, &t.rows, Mode::Eval).unwrap();
    assert_eq!(cache.fused, cache.projected[0]);

    let mut t2 = tiny(8, 2, 4);
    t2.inputs[1].metapath = path("PA", PathKind::Feature);
    t2.inputs[1].matrix = t2.inputs[0].matrix.map(|v| -v);
    let mut p2: ModelParams<f64> =
        init_params(&config(FusionMode::WeightedSum), &input_specs(&t2.inputs), 8).unwrap();
    // A zero semantic-attention vector gives every metapath the same score.
    if let FusionParams::WeightedSum { query, .. } = &mut p2.fusion {
        *query = Matrix::zeros(1, query.cols());
    }
    let (_, c2) = forward(&p2, &t2.inputs, &t2.rows, Mode::Eval).unwrap();
    for r in 0..t2.rows.len() {
        for d in 0..8 {
            let avg = 0.5 * (c2.projected[0].get(r, d) + c2.projected[1].get(r, d));
            assert!((c2.fused.get(r, d) - avg).abs() < 1e-15);
        }
    }
}

#[test]
fn loss_closed_forms() {
    let zeros = Matrix::<f64>::zeros(3, 5);
    assert!((cross_entropy(&zeros, &[0, 2, 4]) - 5f64.ln()).abs() < 1e-14);

    let mut confident = Matrix::<f64>::zeros(2, 3);
    confident.set(0, 1, 800.0);
    confident.set(1, 2, 800.0);
    assert_eq!(cross_entropy(&confident, &[1, 2]), 0.0);
    let probs = Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
    assert!(logit_gradient(&probs, &[1, 2]).as_slice().iter().all(|&g| g == 0.0));
}

#[test]
fn logit_gradient_is_probabilities_minus_one_hot() {
    let t = tiny(10, 3, 4);
    let p = model(&t, FusionMode::Transformer, 10);
    let (probs, cache) = forward(&p, &t.inputs, &t.rows, Mode::Eval).unwrap();
    let targets: Vec<usize> = t.rows.iter().map(|&r| t.labels[r].unwrap()).collect();
    let g = logit_gradient(&cache.probabilities, &targets);
    let b = t.rows.len() as f64;
    for (r, &y) in targets.iter().enumerate() {
        for c in 0..4 {
            let want = (probs.get(r, c) - if c == y { 1.0 } else { 0.0 }) / b;
            assert!((g.get(r, c) * b - want * b).abs() < 1e-12);
        }
    }
    // and it is the true derivative of the loss with respect to the logits
    let h = 1e-6;
    for r in 0..t.rows.len() {
        for c in 0..4 {
            let mut up = cache.logits.clone();
            up.set(r, c, up.get(r, c) + h);
            let mut dn = cache.logits.clone();
            dn.set(r, c, dn.get(r, c) - h);
            let num = (cross_entropy(&up, &targets) - cross_entropy(&dn, &targets)) / (2.0 * h);
            assert!((num - g.get(r, c)).abs() < 1e-8);
        }
    }
    let _ = backward(&p, &cache, &targets).unwrap();
}

#[test]
fn init_is_seeded_and_validates_hidden_width() {
    let t = tiny(0, 3, 4);
    let specs = input_specs(&t.inputs);
    let a: ModelParams<f64> = init_params(&config(FusionMode::Transformer), &specs, 1).unwrap();
    let b: ModelParams<f64> = init_params(&config(FusionMode::Transformer), &specs, 1).unwrap();
    let c: ModelParams<f64> = init_params(&config(FusionMode::Transformer), &specs, 2).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.fusion.beta(), Some(1.0));
    assert!(a.projections[0].norms[0].scale.as_slice().iter().all(|&s| s == 1.0));
    assert!(a.projections[0].norms[0].shift.as_slice().iter().all(|&s| s == 0.0));

    assert_eq!(ModelConfig::new(64, 3).attn_dim(), 16);
    let bad = ModelConfig::new(6, 3);
    assert!(matches!(
        init_params::<f64>(&bad, &specs, 0),
        Err(Error::Config(_))
    ));
}

#[test]
fn input_and_label_errors() {
    let t = tiny(0, 3, 4);
    let p = model(&t, FusionMode::Transformer, 0);
    assert!(matches!(
        forward::<f64>(&p, &t.inputs[..2], &t.rows, Mode::Eval),
        Err(Error::InputMismatch(_))
    ));
    let mut renamed = t.inputs.clone();
    renamed[0].metapath = path("PS", PathKind::Feature);
    assert!(matches!(
        forward::<f64>(&p, &renamed, &t.rows, Mode::Eval),
        Err(Error::InputMismatch(_))
    ));
    let mut labels = t.labels.clone();
    labels[2] = None;
    assert!(matches!(
        loss_and_grad(&p, &t.inputs, &t.rows, &labels, Mode::Eval),
        Err(Error::UnlabeledRow(2))
    ));
}

#[test]
fn forward_is_deterministic_and_dropout_is_seeded() {
    let t = tiny(11, 3, 4);
    let mut p = model(&t, FusionMode::Transformer, 11);
    p.config.dropout = 0.5;
    let run = |mode| loss_and_grad(&p, &t.inputs, &t.rows, &t.labels, mode).unwrap();
    let (a, ga) = run(Mode::Train { seed: 3 });
    let (b, gb) = run(Mode::Train { seed: 3 });
    assert_eq!(a.to_bits(), b.to_bits());
    assert_eq!(ga, gb);
    let (c, _) = run(Mode::Train { seed: 4 });
    assert_ne!(a, c);
}

#[test]
fn checkpoint_round_trips_exactly() {
    let t = tiny(12, 3, 4);
    for fusion in [FusionMode::Transformer, FusionMode::WeightedSum] {
        let p = model(&t, fusion, 12);
        let bytes = encode_checkpoint(&p);
        assert_eq!(&bytes[..4], b"SEH1");
        let back: ModelParams<f64> = decode_checkpoint(&bytes, "mem".as_ref()).unwrap();
        assert_eq!(back, p);
        assert!(decode_checkpoint::<f32>(&bytes, "mem".as_ref()).is_err());
        assert!(decode_checkpoint::<f64>(&bytes[..bytes.len() - 1], "mem".as_ref()).is_err());
    }
}

#[test]
fn single_precision_tracks_double_precision() {
    let t = tiny(13, 3, 4);
    let p = model(&t, FusionMode::Transformer, 13);
    let bytes = encode_checkpoint(&p);
    let mut p32_bytes = bytes.clone();
    p32_bytes[8] = 4;
    let p32: ModelParams<f32> = decode_checkpoint(&p32_bytes, "mem".as_ref()).unwrap();
    let (a, _) = forward(&p, &t.inputs, &t.rows, Mode::Eval).unwrap();
    let (b, _) = forward(&p32, &t.inputs, &t.rows, Mode::Eval).unwrap();
    assert!(a.max_abs_diff(&b.cast()) < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn attention_rows_are_distributions(seed in any::<u64>(), k in 1usize..5) {
        let t = tiny(seed, k, 4);
        let p = model(&t, FusionMode::Transformer, seed);
        let (probs, cache) = forward(&p, &t.inputs, &t.rows, Mode::Eval).unwrap();
        let alpha = cache.attention().unwrap();
        for row in alpha.as_slice().chunks(k) {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&a| (0.0..=1.0).contains(&a)));
        }
        for r in 0..probs.rows() {
            prop_assert!((probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
