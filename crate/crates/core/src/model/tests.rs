use super::*;
use crate::corpus::{EncodedPair, BOS, EOS, SEQ_END};
use crate::numkernel::Streams;
use proptest::prelude::*;
use rand::Rng;

fn hp(v: usize, e: usize, h: usize) -> Hyperparams {
    Hyperparams {
        embed_dim: e,
        hidden_dim: h,
        vocab_size: v,
        dropout_rate: 0.0,
        ..Hyperparams::default()
    }
}

fn random_params(hp: &Hyperparams, seed: u64, scale: f64) -> ModelParams<f64> {
    let mut p = init_params::<f64>(hp, seed).unwrap();
    let mut rng = Streams::new(seed).stream("bias");
    for t in p.tensors_mut() {
        if t.rank() == 1 {
            for v in t.data_mut() {
                *v = rng.gen_range(-scale..scale);
            }
        }
    }
    p
}

fn pair(src: &[u32], tgt: &[u32]) -> EncodedPair {
    EncodedPair {
        source_ids: src.to_vec(),
        target_ids: tgt.to_vec(),
    }
}

fn batch_of(pairs: &[EncodedPair]) -> Batch {
    let refs: Vec<&EncodedPair> = pairs.iter().collect();
    Batch::from_pairs(&refs, (0..pairs.len()).collect())
}

#[test]
fn init_is_deterministic_with_zero_biases() {
    let h = hp(20, 4, 4);
    let a = init_params::<f32>(&h, 7).unwrap();
    let b = init_params::<f32>(&h, 7).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, init_params::<f32>(&h, 8).unwrap());
    for (name, t) in a.named() {
        if name.contains(".b_") || name.ends_with(".b") {
            assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
        }
    }
}

#[test]
fn init_respects_glorot_bound_for_square_layers() {
    let h = hp(4, 4, 4);
    let p = init_params::<f64>(&h, 3).unwrap();
    let bound = (6.0f64 / 8.0).sqrt();
    for name in [
        "enc_fwd.w_z",
        "enc_fwd.u_h",
        "dec2.w_r",
        "att.w",
        "att.v",
        "init.w",
    ] {
        let (_, t) = p.named().into_iter().find(|(n, _)| n == name).unwrap();
        assert!(t.data().iter().all(|v| v.abs() <= bound), "{name}");
    }
    assert!(p
        .tensors()
        .iter()
        .all(|t| t.data().iter().all(|v| v.abs() <= bound)));
}

#[test]
fn gru_zero_params_halves_state() {
    let p = GruCellParams::<f64>::zeros(3, 4);
    let v = Tensor::vector(vec![1.0, -2.0, 0.5, 4.0]);
    let h = gru_cell(&Tensor::vector(vec![0.3, 0.1, -0.7]), &v, &p).unwrap();
    assert_eq!(h.data(), &[0.5, -1.0, 0.25, 2.0]);
    let zero = gru_cell(
        &Tensor::vector(vec![1.0, 1.0, 1.0]),
        &Tensor::zeros(&[4]),
        &p,
    )
    .unwrap();
    assert!(zero.data().iter().all(|&x| x == 0.0));
}

#[test]
fn gru_saturated_update_gate_takes_candidate() {
    let mut p = GruCellParams::<f64>::zeros(1, 1);
    p.b_z = Tensor::vector(vec![-20.0]);
    p.w_h = Tensor::matrix(1, 1, vec![0.8]).unwrap();
    p.u_h = Tensor::matrix(1, 1, vec![-0.6]).unwrap();
    p.w_r = Tensor::matrix(1, 1, vec![0.4]).unwrap();
    p.b_h = Tensor::vector(vec![0.1]);
    let (x, hp_) = (0.9, 0.3);
    let h = gru_cell(&Tensor::vector(vec![x]), &Tensor::vector(vec![hp_]), &p).unwrap();
    let r = 1.0 / (1.0 + (-0.4 * x).exp());
    let cand = (0.8 * x - 0.6 * r * hp_ + 0.1f64).tanh();
    assert!((h.data()[0] - cand).abs() < 1e-8);
}

#[test]
fn gru_rejects_shape_mismatch() {
    let p = GruCellParams::<f64>::zeros(3, 4);
    assert!(gru_cell(&Tensor::vector(vec![1.0, 2.0]), &Tensor::zeros(&[4]), &p).is_err());
}

#[test]
fn annotation_shape() {
    let h = hp(12, 6, 8);
    let p = init_params::<f64>(&h, 1).unwrap();
    let (ann, init) = encode(&[6, 7, 8, 9, SEQ_END], &p, &h, None).unwrap();
    assert_eq!(ann.matrix.shape(), &[5, 16]);
    assert_eq!(ann.keys.shape(), &[5, 8]);
    assert_eq!(init[0].shape(), &[8]);
    assert_eq!(init[0], init[1]);
}

#[test]
fn zero_params_give_zero_annotations() {
    let h = hp(12, 6, 8);
    let p = ModelParams::<f64>::zeros(&h);
    let (ann, init) = encode(&[6, 7, SEQ_END], &p, &h, None).unwrap();
    assert!(ann.matrix.data().iter().all(|&v| v == 0.0));
    assert!(init[0].data().iter().all(|&v| v == 0.0));
}

#[test]
fn empty_source_is_rejected() {
    let h = hp(12, 6, 8);
    let p = ModelParams::<f64>::zeros(&h);
    assert!(matches!(
        encode(&[], &p, &h, None),
        Err(ModelError::EmptySource)
    ));
}

#[test]
fn reversal_swaps_directions_when_cells_match() {
    let h = hp(12, 3, 4);
    let mut p = random_params(&h, 5, 0.3);
    p.enc_bwd = p.enc_fwd.clone();
    let src = [6u32, 9, 7, 11, SEQ_END];
    let rev: Vec<u32> = src.iter().rev().copied().collect();
    let (a, _) = encode(&src, &p, &h, None).unwrap();
    let (b, _) = encode(&rev, &p, &h, None).unwrap();
    let n = src.len();
    for t in 0..n {
        let (ra, rb) = (a.matrix.row(t), b.matrix.row(n - 1 - t));
        for k in 0..4 {
            assert!((ra[k] - rb[4 + k]).abs() < 1e-12);
            assert!((ra[4 + k] - rb[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn uniform_scores_give_uniform_weights() {
    let h = hp(12, 3, 4);
    let p = ModelParams::<f64>::zeros(&h);
    let (ann, _) = encode(&[6, 7, 8, SEQ_END], &p, &h, None).unwrap();
    let (_, w) = attend(&Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]), &ann, &p).unwrap();
    assert_eq!(w.data(), &[0.25; 4]);
}

#[test]
fn single_position_attention_returns_that_annotation() {
    let h = hp(12, 3, 4);
    let p = random_params(&h, 9, 0.5);
    let (ann, _) = encode(&[SEQ_END], &p, &h, None).unwrap();
    let (ctx, w) = attend(&Tensor::vector(vec![0.3, -0.2, 0.1, 0.0]), &ann, &p).unwrap();
    assert_eq!(w.data(), &[1.0]);
    assert_eq!(ctx.data(), ann.matrix.row(0));
}

#[test]
fn scores_zero_and_ln3_give_quarter_and_three_quarters() {
    // A = 1, W_a = 0, v_a = 2: score_j = 2·tanh(key_j).
    let h = hp(12, 1, 1);
    let mut p = ModelParams::<f64>::zeros(&h);
    p.att_v = Tensor::vector(vec![2.0]);
    let keys = Tensor::matrix(2, 1, vec![0.0, (3f64.ln() / 2.0).atanh()]).unwrap();
    let ann = Annotations {
        matrix: Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
        keys,
        mask: vec![true, true],
    };
    let (ctx, w) = attend(&Tensor::vector(vec![0.7]), &ann, &p).unwrap();
    assert!((w.data()[0] - 0.25).abs() < 1e-12 && (w.data()[1] - 0.75).abs() < 1e-12);
    assert!((ctx.data()[0] - 0.25).abs() < 1e-12 && (ctx.data()[1] - 0.75).abs() < 1e-12);
}

#[test]
fn fully_masked_attention_is_an_error() {
    let h = hp(12, 1, 1);
    let p = ModelParams::<f64>::zeros(&h);
    let ann = Annotations {
        matrix: Tensor::zeros(&[2, 2]),
        keys: Tensor::zeros(&[2, 1]),
        mask: vec![false, false],
    };
    assert!(matches!(
        attend(&Tensor::vector(vec![0.0]), &ann, &p),
        Err(ModelError::AllMasked)
    ));
}

#[test]
fn decode_step_shapes_zero_logits_and_purity() {
    let h = hp(13, 3, 4);
    let zero = ModelParams::<f64>::zeros(&h);
    let (ann, st) = encode(&[6, 7, SEQ_END], &zero, &h, None).unwrap();
    let (logits, _) = decode_step(BOS, &st, &ann, &zero, &h, None).unwrap();
    assert_eq!(logits.shape(), &[13]);
    assert!(logits.data().iter().all(|&v| v == 0.0));

    let p = random_params(&h, 2, 0.3);
    let (ann, st) = encode(&[6, 7, SEQ_END], &p, &h, None).unwrap();
    let a = decode_step(8, &st, &ann, &p, &h, None).unwrap();
    let b = decode_step(8, &st, &ann, &p, &h, None).unwrap();
    assert_eq!(a, b);
    assert!(matches!(
        decode_step(13, &st, &ann, &p, &h, None),
        Err(ModelError::InvalidToken(13))
    ));
}

#[test]
fn zero_params_loss_is_ln_v() {
    let h = hp(17, 3, 4);
    let p = ModelParams::<f64>::zeros(&h);
    let b = batch_of(&[
        pair(&[6, 7, SEQ_END], &[BOS, 8, 9, EOS]),
        pair(&[6, SEQ_END], &[BOS, 10, EOS]),
    ]);
    let loss = forward_loss(&b, &p, &h, None).unwrap();
    assert!((loss - 17f64.ln()).abs() < 1e-12);
}

#[test]
fn loss_without_supervised_tokens_is_an_error() {
    let h = hp(17, 3, 4);
    let p = ModelParams::<f64>::zeros(&h);
    let b = batch_of(&[pair(&[6, SEQ_END], &[BOS])]);
    assert!(matches!(
        forward_loss(&b, &p, &h, None),
        Err(ModelError::NoTargetTokens)
    ));
}

#[test]
fn duplicating_the_batch_keeps_the_loss() {
    let h = hp(15, 3, 4);
    let p = random_params(&h, 11, 0.5);
    let pairs = vec![
        pair(&[6, 7, 8, SEQ_END], &[BOS, 9, 10, 11, EOS]),
        pair(&[12, SEQ_END], &[BOS, 13, EOS]),
    ];
    let doubled: Vec<EncodedPair> = pairs.iter().chain(pairs.iter()).cloned().collect();
    let a = forward_loss(&batch_of(&pairs), &p, &h, None).unwrap();
    let b = forward_loss(&batch_of(&doubled), &p, &h, None).unwrap();
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

#[test]
fn eval_loss_ignores_random_streams() {
    let mut h = hp(15, 3, 4);
    h.dropout_rate = 0.5;
    let p = random_params(&h, 11, 0.5);
    let b = batch_of(&[pair(&[6, 7, SEQ_END], &[BOS, 9, 10, EOS])]);
    let a = forward_loss(&b, &p, &h, None).unwrap();
    assert_eq!(a, forward_loss(&b, &p, &h, None).unwrap());
    let mut rng = Streams::new(1).stream("dropout");
    let trained = forward_loss(&b, &p, &h, Some(&mut rng)).unwrap();
    assert_ne!(a, trained);
}

#[test]
fn trailing_pad_columns_do_not_change_the_loss() {
    let h = hp(15, 3, 4);
    let p = random_params(&h, 4, 0.5);
    let b = batch_of(&[
        pair(&[6, 7, SEQ_END], &[BOS, 9, 10, EOS]),
        pair(&[8, SEQ_END], &[BOS, 11, EOS]),
    ]);
    let widen = |g: &Grid<u32>, extra: usize| {
        let cols = g.cols() + extra;
        let mut data = Vec::new();
        for r in 0..g.rows() {
            data.extend_from_slice(g.row(r));
            data.extend(std::iter::repeat_n(0, extra));
        }
        Grid::new(g.rows(), cols, data)
    };
    let widen_mask = |g: &Grid<u8>, extra: usize| {
        let mut data = Vec::new();
        for r in 0..g.rows() {
            data.extend_from_slice(g.row(r));
            data.extend(std::iter::repeat_n(0, extra));
        }
        Grid::new(g.rows(), g.cols() + extra, data)
    };
    let wide = Batch {
        source: widen(&b.source, 3),
        source_mask: widen_mask(&b.source_mask, 3),
        target: widen(&b.target, 2),
        target_mask: widen_mask(&b.target_mask, 2),
        indices: b.indices.clone(),
    };
    let a = forward_loss(&b, &p, &h, None).unwrap();
    let c = forward_loss(&wide, &p, &h, None).unwrap();
    assert!((a - c).abs() < 1e-12, "{a} vs {c}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loss_is_non_negative(seed in 0u64..1000, len in 1usize..5) {
        let h = hp(10, 2, 3);
        let p = random_params(&h, seed, 1.0);
        let tgt: Vec<u32> = std::iter::once(BOS).chain((0..len).map(|i| 6 + (i as u32 + seed as u32) % 4)).chain([EOS]).collect();
        let b = batch_of(&[pair(&[6, 7, SEQ_END], &tgt)]);
        prop_assert!(forward_loss(&b, &p, &h, None).unwrap() >= 0.0);
    }

    #[test]
    fn batched_attention_weights_normalize_and_respect_mask(
        seed in 0u64..1000,
        lens in prop::collection::vec(1usize..6, 1..4),
    ) {
        let h = hp(10, 2, 3);
        let p = random_params(&h, seed, 1.0);
        let max = *lens.iter().max().unwrap();
        let rows = lens.len();
        let mut ids = vec![0u32; rows * max];
        let mut mask = vec![false; rows * max];
        for (r, &l) in lens.iter().enumerate() {
            for c in 0..l {
                ids[r * max + c] = 6 + ((r + c) % 4) as u32;
                mask[r * max + c] = true;
            }
        }
        let mut tape = Tape::new();
        let nodes = ParamNodes::register(&mut tape, &p).unwrap();
        let enc = graph::encode_nodes(&mut tape, &nodes, &Grid::new(rows, max, ids), &mask, &h, None).unwrap();
        let (_, w) = graph::attend_nodes(&mut tape, &nodes, enc.init, &enc).unwrap();
        let w = tape.value(w);
        for r in 0..rows {
            let row = w.row(r);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            for c in 0..max {
                if !mask[r * max + c] { prop_assert_eq!(row[c], 0.0); }
            }
        }
    }
}
