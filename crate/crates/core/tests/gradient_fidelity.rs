//! Analytic gradients of the sequence loss against central differences on a tiny
//! 64-bit model.

use d2s_core::corpus::{Batch, EncodedPair, BOS, EOS, SEQ_END};
use d2s_core::model::{forward_loss, init_params, loss_and_grads, Hyperparams, ModelParams};
use d2s_core::numkernel::{finite_diff, max_relative_error, Streams, Tensor};
use rand::Rng;

fn tiny() -> Hyperparams {
    Hyperparams {
        embed_dim: 3,
        hidden_dim: 4,
        vocab_size: 11,
        dropout_rate: 0.0,
        ..Hyperparams::default()
    }
}

fn params(hp: &Hyperparams) -> ModelParams<f64> {
    let mut p = init_params::<f64>(hp, 21).unwrap();
    let mut rng = Streams::new(21).stream("bias");
    for t in p.tensors_mut() {
        if t.rank() == 1 {
            for v in t.data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
    }
    p
}

#[test]
fn every_parameter_gradient_matches_finite_differences() {
    let hp = tiny();
    let base = params(&hp);
    let pairs = [
        EncodedPair {
            source_ids: vec![6, 7, 4, 8, SEQ_END],
            target_ids: vec![BOS, 9, 10, EOS],
        },
        EncodedPair {
            source_ids: vec![7, 9, SEQ_END],
            target_ids: vec![BOS, 6, EOS],
        },
    ];
    let batch = Batch::from_pairs(&pairs.iter().collect::<Vec<_>>(), vec![0, 1]);
    let (_, grads) = loss_and_grads(&batch, &base, &hp, None).unwrap();
    let names = ModelParams::<f64>::names();

    let mut worst = 0.0f64;
    for (k, analytic) in grads.iter().enumerate() {
        let numeric = finite_diff(
            |t: &Tensor<f64>| {
                let mut p = base.clone();
                *p.tensors_mut()[k] = t.clone();
                forward_loss(&batch, &p, &hp, None).unwrap()
            },
            base.tensors()[k],
            1e-5,
        );
        let err = max_relative_error(analytic.data(), numeric.data(), 1e-6);
        assert!(err < 1e-4, "{}: relative error {err:e}", names[k]);
        worst = worst.max(err);
    }
    assert!(worst.is_finite());
}
