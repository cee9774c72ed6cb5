use super::*;
use crate::model::init_params;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

const A: u32 = 6;
const B: u32 = 7;
const NEG: f64 = -1e9;

/// Logits looked up by the generated prefix; unknown prefixes get `fallback`.
struct TableModel {
    vocab: usize,
    table: HashMap<Vec<u32>, Vec<f64>>,
    fallback: Vec<f64>,
}

/// A prefix and the probabilities of its continuations.
type Row<'a> = (&'a [u32], &'a [(u32, f64)]);

impl TableModel {
    fn probs(vocab: usize, entries: &[Row]) -> Self {
        let to_logits = |ps: &[(u32, f64)]| {
            let mut l = vec![NEG; vocab];
            for &(id, p) in ps {
                l[id as usize] = p.ln();
            }
            l
        };
        TableModel {
            vocab,
            table: entries
                .iter()
                .map(|(k, ps)| (k.to_vec(), to_logits(ps)))
                .collect(),
            fallback: to_logits(&[(EOS, 1.0)]),
        }
    }
}

impl StepModel for TableModel {
    type State = Vec<u32>;
    fn vocab_size(&self) -> usize {
        self.vocab
    }
    fn initial(&self) -> Vec<u32> {
        Vec::new()
    }
    fn step(&self, state: &Vec<u32>, prev: u32) -> Result<(Vec<f64>, Vec<u32>), GenError> {
        let mut next = state.clone();
        if prev != BOS {
            next.push(prev);
        }
        let logits = self.table.get(&next).unwrap_or(&self.fallback).clone();
        Ok((logits, next))
    }
}

/// Prefix-dependent random logits, reproducible from `seed`.
struct RandomModel {
    vocab: usize,
    seed: u64,
    sharp: f64,
}

impl StepModel for RandomModel {
    type State = u64;
    fn vocab_size(&self) -> usize {
        self.vocab
    }
    fn initial(&self) -> u64 {
        self.seed
    }
    fn step(&self, state: &u64, prev: u32) -> Result<(Vec<f64>, u64), GenError> {
        let h = state
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(u64::from(prev) + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let logits = (0..self.vocab)
            .map(|_| rng.gen_range(-self.sharp..self.sharp))
            .collect();
        Ok((logits, h))
    }
}

fn opts(max_len: usize) -> DecodeOptions {
    DecodeOptions {
        max_len,
        suppress_unk: false,
    }
}

#[test]
fn immediate_eos_gives_empty_story() {
    let m = TableModel::probs(8, &[(&[], &[(EOS, 0.9), (A, 0.1)])]);
    let g = greedy(&m, &opts(10)).unwrap();
    assert!(g.story().is_empty());
    assert_eq!(g.tokens, vec![EOS]);
    assert!(beam_search(&m, 3, &opts(10)).unwrap().story().is_empty());
}

#[test]
fn uniform_logits_emit_lowest_allowed_id_until_max_len() {
    let h = Hyperparams {
        embed_dim: 4,
        hidden_dim: 4,
        vocab_size: 12,
        ..Hyperparams::default()
    };
    let params = ModelParams::<f32>::zeros(&h);
    let model = NeuralModel::new(&params, &h, &[8, 9, SEQ_END]).unwrap();
    let g = greedy(&model, &opts(7)).unwrap();
    assert_eq!(g.tokens, vec![UNK; 7]);
    let suppressed = DecodeOptions {
        suppress_unk: true,
        ..opts(3)
    };
    assert_eq!(greedy(&model, &suppressed).unwrap().tokens, vec![EOS]);
}

#[test]
fn greedy_is_deterministic() {
    let h = Hyperparams {
        embed_dim: 4,
        hidden_dim: 4,
        vocab_size: 15,
        ..Hyperparams::default()
    };
    let params = init_params::<f32>(&h, 3).unwrap();
    let a = generate_ids(&params, &h, &[8, 9, SEQ_END], Strategy::Greedy, &opts(20)).unwrap();
    let b = generate_ids(&params, &h, &[8, 9, SEQ_END], Strategy::Greedy, &opts(20)).unwrap();
    assert_eq!(a, b);
    assert!(matches!(
        generate_ids(&params, &h, &[], Strategy::Greedy, &opts(20)),
        Err(GenError::EmptySource)
    ));
}

#[test]
fn zero_width_is_rejected() {
    let m = TableModel::probs(8, &[]);
    assert!(matches!(
        beam_search(&m, 0, &opts(5)),
        Err(GenError::ZeroWidth)
    ));
}

#[test]
fn beam_finds_path_greedy_misses() {
    let m = TableModel::probs(
        8,
        &[
            (&[], &[(A, 0.5), (B, 0.4), (EOS, 0.1)]),
            (&[A], &[(A, 0.35), (B, 0.35), (EOS, 0.3)]),
            (&[B], &[(EOS, 0.9), (A, 0.05), (B, 0.05)]),
        ],
    );
    let g = greedy(&m, &opts(2)).unwrap();
    assert_eq!(g.tokens, vec![A, A]);
    let b = beam_search(&m, 2, &opts(2)).unwrap();
    assert_eq!(b.tokens, vec![B, EOS]);
    assert!((b.log_prob - (0.4f64 * 0.9).ln()).abs() < 1e-9);
}

/// Enumerate every finished sequence up to `max_len` and pick the best normalized score.
fn exhaustive<M: StepModel>(m: &M, o: &DecodeOptions) -> Hypothesis {
    fn walk<M: StepModel>(
        m: &M,
        o: &DecodeOptions,
        state: M::State,
        tokens: Vec<u32>,
        lp: f64,
        out: &mut Vec<Hypothesis>,
    ) {
        let prev = tokens.last().copied().unwrap_or(BOS);
        let (logits, next) = m.step(&state, prev).unwrap();
        let lsm = log_softmax(&logits);
        for id in 0..m.vocab_size() as u32 {
            if o.is_forbidden(id) {
                continue;
            }
            let mut t = tokens.clone();
            t.push(id);
            let l = lp + lsm[id as usize];
            if id == EOS || t.len() == o.max_len {
                out.push(Hypothesis {
                    tokens: t,
                    log_prob: l,
                    finished: true,
                });
            } else {
                walk(m, o, next.clone(), t, l, out);
            }
        }
    }
    let mut all = Vec::new();
    walk(m, o, m.initial(), Vec::new(), 0.0, &mut all);
    all.into_iter()
        .min_by(|a, b| {
            b.normalized_score()
                .partial_cmp(&a.normalized_score())
                .unwrap()
                .then_with(|| a.tokens.cmp(&b.tokens))
        })
        .unwrap()
}

#[test]
fn wide_beam_equals_exhaustive_search_at_depth_two() {
    for seed in 0..20 {
        let m = RandomModel {
            vocab: 9,
            seed,
            sharp: 3.0,
        };
        let o = opts(2);
        // 5 allowed tokens per step (UNK, EOS, 6, 7, 8): width 64 exceeds every continuation.
        let b = beam_search(&m, 64, &o).unwrap();
        let e = exhaustive(&m, &o);
        assert_eq!(b.tokens, e.tokens, "seed {seed}");
        assert!((b.log_prob - e.log_prob).abs() < 1e-12);
    }
}

#[test]
fn width_one_equals_greedy_on_random_models() {
    for seed in 0..100 {
        let m = RandomModel {
            vocab: 10,
            seed,
            sharp: 2.0,
        };
        let o = opts(12);
        assert_eq!(
            beam_search(&m, 1, &o).unwrap(),
            greedy(&m, &o).unwrap(),
            "seed {seed}"
        );
    }
}

#[test]
fn width_one_equals_greedy_on_small_networks() {
    for seed in 0..10 {
        let h = Hyperparams {
            embed_dim: 3,
            hidden_dim: 4,
            vocab_size: 14,
            ..Hyperparams::default()
        };
        let params = init_params::<f32>(&h, seed).unwrap();
        let o = opts(15);
        let src = [8, 9, 10, SEQ_END];
        let g = generate_ids(&params, &h, &src, Strategy::Greedy, &o).unwrap();
        let b = generate_ids(&params, &h, &src, Strategy::Beam(1), &o).unwrap();
        assert_eq!(g, b, "seed {seed}");
    }
}

#[test]
fn returned_log_prob_matches_recomputation() {
    for seed in 0..30 {
        let m = RandomModel {
            vocab: 12,
            seed,
            sharp: 2.5,
        };
        let hyp = beam_search(&m, 4, &opts(10)).unwrap();
        let mut state = m.initial();
        let mut prev = BOS;
        let mut total = 0.0;
        for &t in &hyp.tokens {
            let (logits, next) = m.step(&state, prev).unwrap();
            let max = logits.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            total += logits[t as usize] - max - z.ln();
            state = next;
            prev = t;
        }
        assert!((hyp.log_prob - total).abs() < 1e-5);
        assert!(hyp.log_prob <= 0.0);
    }
}

#[test]
fn beam_never_loses_to_a_surviving_greedy_hypothesis() {
    for seed in 0..60 {
        let m = RandomModel {
            vocab: 10,
            seed,
            sharp: 2.0,
        };
        let o = opts(8);
        let g = greedy(&m, &o).unwrap();
        for w in [2, 3, 5] {
            let pool = beam_search_pool(&m, w, &o).unwrap();
            if pool.iter().any(|h| h.tokens == g.tokens) {
                assert!(pool[0].normalized_score() >= g.normalized_score() - 1e-12);
            }
        }
    }
}

#[test]
fn output_never_contains_structural_tokens() {
    for seed in 0..40 {
        let m = RandomModel {
            vocab: 10,
            seed,
            sharp: 4.0,
        };
        for hyp in [
            greedy(&m, &opts(10)).unwrap(),
            beam_search(&m, 3, &opts(10)).unwrap(),
        ] {
            assert!(hyp
                .story()
                .iter()
                .all(|t| ![PAD, BOS, DESC_DELIM, SEQ_END, EOS].contains(t)));
            assert!(hyp.finished);
            assert!(hyp.tokens.last() == Some(&EOS) || hyp.tokens.len() == 10);
        }
    }
}

#[test]
fn batch_generation_preserves_input_order() {
    let h = Hyperparams {
        embed_dim: 4,
        hidden_dim: 4,
        vocab_size: 16,
        ..Hyperparams::default()
    };
    let params = init_params::<f32>(&h, 9).unwrap();
    let sources: Vec<Vec<u32>> = (0..12)
        .map(|i| vec![6 + (i % 10) as u32, 7, SEQ_END])
        .collect();
    let o = opts(6);
    let batch = generate_batch_ids(&params, &h, &sources, Strategy::Beam(3), &o).unwrap();
    for (s, out) in sources.iter().zip(&batch) {
        assert_eq!(
            out,
            &generate_ids(&params, &h, s, Strategy::Beam(3), &o).unwrap()
        );
    }
}
