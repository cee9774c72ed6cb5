//! Greedy and beam-search decoding over any step-wise next-token model.

use std::cmp::Ordering;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{
    detokenize, encode_source, Example, Vocab, BOS, DESC_DELIM, EOS, PAD, SEQ_END, UNK,
};
use crate::model::{
    decode_step, encode, Annotations, DecoderState, Hyperparams, ModelError, ModelParams,
};

/// Length normalization exponent used to rank finished hypotheses.
pub const LENGTH_ALPHA: f64 = 0.7;

#[derive(Debug, Error)]
pub enum GenError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("beam width must be ≥ 1")]
    ZeroWidth,
    #[error("max decode length must be ≥ 1")]
    ZeroLength,
    #[error("empty source")]
    EmptySource,
    #[error("model returned {got} logits for a vocabulary of {expected}")]
    LogitCount { got: usize, expected: usize },
}

/// A next-token model: produces logits over the vocabulary given the previous token.
pub trait StepModel {
    type State: Clone;
    fn vocab_size(&self) -> usize;
    fn initial(&self) -> Self::State;
    fn step(&self, state: &Self::State, prev: u32) -> Result<(Vec<f64>, Self::State), GenError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeOptions {
    pub max_len: usize,
    pub suppress_unk: bool,
}

impl DecodeOptions {
    pub fn from_hyperparams(hp: &Hyperparams) -> Self {
        DecodeOptions {
            max_len: hp.max_decode_len,
            suppress_unk: false,
        }
    }

    /// Tokens that may never be emitted.
    pub fn is_forbidden(&self, id: u32) -> bool {
        matches!(id, PAD | BOS | DESC_DELIM | SEQ_END) || (self.suppress_unk && id == UNK)
    }
}

/// A finished or partial output sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens, including a final EOS when present.
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// `log_prob / len^α`.
    pub fn normalized_score(&self) -> f64 {
        self.log_prob / (self.tokens.len().max(1) as f64).powf(LENGTH_ALPHA)
    }

    /// Story tokens with EOS stripped.
    pub fn story(&self) -> &[u32] {
        match self.tokens.last() {
            Some(&EOS) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

fn scored_step<M: StepModel>(
    model: &M,
    state: &M::State,
    prev: u32,
) -> Result<(Vec<f64>, M::State), GenError> {
    let (logits, next) = model.step(state, prev)?;
    if logits.len() != model.vocab_size() {
        return Err(GenError::LogitCount {
            got: logits.len(),
            expected: model.vocab_size(),
        });
    }
    Ok((log_softmax(&logits), next))
}

/// Argmax decoding; ties go to the lowest id.
pub fn greedy<M: StepModel>(model: &M, opts: &DecodeOptions) -> Result<Hypothesis, GenError> {
    if opts.max_len == 0 {
        return Err(GenError::ZeroLength);
    }
    let mut state = model.initial();
    let mut prev = BOS;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    while hyp.tokens.len() < opts.max_len {
        let (lp, next) = scored_step(model, &state, prev)?;
        let mut best: Option<u32> = None;
        for (id, &v) in lp.iter().enumerate() {
            let id = id as u32;
            if !opts.is_forbidden(id) && best.is_none_or(|b| v > lp[b as usize]) {
                best = Some(id);
            }
        }
        let tok = best.unwrap_or(EOS);
        hyp.tokens.push(tok);
        hyp.log_prob += lp[tok as usize];
        state = next;
        prev = tok;
        if tok == EOS {
            break;
        }
    }
    hyp.finished = true;
    Ok(hyp)
}

struct Live<S> {
    tokens: Vec<u32>,
    log_prob: f64,
    state: S,
}

/// Beam search returning every completed hypothesis, best first.
pub fn beam_search_pool<M: StepModel>(
    model: &M,
    width: usize,
    opts: &DecodeOptions,
) -> Result<Vec<Hypothesis>, GenError> {
    if width == 0 {
        return Err(GenError::ZeroWidth);
    }
    if opts.max_len == 0 {
        return Err(GenError::ZeroLength);
    }
    let mut live = vec![Live {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: model.initial(),
    }];
    let mut pool: Vec<Hypothesis> = Vec::new();
    while !live.is_empty() && pool.len() < width {
        let mut expansions = Vec::with_capacity(live.len());
        for hyp in &live {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS);
            expansions.push(scored_step(model, &hyp.state, prev)?);
        }
        // (hypothesis index, token, cumulative log-prob)
        let mut cands: Vec<(usize, u32, f64)> = Vec::new();
        for (h, (lp, _)) in expansions.iter().enumerate() {
            for (id, &v) in lp.iter().enumerate() {
                if !opts.is_forbidden(id as u32) {
                    cands.push((h, id as u32, live[h].log_prob + v));
                }
            }
        }
        // Live prefixes share one length, so comparing (prefix, token) is lexicographic order.
        cands.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(Ordering::Equal)
                .then_with(|| live[a.0].tokens.cmp(&live[b.0].tokens))
                .then_with(|| a.1.cmp(&b.1))
        });

        let mut next_live = Vec::with_capacity(width);
        for (h, id, log_prob) in cands {
            // Later candidates of this step score no better than those already taken.
            if next_live.len() == width || pool.len() >= width {
                break;
            }
            let mut tokens = live[h].tokens.clone();
            tokens.push(id);
            if id == EOS || tokens.len() == opts.max_len {
                pool.push(Hypothesis {
                    tokens,
                    log_prob,
                    finished: true,
                });
            } else {
                next_live.push(Live {
                    tokens,
                    log_prob,
                    state: expansions[h].1.clone(),
                });
            }
        }
        live = next_live;
    }
    pool.sort_by(|a, b| {
        b.normalized_score()
            .partial_cmp(&a.normalized_score())
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    Ok(pool)
}

/// Beam search; returns the completed hypothesis with the best length-normalized score.
pub fn beam_search<M: StepModel>(
    model: &M,
    width: usize,
    opts: &DecodeOptions,
) -> Result<Hypothesis, GenError> {
    let pool = beam_search_pool(model, width, opts)?;
    Ok(pool
        .into_iter()
        .next()
        .expect("beam search always completes a hypothesis"))
}

/// The trained network conditioned on one encoded source.
pub struct NeuralModel<'a> {
    params: &'a ModelParams<f32>,
    hp: &'a Hyperparams,
    ann: Annotations<f32>,
    init: DecoderState<f32>,
}

impl<'a> NeuralModel<'a> {
    pub fn new(
        params: &'a ModelParams<f32>,
        hp: &'a Hyperparams,
        source_ids: &[u32],
    ) -> Result<Self, GenError> {
        if source_ids.is_empty() {
            return Err(GenError::EmptySource);
        }
        let (ann, init) = encode(source_ids, params, hp, None)?;
        Ok(NeuralModel {
            params,
            hp,
            ann,
            init,
        })
    }
}

impl StepModel for NeuralModel<'_> {
    type State = DecoderState<f32>;

    fn vocab_size(&self) -> usize {
        self.hp.vocab_size
    }

    fn initial(&self) -> Self::State {
        self.init.clone()
    }

    fn step(&self, state: &Self::State, prev: u32) -> Result<(Vec<f64>, Self::State), GenError> {
        let (logits, next) = decode_step(prev, state, &self.ann, self.params, self.hp, None)?;
        Ok((logits.data().iter().map(|&v| f64::from(v)).collect(), next))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Greedy,
    Beam(usize),
}

/// Decode one source sequence and return the story ids.
pub fn generate_ids(
    params: &ModelParams<f32>,
    hp: &Hyperparams,
    source_ids: &[u32],
    strategy: Strategy,
    opts: &DecodeOptions,
) -> Result<Vec<u32>, GenError> {
    let model = NeuralModel::new(params, hp, source_ids)?;
    let hyp = match strategy {
        Strategy::Greedy => greedy(&model, opts)?,
        Strategy::Beam(w) => beam_search(&model, w, opts)?,
    };
    Ok(hyp.story().to_vec())
}

/// Decode many sources in parallel; output order follows input order.
pub fn generate_batch_ids(
    params: &ModelParams<f32>,
    hp: &Hyperparams,
    sources: &[Vec<u32>],
    strategy: Strategy,
    opts: &DecodeOptions,
) -> Result<Vec<Vec<u32>>, GenError> {
    sources
        .par_iter()
        .map(|s| generate_ids(params, hp, s, strategy, opts))
        .collect()
}

/// Detokenized stories for each example, in input order.
pub fn generate_stories(
    params: &ModelParams<f32>,
    hp: &Hyperparams,
    vocab: &Vocab,
    examples: &[Example],
    strategy: Strategy,
    opts: &DecodeOptions,
) -> Result<Vec<String>, GenError> {
    let sources: Vec<Vec<u32>> = examples
        .iter()
        .map(|e| encode_source(&e.descriptions, vocab))
        .collect();
    let ids = generate_batch_ids(params, hp, &sources, strategy, opts)?;
    Ok(ids.iter().map(|s| detokenize(&vocab.decode(s))).collect())
}

#[cfg(test)]
mod tests;
