//! Bidirectional GRU encoder, additive attention and a two-layer GRU decoder.
//!
//! The graph code in [`graph`] works on batched rows and is shared by training
//! and inference. The free functions here are single-sequence conveniences.

pub mod graph;
mod params;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Batch, Grid};
use crate::numkernel::{KernelError, Real, Tape, Tensor};
use graph::{EncodedNodes, GruNodes, ParamNodes};

pub use params::{init_params, GruCellParams, Hyperparams, ModelParams};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("empty source")]
    EmptySource,
    #[error("all source positions are masked")]
    AllMasked,
    #[error("token id {0} is outside the vocabulary")]
    InvalidToken(u32),
    #[error("batch has no target tokens")]
    NoTargetTokens,
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
}

/// Encoder output for one source sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotations<T: Real = f32> {
    /// `src_len × 2H`, row t = `[h⃗_t ; h⃖_t]`.
    pub matrix: Tensor<T>,
    /// `src_len × A`, row t = `annotation_t · U_a` (cached for attention).
    pub keys: Tensor<T>,
    /// `true` where the position is a real token.
    pub mask: Vec<bool>,
}

impl<T: Real> Annotations<T> {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    fn register<'a>(
        &'a self,
        tape: &mut Tape<'a, T>,
        init: crate::numkernel::NodeId,
    ) -> Result<EncodedNodes, ModelError> {
        let ann = tape.leaf_ref(&self.matrix);
        let keys = tape.leaf_ref(&self.keys);
        Ok(EncodedNodes {
            annotations: tape.reshape(ann, &[1, self.matrix.len()])?,
            keys: tape.reshape(keys, &[1, self.keys.len()])?,
            mask: self.mask.clone(),
            src_len: self.len(),
            rows: 1,
            init,
        })
    }
}

/// Decoder layer-1 and layer-2 hidden states.
pub type DecoderState<T = f32> = [Tensor<T>; 2];

/// One GRU step on a single vector (or a batch of rows).
pub fn gru_cell<T: Real>(
    x: &Tensor<T>,
    h_prev: &Tensor<T>,
    p: &GruCellParams<T>,
) -> Result<Tensor<T>, ModelError> {
    let mut tape = Tape::new();
    let as_rows = |t: &Tensor<T>| {
        if t.rank() == 1 {
            t.reshape(&[1, t.len()])
        } else {
            Ok(t.clone())
        }
    };
    let x_node = tape.leaf(as_rows(x)?);
    let h_node = tape.leaf(as_rows(h_prev)?);
    let nodes = GruNodes::register(&mut tape, p);
    let out = graph::gru_cell_nodes(&mut tape, x_node, h_node, &nodes)?;
    let value = tape.value(out).clone();
    if h_prev.rank() == 1 {
        Ok(value.reshape(&[value.len()])?)
    } else {
        Ok(value)
    }
}

/// Encode one source sequence. Returns its annotations and the initial state of
/// both decoder layers.
pub fn encode<T: Real>(
    source_ids: &[u32],
    params: &ModelParams<T>,
    hp: &Hyperparams,
    train_rng: Option<&mut ChaCha8Rng>,
) -> Result<(Annotations<T>, DecoderState<T>), ModelError> {
    if source_ids.is_empty() {
        return Err(ModelError::EmptySource);
    }
    check_ids(source_ids, hp)?;
    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, params)?;
    let source = Grid::new(1, source_ids.len(), source_ids.to_vec());
    let mask = vec![true; source_ids.len()];
    let enc = graph::encode_nodes(&mut tape, &nodes, &source, &mask, hp, train_rng)?;
    let len = source_ids.len();
    let annotations = Annotations {
        matrix: tape
            .value(enc.annotations)
            .reshape(&[len, 2 * hp.hidden_dim])?,
        keys: tape.value(enc.keys).reshape(&[len, hp.attention_dim()])?,
        mask,
    };
    let init = tape.value(enc.init).reshape(&[hp.hidden_dim])?;
    Ok((annotations, [init.clone(), init]))
}

/// Attention of a single decoder state over the annotations.
/// Returns `(context (2H), weights (src_len))`.
pub fn attend<T: Real>(
    dec_state: &Tensor<T>,
    ann: &Annotations<T>,
    params: &ModelParams<T>,
) -> Result<(Tensor<T>, Tensor<T>), ModelError> {
    if ann.is_empty() {
        return Err(ModelError::EmptySource);
    }
    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, params)?;
    let query = tape.leaf(dec_state.reshape(&[1, dec_state.len()])?);
    let enc = ann.register(&mut tape, query)?;
    let (ctx, weights) = graph::attend_nodes(&mut tape, &nodes, query, &enc)?;
    let ctx = tape.value(ctx);
    let weights = tape.value(weights);
    Ok((
        ctx.reshape(&[ctx.len()])?,
        weights.reshape(&[weights.len()])?,
    ))
}

/// One decoder step for a single sequence. Returns `(logits (V), new states)`.
pub fn decode_step<T: Real>(
    y_prev: u32,
    states: &DecoderState<T>,
    ann: &Annotations<T>,
    params: &ModelParams<T>,
    hp: &Hyperparams,
    train_rng: Option<&mut ChaCha8Rng>,
) -> Result<(Tensor<T>, DecoderState<T>), ModelError> {
    check_ids(&[y_prev], hp)?;
    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, params)?;
    let h = hp.hidden_dim;
    let s1 = tape.leaf(states[0].reshape(&[1, h])?);
    let s2 = tape.leaf(states[1].reshape(&[1, h])?);
    let enc = ann.register(&mut tape, s1)?;
    let (logits, [n1, n2]) =
        graph::decode_step_nodes(&mut tape, &nodes, &[y_prev], [s1, s2], &enc, hp, train_rng)?;
    let flat = |id| tape.value(id).reshape(&[tape.value(id).len()]);
    Ok((flat(logits)?, [flat(n1)?, flat(n2)?]))
}

/// Teacher-forced mean token cross-entropy over a batch.
pub fn forward_loss<T: Real>(
    batch: &Batch,
    params: &ModelParams<T>,
    hp: &Hyperparams,
    train_rng: Option<&mut ChaCha8Rng>,
) -> Result<T, ModelError> {
    check_batch(batch, hp)?;
    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, params)?;
    let loss = graph::forward_loss_nodes(&mut tape, &nodes, batch, hp, train_rng)?;
    Ok(tape.value(loss).item())
}

/// Loss and its gradient with respect to every parameter, in the order of
/// [`ModelParams::tensors`].
pub fn loss_and_grads<T: Real>(
    batch: &Batch,
    params: &ModelParams<T>,
    hp: &Hyperparams,
    train_rng: Option<&mut ChaCha8Rng>,
) -> Result<(T, Vec<Tensor<T>>), ModelError> {
    check_batch(batch, hp)?;
    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, params)?;
    let loss = graph::forward_loss_nodes(&mut tape, &nodes, batch, hp, train_rng)?;
    let mut grads = tape.backward(loss)?;
    let value = tape.value(loss).item();
    Ok((
        value,
        nodes.ids().into_iter().map(|id| grads.take(id)).collect(),
    ))
}

fn check_ids(ids: &[u32], hp: &Hyperparams) -> Result<(), ModelError> {
    match ids.iter().find(|&&i| i as usize >= hp.vocab_size) {
        Some(&bad) => Err(ModelError::InvalidToken(bad)),
        None => Ok(()),
    }
}

fn check_batch(batch: &Batch, hp: &Hyperparams) -> Result<(), ModelError> {
    check_ids(batch.source.data(), hp)?;
    check_ids(batch.target.data(), hp)
}

#[cfg(test)]
mod tests;
