//! The encoder/decoder expressed as tape operations over batched rows.

use rand_chacha::ChaCha8Rng;

use super::{GruCellParams, Hyperparams, ModelError, ModelParams};
use crate::corpus::{Batch, IdMatrix};
use crate::numkernel::{NodeId, Real, Tape, Tensor};

/// Tape handles for one GRU cell's weights.
#[derive(Debug, Clone, Copy)]
pub struct GruNodes {
    w_z: NodeId,
    w_r: NodeId,
    w_h: NodeId,
    u_z: NodeId,
    u_r: NodeId,
    u_h: NodeId,
    b_z: NodeId,
    b_r: NodeId,
    b_h: NodeId,
}

impl GruNodes {
    pub fn register<'a, T: Real>(tape: &mut Tape<'a, T>, p: &'a GruCellParams<T>) -> Self {
        GruNodes {
            w_z: tape.leaf_ref(&p.w_z),
            w_r: tape.leaf_ref(&p.w_r),
            w_h: tape.leaf_ref(&p.w_h),
            u_z: tape.leaf_ref(&p.u_z),
            u_r: tape.leaf_ref(&p.u_r),
            u_h: tape.leaf_ref(&p.u_h),
            b_z: tape.leaf_ref(&p.b_z),
            b_r: tape.leaf_ref(&p.b_r),
            b_h: tape.leaf_ref(&p.b_h),
        }
    }

    fn ids(&self) -> [NodeId; 9] {
        [
            self.w_z, self.w_r, self.w_h, self.u_z, self.u_r, self.u_h, self.b_z, self.b_r,
            self.b_h,
        ]
    }
}

/// Tape handles for every model parameter.
#[derive(Debug, Clone)]
pub struct ParamNodes {
    pub src_embed: NodeId,
    pub tgt_embed: NodeId,
    pub enc_fwd: GruNodes,
    pub enc_bwd: GruNodes,
    pub dec1: GruNodes,
    pub dec2: GruNodes,
    pub att_w: NodeId,
    pub att_u: NodeId,
    att_v_leaf: NodeId,
    /// `v_a` viewed as an A×1 column.
    pub att_v: NodeId,
    pub init_w: NodeId,
    pub init_b: NodeId,
    pub out_w: NodeId,
    pub out_b: NodeId,
}

impl ParamNodes {
    /// Borrow every parameter into `tape` as a leaf.
    pub fn register<'a, T: Real>(
        tape: &mut Tape<'a, T>,
        p: &'a ModelParams<T>,
    ) -> Result<Self, ModelError> {
        let src_embed = tape.leaf_ref(&p.src_embed);
        let tgt_embed = tape.leaf_ref(&p.tgt_embed);
        let enc_fwd = GruNodes::register(tape, &p.enc_fwd);
        let enc_bwd = GruNodes::register(tape, &p.enc_bwd);
        let dec1 = GruNodes::register(tape, &p.dec1);
        let dec2 = GruNodes::register(tape, &p.dec2);
        let att_w = tape.leaf_ref(&p.att_w);
        let att_u = tape.leaf_ref(&p.att_u);
        let att_v_leaf = tape.leaf_ref(&p.att_v);
        let init_w = tape.leaf_ref(&p.init_w);
        let init_b = tape.leaf_ref(&p.init_b);
        let out_w = tape.leaf_ref(&p.out_w);
        let out_b = tape.leaf_ref(&p.out_b);
        let att_v = tape.reshape(att_v_leaf, &[p.att_v.len(), 1])?;
        Ok(ParamNodes {
            src_embed,
            tgt_embed,
            enc_fwd,
            enc_bwd,
            dec1,
            dec2,
            att_w,
            att_u,
            att_v_leaf,
            att_v,
            init_w,
            init_b,
            out_w,
            out_b,
        })
    }

    /// Leaf ids in the canonical order of [`ModelParams::tensors`].
    pub fn ids(&self) -> Vec<NodeId> {
        let mut out = vec![self.src_embed, self.tgt_embed];
        for cell in [&self.enc_fwd, &self.enc_bwd, &self.dec1, &self.dec2] {
            out.extend(cell.ids());
        }
        out.extend([
            self.att_w,
            self.att_u,
            self.att_v_leaf,
            self.init_w,
            self.init_b,
            self.out_w,
            self.out_b,
        ]);
        out
    }
}

fn affine<T: Real>(
    tape: &mut Tape<'_, T>,
    x: NodeId,
    w: NodeId,
    h: NodeId,
    u: NodeId,
    b: NodeId,
) -> Result<NodeId, ModelError> {
    let xw = tape.matmul(x, w)?;
    let hu = tape.matmul(h, u)?;
    let s = tape.add(xw, hu)?;
    Ok(tape.add(s, b)?)
}

/// `h = z⊙h_prev + (1−z)⊙ĥ`, computed as `ĥ + z⊙(h_prev − ĥ)`.
pub fn gru_cell_nodes<T: Real>(
    tape: &mut Tape<'_, T>,
    x: NodeId,
    h_prev: NodeId,
    p: &GruNodes,
) -> Result<NodeId, ModelError> {
    let z_pre = affine(tape, x, p.w_z, h_prev, p.u_z, p.b_z)?;
    let z = tape.sigmoid(z_pre)?;
    let r_pre = affine(tape, x, p.w_r, h_prev, p.u_r, p.b_r)?;
    let r = tape.sigmoid(r_pre)?;
    let rh = tape.mul_elem(r, h_prev)?;
    let cand_pre = affine(tape, x, p.w_h, rh, p.u_h, p.b_h)?;
    let cand = tape.tanh(cand_pre)?;
    let diff = tape.sub(h_prev, cand)?;
    let gated = tape.mul_elem(z, diff)?;
    Ok(tape.add(cand, gated)?)
}

/// Encoder outputs for a batch, with positions laid side by side in each row.
#[derive(Debug, Clone)]
pub struct EncodedNodes {
    /// B × S·2H; block t of row b is `[h⃗_t ; h⃖_t]`.
    pub annotations: NodeId,
    /// B × S·A; block t of row b is `annotation_t · U_a`.
    pub keys: NodeId,
    /// Row-major B × S validity mask.
    pub mask: Vec<bool>,
    pub src_len: usize,
    pub rows: usize,
    /// Initial state for both decoder layers, B × H.
    pub init: NodeId,
}

fn column_mask(mask: &[bool], rows: usize, cols: usize, c: usize) -> Vec<bool> {
    (0..rows).map(|r| mask[r * cols + c]).collect()
}

/// Advance rows where `keep` is set; other rows carry `h_prev` unchanged.
fn masked_update<T: Real>(
    tape: &mut Tape<'_, T>,
    keep: &[bool],
    new: NodeId,
    prev: NodeId,
) -> Result<NodeId, ModelError> {
    if keep.iter().all(|&k| k) {
        Ok(new)
    } else if keep.iter().all(|&k| !k) {
        Ok(prev)
    } else {
        Ok(tape.select_rows(keep, new, prev)?)
    }
}

/// Bidirectional GRU over the embedded source, decoder initialization from the
/// backward state at the first position.
pub fn encode_nodes<T: Real>(
    tape: &mut Tape<'_, T>,
    p: &ParamNodes,
    source: &IdMatrix,
    mask: &[bool],
    hp: &Hyperparams,
    mut train_rng: Option<&mut ChaCha8Rng>,
) -> Result<EncodedNodes, ModelError> {
    let (rows, len) = (source.rows(), source.cols());
    if rows == 0 || len == 0 {
        return Err(ModelError::EmptySource);
    }
    let h = hp.hidden_dim;
    let mut inputs = Vec::with_capacity(len);
    for t in 0..len {
        let ids: Vec<usize> = source.column(t).iter().map(|&i| i as usize).collect();
        let emb = tape.embed_lookup(p.src_embed, &ids)?;
        let emb = match train_rng.as_deref_mut() {
            Some(rng) => tape.dropout(emb, hp.dropout_rate, true, rng)?,
            None => emb,
        };
        inputs.push(emb);
    }

    let zero = tape.leaf(Tensor::zeros(&[rows, h]));
    let mut fwd = Vec::with_capacity(len);
    let mut state = zero;
    for (t, &x) in inputs.iter().enumerate() {
        let keep = column_mask(mask, rows, len, t);
        let next = gru_cell_nodes(tape, x, state, &p.enc_fwd)?;
        state = masked_update(tape, &keep, next, state)?;
        fwd.push(state);
    }
    let mut bwd = vec![zero; len];
    state = zero;
    for t in (0..len).rev() {
        let keep = column_mask(mask, rows, len, t);
        let next = gru_cell_nodes(tape, inputs[t], state, &p.enc_bwd)?;
        state = masked_update(tape, &keep, next, state)?;
        bwd[t] = state;
    }

    let mut parts = Vec::with_capacity(2 * len);
    for t in 0..len {
        parts.extend([fwd[t], bwd[t]]);
    }
    let annotations = tape.concat(&parts)?;
    let per_position = tape.reshape(annotations, &[rows * len, 2 * h])?;
    let keys = tape.matmul(per_position, p.att_u)?;
    let att_dim = tape.value(keys).cols();
    let keys = tape.reshape(keys, &[rows, len * att_dim])?;
    let proj = tape.matmul(bwd[0], p.init_w)?;
    let proj = tape.add(proj, p.init_b)?;
    let init = tape.tanh(proj)?;
    Ok(EncodedNodes {
        annotations,
        keys,
        mask: mask.to_vec(),
        src_len: len,
        rows,
        init,
    })
}

/// Additive attention: `score_j = v_aᵀ tanh(s·W_a + ann_j·U_a)`, masked softmax,
/// weighted sum of annotations. Returns `(context B×2H, weights B×S)`.
pub fn attend_nodes<T: Real>(
    tape: &mut Tape<'_, T>,
    p: &ParamNodes,
    query: NodeId,
    enc: &EncodedNodes,
) -> Result<(NodeId, NodeId), ModelError> {
    let (rows, len) = (enc.rows, enc.src_len);
    let q = tape.matmul(query, p.att_w)?;
    let att_dim = tape.value(q).cols();
    let q = tape.tile_cols(q, len)?;
    let pre = tape.add(q, enc.keys)?;
    let energy = tape.tanh(pre)?;
    let energy = tape.reshape(energy, &[rows * len, att_dim])?;
    let scores = tape.matmul(energy, p.att_v)?;
    let scores = tape.reshape(scores, &[rows, len])?;
    let weights = tape
        .softmax_rows(scores, Some(&enc.mask))
        .map_err(|e| match e {
            crate::numkernel::KernelError::AllMasked { .. } => ModelError::AllMasked,
            other => other.into(),
        })?;
    let ann_width = tape.value(enc.annotations).cols() / len;
    let flat_w = tape.reshape(weights, &[rows * len])?;
    let ann = tape.reshape(enc.annotations, &[rows * len, ann_width])?;
    let weighted = tape.mul_column(flat_w, ann)?;
    let weighted = tape.reshape(weighted, &[rows, len * ann_width])?;
    let context = tape.sum_col_blocks(weighted, ann_width)?;
    Ok((context, weights))
}

/// Decoder state: layer-1 and layer-2 hidden states, each B × H.
pub type DecoderNodes = [NodeId; 2];

/// One decoder time step. Attention is queried with the previous layer-2 state.
pub fn decode_step_nodes<T: Real>(
    tape: &mut Tape<'_, T>,
    p: &ParamNodes,
    y_prev: &[u32],
    states: DecoderNodes,
    enc: &EncodedNodes,
    hp: &Hyperparams,
    train_rng: Option<&mut ChaCha8Rng>,
) -> Result<(NodeId, DecoderNodes), ModelError> {
    let ids: Vec<usize> = y_prev
        .iter()
        .map(|&i| {
            if (i as usize) < hp.vocab_size {
                Ok(i as usize)
            } else {
                Err(ModelError::InvalidToken(i))
            }
        })
        .collect::<Result<_, _>>()?;
    let (context, _) = attend_nodes(tape, p, states[1], enc)?;
    let emb = tape.embed_lookup(p.tgt_embed, &ids)?;
    let in1 = tape.concat(&[emb, context])?;
    let s1 = gru_cell_nodes(tape, in1, states[0], &p.dec1)?;
    let in2 = match train_rng {
        Some(rng) => tape.dropout(s1, hp.dropout_rate, true, rng)?,
        None => s1,
    };
    let s2 = gru_cell_nodes(tape, in2, states[1], &p.dec2)?;
    let out_in = tape.concat(&[s2, context])?;
    let logits = tape.matmul(out_in, p.out_w)?;
    let logits = tape.add(logits, p.out_b)?;
    Ok((logits, [s1, s2]))
}

/// Teacher-forced cross-entropy summed over non-PAD target positions and divided
/// by their count. Returns the scalar loss node.
pub fn forward_loss_nodes<T: Real>(
    tape: &mut Tape<'_, T>,
    p: &ParamNodes,
    batch: &Batch,
    hp: &Hyperparams,
    mut train_rng: Option<&mut ChaCha8Rng>,
) -> Result<NodeId, ModelError> {
    let supervised = batch.target_tokens();
    if supervised == 0 {
        return Err(ModelError::NoTargetTokens);
    }
    let src_mask: Vec<bool> = batch.source_mask.data().iter().map(|&m| m == 1).collect();
    let enc = encode_nodes(
        tape,
        p,
        &batch.source,
        &src_mask,
        hp,
        train_rng.as_deref_mut(),
    )?;
    let mut states = [enc.init, enc.init];
    let mut step_losses = Vec::new();
    for t in 1..batch.target.cols() {
        let mask = batch.target_mask.column(t);
        if mask.iter().all(|&m| m == 0) {
            continue;
        }
        let y_prev = batch.target.column(t - 1);
        let (logits, next) =
            decode_step_nodes(tape, p, &y_prev, states, &enc, hp, train_rng.as_deref_mut())?;
        states = next;
        let gold: Vec<usize> = batch.target.column(t).iter().map(|&i| i as usize).collect();
        let ce = tape.cross_entropy_rows(logits, &gold)?;
        let weights = tape.leaf(Tensor::vector(
            mask.iter().map(|&m| T::lit(f64::from(m))).collect(),
        ));
        step_losses.push(tape.mul_elem(ce, weights)?);
    }
    let all = tape.concat(&step_losses)?;
    let total = tape.sum(all)?;
    Ok(tape.scale(total, T::one() / T::lit(supervised as f64))?)
}
