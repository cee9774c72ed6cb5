use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::numkernel::{Real, Streams, Tensor};

/// Scalar model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Drop probability (keep probability is `1 - dropout_rate`).
    pub dropout_rate: f64,
    pub vocab_size: usize,
    pub max_decode_len: usize,
    pub beam_width: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            embed_dim: 256,
            hidden_dim: 256,
            encoder_layers: 1,
            decoder_layers: 2,
            dropout_rate: 0.2,
            vocab_size: 0,
            max_decode_len: 100,
            beam_width: 5,
        }
    }
}

impl Hyperparams {
    /// Defaults with `embed_dim = hidden_dim = dim`.
    pub fn with_dim(vocab_size: usize, dim: usize) -> Self {
        Hyperparams {
            embed_dim: dim,
            hidden_dim: dim,
            vocab_size,
            ..Hyperparams::default()
        }
    }

    pub fn attention_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Hyperparams(m));
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.vocab_size == 0 {
            return bad(format!(
                "dimensions must be ≥ 1 (embed {}, hidden {}, vocab {})",
                self.embed_dim, self.hidden_dim, self.vocab_size
            ));
        }
        if self.encoder_layers != 1 || self.decoder_layers != 2 {
            return bad(format!(
                "only a 1-layer encoder and 2-layer decoder are supported (got {} / {})",
                self.encoder_layers, self.decoder_layers
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.max_decode_len == 0 || self.beam_width == 0 {
            return bad("max_decode_len and beam_width must be ≥ 1".into());
        }
        Ok(())
    }
}

/// Update gate `z`, reset gate `r` and candidate `h` weights of one GRU cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCellParams<T: Real = f32> {
    pub w_z: Tensor<T>,
    pub w_r: Tensor<T>,
    pub w_h: Tensor<T>,
    pub u_z: Tensor<T>,
    pub u_r: Tensor<T>,
    pub u_h: Tensor<T>,
    pub b_z: Tensor<T>,
    pub b_r: Tensor<T>,
    pub b_h: Tensor<T>,
}

const GRU_FIELDS: [&str; 9] = [
    "w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h",
];

impl<T: Real> GruCellParams<T> {
    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[in_dim, hidden]);
        let u = || Tensor::zeros(&[hidden, hidden]);
        let b = || Tensor::zeros(&[hidden]);
        GruCellParams {
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            b_z: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w_z.rows()
    }

    pub fn hidden(&self) -> usize {
        self.u_z.rows()
    }

    pub fn cast<U: Real>(&self) -> GruCellParams<U> {
        GruCellParams {
            w_z: self.w_z.cast(),
            w_r: self.w_r.cast(),
            w_h: self.w_h.cast(),
            u_z: self.u_z.cast(),
            u_r: self.u_r.cast(),
            u_h: self.u_h.cast(),
            b_z: self.b_z.cast(),
            b_r: self.b_r.cast(),
            b_h: self.b_h.cast(),
        }
    }

    fn fields(&self) -> [&Tensor<T>; 9] {
        [
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z, &self.b_r,
            &self.b_h,
        ]
    }

    fn fields_mut(&mut self) -> [&mut Tensor<T>; 9] {
        [
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }
}

/// Every weight of the encoder, attention and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Real = f32> {
    pub src_embed: Tensor<T>,
    pub tgt_embed: Tensor<T>,
    pub enc_fwd: GruCellParams<T>,
    pub enc_bwd: GruCellParams<T>,
    pub dec1: GruCellParams<T>,
    pub dec2: GruCellParams<T>,
    /// Decoder-state projection `W_a` (H × A).
    pub att_w: Tensor<T>,
    /// Annotation projection `U_a` (2H × A).
    pub att_u: Tensor<T>,
    /// Score vector `v_a` (A).
    pub att_v: Tensor<T>,
    pub init_w: Tensor<T>,
    pub init_b: Tensor<T>,
    /// Output projection from `[state ; context]` (3H × V).
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(hp: &Hyperparams) -> Self {
        let (v, e, h, a) = (
            hp.vocab_size,
            hp.embed_dim,
            hp.hidden_dim,
            hp.attention_dim(),
        );
        ModelParams {
            src_embed: Tensor::zeros(&[v, e]),
            tgt_embed: Tensor::zeros(&[v, e]),
            enc_fwd: GruCellParams::zeros(e, h),
            enc_bwd: GruCellParams::zeros(e, h),
            dec1: GruCellParams::zeros(e + 2 * h, h),
            dec2: GruCellParams::zeros(h, h),
            att_w: Tensor::zeros(&[h, a]),
            att_u: Tensor::zeros(&[2 * h, a]),
            att_v: Tensor::zeros(&[a]),
            init_w: Tensor::zeros(&[h, h]),
            init_b: Tensor::zeros(&[h]),
            out_w: Tensor::zeros(&[3 * h, v]),
            out_b: Tensor::zeros(&[v]),
        }
    }

    /// Parameter names in canonical order (the order of [`Self::tensors`]).
    pub fn names() -> Vec<String> {
        let mut names = vec!["src_embed".to_string(), "tgt_embed".to_string()];
        for cell in ["enc_fwd", "enc_bwd", "dec1", "dec2"] {
            names.extend(GRU_FIELDS.iter().map(|f| format!("{cell}.{f}")));
        }
        names.extend(
            [
                "att.w", "att.u", "att.v", "init.w", "init.b", "out.w", "out.b",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.src_embed, &self.tgt_embed];
        for cell in [&self.enc_fwd, &self.enc_bwd, &self.dec1, &self.dec2] {
            out.extend(cell.fields());
        }
        out.extend([
            &self.att_w,
            &self.att_u,
            &self.att_v,
            &self.init_w,
            &self.init_b,
            &self.out_w,
            &self.out_b,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.src_embed, &mut self.tgt_embed];
        for cell in [
            &mut self.enc_fwd,
            &mut self.enc_bwd,
            &mut self.dec1,
            &mut self.dec2,
        ] {
            out.extend(cell.fields_mut());
        }
        out.extend([
            &mut self.att_w,
            &mut self.att_u,
            &mut self.att_v,
            &mut self.init_w,
            &mut self.init_b,
            &mut self.out_w,
            &mut self.out_b,
        ]);
        out
    }

    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        Self::names().into_iter().zip(self.tensors()).collect()
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            src_embed: self.src_embed.cast(),
            tgt_embed: self.tgt_embed.cast(),
            enc_fwd: self.enc_fwd.cast(),
            enc_bwd: self.enc_bwd.cast(),
            dec1: self.dec1.cast(),
            dec2: self.dec2.cast(),
            att_w: self.att_w.cast(),
            att_u: self.att_u.cast(),
            att_v: self.att_v.cast(),
            init_w: self.init_w.cast(),
            init_b: self.init_b.cast(),
            out_w: self.out_w.cast(),
            out_b: self.out_b.cast(),
        }
    }

    /// Rebuild from tensors in canonical order, checking every shape against `hp`.
    pub fn from_tensors(hp: &Hyperparams, tensors: Vec<Tensor<T>>) -> Result<Self, ModelError> {
        let mut params = ModelParams::zeros(hp);
        let names = Self::names();
        if tensors.len() != names.len() {
            return Err(ModelError::Hyperparams(format!(
                "expected {} parameter tensors, got {}",
                names.len(),
                tensors.len()
            )));
        }
        for ((dst, src), name) in params.tensors_mut().into_iter().zip(tensors).zip(&names) {
            if dst.shape() != src.shape() {
                return Err(ModelError::Hyperparams(format!(
                    "{name}: shape {:?} does not match hyperparameters ({:?})",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src;
        }
        Ok(params)
    }
}

/// Glorot-uniform matrices, zero biases, deterministic in `seed`.
///
/// The attention score vector is drawn with the bound of a square A×A layer.
pub fn init_params<T: Real>(hp: &Hyperparams, seed: u64) -> Result<ModelParams<T>, ModelError> {
    hp.validate()?;
    let mut params = ModelParams::<T>::zeros(hp);
    let mut rng = Streams::new(seed).stream("init");
    for (name, t) in ModelParams::<T>::names().iter().zip(params.tensors_mut()) {
        let (fan_in, fan_out) = match t.shape() {
            [r, c] => (*r, *c),
            [n] if name == "att.v" => (*n, *n),
            _ => continue,
        };
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in t.data_mut() {
            *v = T::lit(rng.gen_range(-bound..bound));
        }
    }
    Ok(params)
}
