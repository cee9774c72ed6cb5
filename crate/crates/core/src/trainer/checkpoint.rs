//! Binary checkpoint: little-endian, magic `D2S1`, versioned header, tensor
//! directory, then a payload of 32-bit floats.

use std::path::{Path, PathBuf};

use thiserror::Error;

use super::AdamState;
use crate::corpus::Vocab;
use crate::model::{Hyperparams, ModelParams};
use crate::numkernel::Tensor;

pub const MAGIC: &[u8; 4] = b"D2S1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Everything needed to resume training or to generate without outside configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub hp: Hyperparams,
    pub params: ModelParams<f32>,
    pub adam: Option<AdamState>,
    pub vocab: Option<Vocab>,
    /// Iterations completed when the checkpoint was written.
    pub iteration: u64,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let out = self
            .buf
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("invalid UTF-8 string".into()))
    }
}

fn write_hyperparams(w: &mut Writer, hp: &Hyperparams) {
    for v in [
        hp.embed_dim,
        hp.hidden_dim,
        hp.encoder_layers,
        hp.decoder_layers,
        hp.vocab_size,
        hp.max_decode_len,
        hp.beam_width,
    ] {
        w.u32(v as u32);
    }
    w.f64(hp.dropout_rate);
}

fn read_hyperparams(r: &mut Reader) -> Result<Hyperparams, CheckpointError> {
    let mut f = [0usize; 7];
    for v in &mut f {
        *v = r.u32()? as usize;
    }
    let hp = Hyperparams {
        embed_dim: f[0],
        hidden_dim: f[1],
        encoder_layers: f[2],
        decoder_layers: f[3],
        vocab_size: f[4],
        max_decode_len: f[5],
        beam_width: f[6],
        dropout_rate: r.f64()?,
    };
    hp.validate()
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    Ok(hp)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let names = ModelParams::<f32>::names();
        let mut named: Vec<(String, &Tensor<f32>)> =
            names.iter().cloned().zip(self.params.tensors()).collect();
        if let Some(adam) = &self.adam {
            named.extend(names.iter().map(|n| format!("adam.m.{n}")).zip(&adam.m));
            named.extend(names.iter().map(|n| format!("adam.v.{n}")).zip(&adam.v));
        }

        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        write_hyperparams(&mut w, &self.hp);
        w.u64(self.iteration);
        match &self.adam {
            Some(a) => {
                w.u8(1);
                w.u64(a.step);
                for v in [a.lr, a.beta1, a.beta2, a.eps] {
                    w.f64(v);
                }
            }
            None => w.u8(0),
        }
        match &self.vocab {
            Some(v) => {
                w.u8(1);
                w.u32(v.entries().count() as u32);
                for (tok, count) in v.entries() {
                    w.str(tok);
                    w.u64(count);
                }
            }
            None => w.u8(0),
        }
        w.u32(named.len() as u32);
        let mut offset = 0u64;
        for (name, t) in &named {
            w.str(name);
            w.u32(t.rank() as u32);
            for &d in t.shape() {
                w.u32(d as u32);
            }
            w.u64(offset);
            offset += t.len() as u64;
        }
        w.u64(offset);
        for (_, t) in &named {
            for &x in t.data() {
                w.0.extend_from_slice(&x.to_le_bytes());
            }
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CheckpointError> {
        if buf.len() < 4 || &buf[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut r = Reader { buf, pos: 4 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let hp = read_hyperparams(&mut r)?;
        let iteration = r.u64()?;
        let adam_header = match r.u8()? {
            0 => None,
            1 => Some((r.u64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?)),
            f => return Err(CheckpointError::Corrupt(format!("bad optimizer flag {f}"))),
        };
        let vocab = match r.u8()? {
            0 => None,
            1 => {
                let n = r.u32()? as usize;
                let mut entries = Vec::with_capacity(n.min(1 << 20));
                for _ in 0..n {
                    entries.push((r.str()?, r.u64()?));
                }
                Some(Vocab::from_entries(entries))
            }
            f => return Err(CheckpointError::Corrupt(format!("bad vocabulary flag {f}"))),
        };

        let count = r.u32()? as usize;
        let mut dir = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = r.str()?;
            let rank = r.u32()? as usize;
            if rank > 2 {
                return Err(CheckpointError::Corrupt(format!("{name}: rank {rank}")));
            }
            let dims = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let offset = r.u64()? as usize;
            dir.push((name, dims, offset));
        }
        let total = r.u64()? as usize;
        let payload = r.take(total.checked_mul(4).ok_or(CheckpointError::Truncated)?)?;
        if r.pos != buf.len() {
            return Err(CheckpointError::Corrupt(
                "trailing bytes after payload".into(),
            ));
        }

        let mut tensors = std::collections::HashMap::new();
        for (name, dims, offset) in dir {
            let len: usize = dims.iter().product();
            if offset + len > total {
                return Err(CheckpointError::Corrupt(format!(
                    "{name}: data outside payload"
                )));
            }
            let data = payload[offset * 4..(offset + len) * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(dims, data).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
            tensors.insert(name, t);
        }
        let names = ModelParams::<f32>::names();
        let mut take = |name: &str| {
            tensors
                .remove(name)
                .ok_or_else(|| CheckpointError::Corrupt(format!("missing tensor {name}")))
        };
        let params_list = names
            .iter()
            .map(|n| take(n))
            .collect::<Result<Vec<_>, _>>()?;
        let params = ModelParams::from_tensors(&hp, params_list)
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        let adam = match adam_header {
            None => None,
            Some((step, lr, beta1, beta2, eps)) => {
                let m = names
                    .iter()
                    .map(|n| take(&format!("adam.m.{n}")))
                    .collect::<Result<Vec<_>, _>>()?;
                let v = names
                    .iter()
                    .map(|n| take(&format!("adam.v.{n}")))
                    .collect::<Result<Vec<_>, _>>()?;
                for (moment, p) in m.iter().chain(&v).zip(params.tensors().into_iter().cycle()) {
                    if moment.shape() != p.shape() {
                        return Err(CheckpointError::Corrupt(
                            "optimizer moment shape mismatch".into(),
                        ));
                    }
                }
                Some(AdamState {
                    m,
                    v,
                    step,
                    lr,
                    beta1,
                    beta2,
                    eps,
                })
            }
        };
        if let Some(v) = &vocab {
            if v.len() != hp.vocab_size {
                return Err(CheckpointError::Corrupt(format!(
                    "embedded vocabulary has {} entries, hyperparameters say {}",
                    v.len(),
                    hp.vocab_size
                )));
            }
        }
        Ok(Checkpoint {
            hp,
            params,
            adam,
            vocab,
            iteration,
        })
    }

    /// Write atomically: a sibling temporary file is renamed over `path`.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        };
        let tmp = path.with_extension("ckpt.tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Checkpoint::from_bytes(&bytes)
    }
}
