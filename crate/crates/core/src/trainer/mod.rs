//! Adam training over shuffled mini-batches with periodic greedy-decode BLEU
//! validation, CSV logging and best/last checkpoints.

mod checkpoint;
mod optim;

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{make_batches, Batch, EncodedPair, Vocab};
use crate::generator::{generate_batch_ids, DecodeOptions, GenError, Strategy};
use crate::metrics::bleu_corpus;
use crate::model::{
    forward_loss, init_params, loss_and_grads, Hyperparams, ModelError, ModelParams,
};
use crate::numkernel::{KernelError, Streams};

pub use checkpoint::{Checkpoint, CheckpointError, FORMAT_VERSION, MAGIC};
pub use optim::{clip_gradients, AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS, DEFAULT_LR};

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const LOG_HEADER: &str = "iteration,loss,val_bleu4";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0}")]
    Config(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("non-finite loss at iteration {iteration}")]
    NonFinite { iteration: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Generate(#[from] GenError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hp: Hyperparams,
    pub batch_size: usize,
    pub max_iterations: u64,
    pub eval_every: u64,
    pub clip_norm: f64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Directory receiving `best.ckpt` and `last.ckpt`.
    pub checkpoint_dir: Option<PathBuf>,
    /// CSV log destination.
    pub log_path: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(hp: Hyperparams, max_iterations: u64) -> Self {
        TrainConfig {
            hp,
            batch_size: 32,
            max_iterations,
            eval_every: 500,
            clip_norm: 5.0,
            learning_rate: DEFAULT_LR,
            seed: 0,
            checkpoint_dir: None,
            log_path: None,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.max_iterations < 1 {
            return bad("max_iterations must be ≥ 1");
        }
        if self.eval_every < 1 {
            return bad("eval_every must be ≥ 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be ≥ 1");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm must be > 0");
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return bad("learning rate must be ≥ 0");
        }
        self.hp.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRecord {
    pub iteration: u64,
    pub loss: f64,
    pub val_bleu4: Option<f64>,
}

impl TrainLogRecord {
    pub fn csv_line(&self) -> String {
        match self.val_bleu4 {
            Some(b) => format!("{},{},{:.4}\n", self.iteration, self.loss, b),
            None => format!("{},{},\n", self.iteration, self.loss),
        }
    }
}

/// Appends one complete line per record.
pub struct TrainLog {
    path: PathBuf,
    file: File,
}

impl TrainLog {
    pub fn create(path: &Path) -> Result<Self, TrainError> {
        let io = |source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        };
        std::fs::write(path, format!("{LOG_HEADER}\n")).map_err(io)?;
        let file = OpenOptions::new().append(true).open(path).map_err(io)?;
        Ok(TrainLog {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, record: &TrainLogRecord) -> Result<(), TrainError> {
        self.file
            .write_all(record.csv_line().as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| TrainError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: Checkpoint,
    pub best_checkpoint: Option<Checkpoint>,
    pub best_bleu: Option<f64>,
    pub records: Vec<TrainLogRecord>,
}

/// Corpus BLEU-4 of greedy decodes against the gold stories.
pub fn validation_bleu(
    params: &ModelParams<f32>,
    hp: &Hyperparams,
    pairs: &[EncodedPair],
) -> Result<f64, TrainError> {
    let sources: Vec<Vec<u32>> = pairs.iter().map(|p| p.source_ids.clone()).collect();
    let hyps = generate_batch_ids(
        params,
        hp,
        &sources,
        Strategy::Greedy,
        &DecodeOptions::from_hyperparams(hp),
    )?;
    let refs: Vec<&[u32]> = pairs
        .iter()
        .map(|p| &p.target_ids[1..p.target_ids.len() - 1])
        .collect();
    bleu_corpus(&hyps, &refs, false).map_err(|e| TrainError::Config(e.to_string()))
}

/// Token-weighted inference-mode loss over `pairs`.
pub fn corpus_loss(
    params: &ModelParams<f32>,
    hp: &Hyperparams,
    pairs: &[EncodedPair],
    batch_size: usize,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for chunk in pairs.chunks(batch_size.max(1)) {
        let refs: Vec<&EncodedPair> = chunk.iter().collect();
        let batch = Batch::from_pairs(&refs, (0..chunk.len()).collect());
        let n = batch.target_tokens();
        if n == 0 {
            continue;
        }
        total += f64::from(forward_loss(&batch, params, hp, None)?) * n as f64;
        tokens += n;
    }
    if tokens == 0 {
        return Err(ModelError::NoTargetTokens.into());
    }
    Ok(total / tokens as f64)
}

fn non_finite(err: ModelError, iteration: u64) -> TrainError {
    match err {
        ModelError::Kernel(KernelError::NonFinite { .. }) => TrainError::NonFinite { iteration },
        other => other.into(),
    }
}

pub fn train(
    config: &TrainConfig,
    train_pairs: &[EncodedPair],
    val_pairs: &[EncodedPair],
    vocab: Option<&Vocab>,
) -> Result<TrainOutcome, TrainError> {
    train_with(
        config,
        train_pairs,
        val_pairs,
        vocab,
        init_params(&config.hp, config.seed)?,
        |_| {},
    )
}

/// Train from `params`, calling `observe` after each logged iteration.
pub fn train_with(
    config: &TrainConfig,
    train_pairs: &[EncodedPair],
    val_pairs: &[EncodedPair],
    vocab: Option<&Vocab>,
    mut params: ModelParams<f32>,
    mut observe: impl FnMut(&TrainLogRecord),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_pairs.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let hp = &config.hp;
    let streams = Streams::new(config.seed);
    let mut adam = AdamState::new(&params.tensors(), config.learning_rate);
    let mut log = config
        .log_path
        .as_deref()
        .map(TrainLog::create)
        .transpose()?;
    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|source| TrainError::Io {
            path: dir.clone(),
            source,
        })?;
    }

    let snapshot = |params: &ModelParams<f32>, adam: &AdamState, iteration: u64| Checkpoint {
        hp: hp.clone(),
        params: params.clone(),
        adam: Some(adam.clone()),
        vocab: vocab.cloned(),
        iteration,
    };

    let mut epoch = 0u64;
    let mut batches = make_batches(
        train_pairs,
        config.batch_size,
        streams.derive_seed("shuffle", epoch),
    );
    let mut next_batch = 0;
    let mut records = Vec::with_capacity(config.max_iterations.min(1 << 20) as usize);
    let mut best: Option<(f64, Checkpoint)> = None;

    for iteration in 1..=config.max_iterations {
        if next_batch == batches.len() {
            epoch += 1;
            batches = make_batches(
                train_pairs,
                config.batch_size,
                streams.derive_seed("shuffle", epoch),
            );
            next_batch = 0;
        }
        let batch = &batches[next_batch];
        next_batch += 1;

        let mut rng = streams.indexed("dropout", iteration);
        let (loss, mut grads) = loss_and_grads(batch, &params, hp, Some(&mut rng))
            .map_err(|e| non_finite(e, iteration))?;
        if !loss.is_finite() {
            return Err(TrainError::NonFinite { iteration });
        }
        clip_gradients(&mut grads, config.clip_norm);
        adam.update(params.tensors_mut(), &grads);
        if !params.is_finite() {
            return Err(TrainError::NonFinite { iteration });
        }

        let mut record = TrainLogRecord {
            iteration,
            loss: f64::from(loss),
            val_bleu4: None,
        };
        let eval_point = iteration % config.eval_every == 0 || iteration == config.max_iterations;
        if eval_point && !val_pairs.is_empty() {
            let bleu = validation_bleu(&params, hp, val_pairs)?;
            record.val_bleu4 = Some(bleu);
            let ckpt = snapshot(&params, &adam, iteration);
            if let Some(dir) = &config.checkpoint_dir {
                ckpt.save(&dir.join(LAST_CHECKPOINT))?;
            }
            if best.as_ref().is_none_or(|(b, _)| bleu >= *b) {
                if let Some(dir) = &config.checkpoint_dir {
                    ckpt.save(&dir.join(BEST_CHECKPOINT))?;
                }
                best = Some((bleu, ckpt));
            }
        }
        if let Some(log) = log.as_mut() {
            log.append(&record)?;
        }
        observe(&record);
        records.push(record);
    }

    let final_checkpoint = snapshot(&params, &adam, config.max_iterations);
    if let Some(dir) = &config.checkpoint_dir {
        final_checkpoint.save(&dir.join(LAST_CHECKPOINT))?;
        if best.is_none() {
            final_checkpoint.save(&dir.join(BEST_CHECKPOINT))?;
        }
    }
    let (best_bleu, best_checkpoint) = match best {
        Some((b, c)) => (Some(b), Some(c)),
        None => (None, None),
    };
    Ok(TrainOutcome {
        final_checkpoint,
        best_checkpoint,
        best_bleu,
        records,
    })
}
