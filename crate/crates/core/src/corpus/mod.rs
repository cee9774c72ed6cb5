//! Paired description/story documents: reading, tokenizing, vocabulary,
//! delimiter encoding, batching and dataset statistics.

mod batch;
mod stats;
mod synthetic;
mod tokenize;
mod vocab;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batch::{make_batches, shuffle_order, Batch, Grid, IdMatrix};
pub use stats::{compute_stats, default_stopwords, load_stopwords, CorpusStats};
pub use synthetic::synthetic_corpus;
pub use tokenize::{detokenize, is_punctuation_token, tokenize};
pub use vocab::{
    build_vocab, Vocab, BOS, DEFAULT_MAX_SIZE, DEFAULT_MIN_COUNT, DESC_DELIM, EOS, PAD, RESERVED,
    SEQ_END, UNK,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty target")]
    EmptyTarget,
    #[error("example {0} has no descriptions")]
    NoDescriptions(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One document: ordered standalone descriptions and the story that narrates them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub descriptions: Vec<String>,
    pub story: String,
}

/// Integer encoding of an [`Example`]; see [`encode_example`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub source_ids: Vec<u32>,
    pub target_ids: Vec<u32>,
}

impl EncodedPair {
    pub fn source_length(&self) -> usize {
        self.source_ids.len()
    }

    pub fn target_length(&self) -> usize {
        self.target_ids.len()
    }
}

/// Read a JSON Lines corpus (`id`, `descriptions`, `story` per line). Blank lines are skipped.
pub fn read_jsonl(path: &Path) -> Result<Vec<Example>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if ex.descriptions.is_empty() {
            return Err(CorpusError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("example {} has no descriptions", ex.id),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, examples: &[Example]) -> Result<(), CorpusError> {
    let mut buf = String::new();
    for ex in examples {
        buf.push_str(&serde_json::to_string(ex).expect("examples serialize"));
        buf.push('\n');
    }
    std::fs::write(path, buf).map_err(|e| CorpusError::io(path, e))
}

/// `desc₁ <d> desc₂ <d> … <seq_end>` on the source side, `<s> story </s>` on the target side.
pub fn encode_example(ex: &Example, vocab: &Vocab) -> Result<EncodedPair, CorpusError> {
    if ex.descriptions.is_empty() {
        return Err(CorpusError::NoDescriptions(ex.id.clone()));
    }
    let mut source_ids = Vec::new();
    for (i, desc) in ex.descriptions.iter().enumerate() {
        if i > 0 {
            source_ids.push(DESC_DELIM);
        }
        source_ids.extend(tokenize(desc).iter().map(|t| vocab.id_or_unk(t)));
    }
    source_ids.push(SEQ_END);

    let story = tokenize(&ex.story);
    if story.is_empty() {
        return Err(CorpusError::EmptyTarget);
    }
    let mut target_ids = Vec::with_capacity(story.len() + 2);
    target_ids.push(BOS);
    target_ids.extend(story.iter().map(|t| vocab.id_or_unk(t)));
    target_ids.push(EOS);
    Ok(EncodedPair {
        source_ids,
        target_ids,
    })
}

/// Source ids for a description list alone (used at generation time).
pub fn encode_source(descriptions: &[String], vocab: &Vocab) -> Vec<u32> {
    let mut ids = Vec::new();
    for (i, desc) in descriptions.iter().enumerate() {
        if i > 0 {
            ids.push(DESC_DELIM);
        }
        ids.extend(tokenize(desc).iter().map(|t| vocab.id_or_unk(t)));
    }
    ids.push(SEQ_END);
    ids
}

pub fn encode_all(examples: &[Example], vocab: &Vocab) -> Result<Vec<EncodedPair>, CorpusError> {
    examples
        .iter()
        .map(|ex| encode_example(ex, vocab))
        .collect()
}
