//! Interpolated Kneser-Ney n-gram language model with a single absolute discount.

mod file;

use std::collections::HashMap;

use thiserror::Error;

pub use file::{load_model, save_model};

pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

/// N-gram keys are packed into a `u128`, 21 bits per token.
pub const MAX_ORDER: usize = 6;
const TOKEN_BITS: u32 = 21;
const MAX_TYPES: usize = 1 << TOKEN_BITS;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty text")]
    EmptyText,
    #[error("order must be between 1 and {MAX_ORDER} (got {0})")]
    Order(usize),
    #[error("discount must be in (0, 1) (got {0})")]
    Discount(f64),
    #[error("vocabulary exceeds {MAX_TYPES} types")]
    TooManyTypes,
    #[error("zero probability for {0:?}")]
    ZeroProbability(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: std::path::PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub order: usize,
    pub discount: f64,
    /// Pad each sentence with `<s>` and predict a closing `</s>`.
    pub boundaries: bool,
    /// Reserve probability mass for unseen words.
    pub include_unk: bool,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            order: 5,
            discount: 0.75,
            boundaries: true,
            include_unk: true,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        if self.order == 0 || self.order > MAX_ORDER {
            return Err(LmError::Order(self.order));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(LmError::Discount(self.discount));
        }
        Ok(())
    }
}

/// Raw count and continuation count (distinct left extensions) of one n-gram.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NgramCounts {
    pub count: u64,
    pub continuation: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ContextStats {
    /// Sum of adjusted counts over following words.
    total: u64,
    /// Number of distinct following words.
    types: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnModel {
    config: LmConfig,
    /// Interned strings; index = id.
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    /// Ids of predictable words (every interned token but `<s>`), ascending.
    vocab: Vec<u32>,
    /// `tables[k-1]` maps packed k-grams to their counts.
    tables: Vec<HashMap<u128, NgramCounts>>,
    contexts: Vec<HashMap<u128, ContextStats>>,
}

fn pack(ids: &[u32]) -> u128 {
    ids.iter()
        .fold(0u128, |acc, &i| (acc << TOKEN_BITS) | u128::from(i))
}

fn unpack(key: u128, len: usize) -> Vec<u32> {
    let mask = (1u128 << TOKEN_BITS) - 1;
    (0..len)
        .rev()
        .map(|k| ((key >> (TOKEN_BITS * k as u32)) & mask) as u32)
        .collect()
}

impl KnModel {
    fn empty(config: LmConfig) -> Self {
        KnModel {
            config,
            tokens: Vec::new(),
            ids: HashMap::new(),
            vocab: Vec::new(),
            tables: vec![HashMap::new(); config.order],
            contexts: Vec::new(),
        }
    }

    fn intern(&mut self, tok: &str) -> Result<u32, LmError> {
        if let Some(&id) = self.ids.get(tok) {
            return Ok(id);
        }
        if self.tokens.len() >= MAX_TYPES {
            return Err(LmError::TooManyTypes);
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(tok.to_string());
        self.ids.insert(tok.to_string(), id);
        Ok(id)
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    /// Predictable words (including `</s>` and `<unk>` when enabled), sorted.
    pub fn vocabulary(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .vocab
            .iter()
            .map(|&i| self.tokens[i as usize].as_str())
            .collect();
        v.sort_unstable();
        v
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Every stored k-gram with its counts, sorted by token sequence.
    pub fn ngrams(&self, k: usize) -> Vec<(Vec<&str>, NgramCounts)> {
        let mut out: Vec<(Vec<&str>, NgramCounts)> = self.tables[k - 1]
            .iter()
            .map(|(&key, &c)| {
                let words = unpack(key, k)
                    .into_iter()
                    .map(|i| self.tokens[i as usize].as_str())
                    .collect();
                (words, c)
            })
            .collect();
        out.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        out
    }

    fn bos_id(&self) -> Option<u32> {
        self.ids.get(BOS_TOKEN).copied()
    }

    /// Count used at order `k`: raw at the top order or after `<s>`, continuation otherwise.
    fn adjusted(&self, k: usize, ids: &[u32], c: &NgramCounts) -> u64 {
        if k == self.config.order || Some(ids[0]) == self.bos_id() {
            c.count
        } else {
            c.continuation
        }
    }

    /// Recompute continuation counts and per-context sums from raw counts.
    fn finalize(&mut self) {
        let n = self.config.order;
        for c in self.tables[n - 1].values_mut() {
            c.continuation = 0;
        }
        for k in 1..n {
            let (lower, higher) = self.tables.split_at_mut(k);
            let lower = &mut lower[k - 1];
            for c in lower.values_mut() {
                c.continuation = 0;
            }
            let mask = (1u128 << (TOKEN_BITS * k as u32)) - 1;
            for &key in higher[0].keys() {
                if let Some(c) = lower.get_mut(&(key & mask)) {
                    c.continuation += 1;
                }
            }
        }
        let mut contexts = vec![HashMap::new(); n];
        for k in 1..=n {
            for (&key, c) in &self.tables[k - 1] {
                let ids = unpack(key, k);
                let a = self.adjusted(k, &ids, c);
                if a == 0 {
                    continue;
                }
                let ctx: &mut ContextStats = contexts[k - 1].entry(key >> TOKEN_BITS).or_default();
                ctx.total += a;
                ctx.types += 1;
            }
        }
        self.contexts = contexts;
        let bos = self.bos_id();
        self.vocab = (0..self.tokens.len() as u32)
            .filter(|&i| Some(i) != bos)
            .collect();
    }

    fn lookup(&self, tok: &str) -> Option<u32> {
        match self.ids.get(tok) {
            Some(&id) if tok != BOS_TOKEN => Some(id),
            _ if self.config.include_unk => self.ids.get(UNK_TOKEN).copied(),
            _ => None,
        }
    }

    fn context_ids<S: AsRef<str>>(&self, context: &[S]) -> Vec<Option<u32>> {
        let keep = self.config.order - 1;
        let start = context.len().saturating_sub(keep);
        context[start..]
            .iter()
            .map(|t| {
                let t = t.as_ref();
                if t == BOS_TOKEN {
                    self.bos_id()
                } else {
                    self.lookup(t)
                }
            })
            .collect()
    }

    fn prob_ids(&self, context: &[Option<u32>], word: u32) -> f64 {
        let d = self.config.discount;
        let mut p = 1.0 / self.vocab.len() as f64;
        // Longest usable context suffix: every token must be known.
        let usable = context.iter().rev().take_while(|t| t.is_some()).count();
        for k in 1..=usable + 1 {
            let ctx: Vec<u32> = context[context.len() - (k - 1)..]
                .iter()
                .map(|t| t.unwrap())
                .collect();
            let Some(stats) = self.contexts[k - 1].get(&pack(&ctx)) else {
                continue;
            };
            let mut gram = ctx.clone();
            gram.push(word);
            let a = self.tables[k - 1]
                .get(&pack(&gram))
                .map_or(0, |c| self.adjusted(k, &gram, c));
            let total = stats.total as f64;
            p = (a as f64 - d).max(0.0) / total + d * stats.types as f64 / total * p;
        }
        p
    }

    /// `p(word | context)`, using at most the last `order − 1` context tokens.
    /// Unknown words map to `<unk>`; without it they get probability 0.
    pub fn prob<S: AsRef<str>>(&self, context: &[S], word: &str) -> f64 {
        match self.lookup(word) {
            Some(w) if self.vocab.binary_search(&w).is_ok() => {
                self.prob_ids(&self.context_ids(context), w)
            }
            _ => 0.0,
        }
    }

    /// Sum of natural-log probabilities of `sentence` (and `</s>` with boundaries)
    /// and the number of predicted events.
    pub fn log_prob<S: AsRef<str>>(&self, sentence: &[S]) -> Result<(f64, usize), LmError> {
        let mut context: Vec<&str> = Vec::with_capacity(sentence.len() + 1);
        if self.config.boundaries {
            context.push(BOS_TOKEN);
        }
        let mut events: Vec<&str> = sentence.iter().map(|s| s.as_ref()).collect();
        if self.config.boundaries {
            events.push(EOS_TOKEN);
        }
        let mut total = 0.0;
        for w in &events {
            let p = self.prob(&context, w);
            if p.is_nan() || p <= 0.0 {
                return Err(LmError::ZeroProbability(w.to_string()));
            }
            total += p.ln();
            context.push(w);
        }
        Ok((total, events.len()))
    }

    /// `exp(−mean log p)` over every event, `</s>` included.
    pub fn perplexity<S: AsRef<str>>(&self, text: &[S]) -> Result<f64, LmError> {
        if text.is_empty() {
            return Err(LmError::EmptyText);
        }
        self.corpus_perplexity(std::slice::from_ref(&text))
    }

    pub fn corpus_perplexity<S: AsRef<str>, T: AsRef<[S]>>(
        &self,
        sentences: &[T],
    ) -> Result<f64, LmError> {
        let mut total = 0.0;
        let mut n = 0;
        for s in sentences {
            let (lp, k) = self.log_prob(s.as_ref())?;
            total += lp;
            n += k;
        }
        if n == 0 {
            return Err(LmError::EmptyText);
        }
        Ok((-total / n as f64).exp())
    }
}

/// Count n-grams of every order up to `config.order` and derive KN statistics.
pub fn train<S: AsRef<str>, T: AsRef<[S]>>(
    sentences: &[T],
    config: LmConfig,
) -> Result<KnModel, LmError> {
    config.validate()?;
    if sentences.iter().all(|s| s.as_ref().is_empty()) {
        return Err(LmError::EmptyCorpus);
    }
    let mut model = KnModel::empty(config);
    let bos = if config.boundaries {
        Some(model.intern(BOS_TOKEN)?)
    } else {
        None
    };
    let eos = if config.boundaries {
        Some(model.intern(EOS_TOKEN)?)
    } else {
        None
    };
    if config.include_unk {
        model.intern(UNK_TOKEN)?;
    }
    let mut ids = Vec::new();
    for s in sentences {
        let s = s.as_ref();
        if s.is_empty() && !config.boundaries {
            continue;
        }
        ids.clear();
        ids.extend(bos);
        for t in s {
            ids.push(model.intern(t.as_ref())?);
        }
        ids.extend(eos);
        let first_predicted = usize::from(bos.is_some());
        for end in first_predicted..ids.len() {
            for k in 1..=config.order.min(end + 1) {
                let gram = &ids[end + 1 - k..=end];
                model.tables[k - 1].entry(pack(gram)).or_default().count += 1;
            }
        }
    }
    model.finalize();
    Ok(model)
}
