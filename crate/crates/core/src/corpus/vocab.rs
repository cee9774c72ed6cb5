use std::collections::HashMap;
use std::path::Path;

use super::{tokenize, CorpusError, Example};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const DESC_DELIM: u32 = 4;
pub const SEQ_END: u32 = 5;

/// Surface forms of the reserved ids 0..=5, in id order.
pub const RESERVED: [&str; 6] = ["<pad>", "<unk>", "<s>", "</s>", "<d>", "<seq_end>"];

pub const DEFAULT_MIN_COUNT: u64 = 2;
pub const DEFAULT_MAX_SIZE: usize = 30_000;

/// Joint source/target token table. Ids 0..=5 are always the reserved tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    index: HashMap<String, u32>,
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl Vocab {
    /// Table holding only the reserved tokens.
    pub fn reserved_only() -> Self {
        let mut v = Vocab {
            index: HashMap::new(),
            tokens: Vec::new(),
            counts: Vec::new(),
        };
        for t in RESERVED {
            v.push(t.to_string(), 0);
        }
        v
    }

    /// Reserved tokens followed by `entries` in order.
    pub fn from_entries(entries: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut v = Vocab::reserved_only();
        for (tok, count) in entries {
            if !v.index.contains_key(&tok) {
                v.push(tok, count);
            }
        }
        v
    }

    fn push(&mut self, token: String, count: u64) {
        self.index.insert(token.clone(), self.tokens.len() as u32);
        self.tokens.push(token);
        self.counts.push(count);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Non-reserved `(token, count)` pairs in id order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, u64)> {
        self.tokens
            .iter()
            .zip(&self.counts)
            .skip(RESERVED.len())
            .map(|(t, &c)| (t.as_str(), c))
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut buf = String::new();
        for (tok, count) in self.entries() {
            buf.push_str(tok);
            buf.push('\t');
            buf.push_str(&count.to_string());
            buf.push('\n');
        }
        std::fs::write(path, buf).map_err(|e| CorpusError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: &str| CorpusError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: message.to_string(),
            };
            let (tok, count) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse_err("expected token<TAB>count"))?;
            let count: u64 = count
                .parse()
                .map_err(|_| parse_err("count is not an integer"))?;
            entries.push((tok.to_string(), count));
        }
        Ok(Vocab::from_entries(entries))
    }
}

/// Joint vocabulary over descriptions and stories.
///
/// Tokens seen fewer than `min_count` times are dropped; of the rest at most
/// `max_size` are kept by descending count, ties broken lexicographically.
pub fn build_vocab(
    examples: &[Example],
    min_count: u64,
    max_size: usize,
) -> Result<Vocab, CorpusError> {
    if examples.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for ex in examples {
        for text in ex.descriptions.iter().chain(std::iter::once(&ex.story)) {
            for tok in tokenize(text) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
    }
    let mut kept: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count.max(1) && !RESERVED.contains(&t.as_str()))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    kept.truncate(max_size);
    Ok(Vocab::from_entries(kept))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(descs: &[&str], story: &str) -> Example {
        Example {
            id: "t".into(),
            descriptions: descs.iter().map(|s| s.to_string()).collect(),
            story: story.into(),
        }
    }

    #[test]
    fn min_count_threshold() {
        let v = build_vocab(&[doc(&["a a b"], "a")], 2, 100).unwrap();
        assert!(v.id("a").is_some());
        assert!(v.id("b").is_none());
    }

    #[test]
    fn max_size_keeps_most_frequent() {
        let v = build_vocab(&[doc(&["a b"], "a")], 1, 1).unwrap();
        assert_eq!(v.len(), 7);
        assert_eq!(v.token(6), "a");
        assert_eq!(v.count(6), 2);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = build_vocab(&[doc(&["c b a"], "z")], 1, 2).unwrap();
        assert_eq!(
            v.entries().map(|(t, _)| t).collect::<Vec<_>>(),
            vec!["a", "b"]
        );
    }

    #[test]
    fn reserved_layout() {
        let v = build_vocab(&[doc(&["x"], "y")], 1, 10).unwrap();
        for (i, t) in RESERVED.iter().enumerate() {
            assert_eq!(v.id(t), Some(i as u32));
        }
        assert_eq!(
            (PAD, UNK, BOS, EOS, DESC_DELIM, SEQ_END),
            (0, 1, 2, 3, 4, 5)
        );
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert_eq!(
            build_vocab(&[], 1, 10).unwrap_err().to_string(),
            "empty corpus"
        );
    }

    #[test]
    fn bijection_and_file_round_trip() {
        let v = build_vocab(
            &[doc(
                &["the dog ran .", "a cat"],
                "the dog and the cat ran !",
            )],
            1,
            100,
        )
        .unwrap();
        for id in 0..v.len() as u32 {
            assert_eq!(v.id(v.token(id)), Some(id));
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        v.save(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("the\t3\n"), "{text}");
        assert_eq!(Vocab::load(&p).unwrap(), v);
    }
}
