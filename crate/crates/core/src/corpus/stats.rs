use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{is_punctuation_token, tokenize, CorpusError, Example};

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// Dataset statistics in the layout of the usual corpus summary table.
///
/// Word counts exclude pure-punctuation tokens, and so do the overlap statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub doc_count: usize,
    pub avg_sentences_caption: f64,
    pub avg_sentences_story: f64,
    pub avg_words_caption: f64,
    pub avg_words_story: f64,
    /// Mean per document of |story word types \ caption word types \ stopwords|.
    pub avg_nonoverlap_words: f64,
    /// Story non-stop tokens unseen in their document's captions, over all story non-stop tokens.
    pub unseen_nonstop_fraction: f64,
    /// Same numerator over every story word token (stopwords included).
    pub unseen_nonstop_story_share: f64,
}

pub fn default_stopwords() -> HashSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

pub fn load_stopwords(path: &Path) -> Result<HashSet<String>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    Ok(parse_stopwords(&text))
}

fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

fn count_sentences(text: &str) -> u64 {
    text.split(['.', '!', '?'])
        .filter(|seg| tokenize(seg).iter().any(|t| !is_punctuation_token(t)))
        .count() as u64
}

fn words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !is_punctuation_token(t))
        .collect()
}

#[derive(Default, Clone, Copy)]
struct DocCounts {
    caption_sents: u64,
    story_sents: u64,
    caption_words: u64,
    story_words: u64,
    nonoverlap_types: u64,
    unseen_nonstop: u64,
    story_nonstop: u64,
}

impl DocCounts {
    fn add(self, o: DocCounts) -> DocCounts {
        DocCounts {
            caption_sents: self.caption_sents + o.caption_sents,
            story_sents: self.story_sents + o.story_sents,
            caption_words: self.caption_words + o.caption_words,
            story_words: self.story_words + o.story_words,
            nonoverlap_types: self.nonoverlap_types + o.nonoverlap_types,
            unseen_nonstop: self.unseen_nonstop + o.unseen_nonstop,
            story_nonstop: self.story_nonstop + o.story_nonstop,
        }
    }
}

fn doc_counts(ex: &Example, stopwords: &HashSet<String>) -> DocCounts {
    let mut caption_types = HashSet::new();
    let mut c = DocCounts::default();
    for d in &ex.descriptions {
        c.caption_sents += count_sentences(d);
        let w = words(d);
        c.caption_words += w.len() as u64;
        caption_types.extend(w);
    }
    c.story_sents = count_sentences(&ex.story);
    let story = words(&ex.story);
    c.story_words = story.len() as u64;

    let mut novel_types = HashSet::new();
    for tok in &story {
        if stopwords.contains(tok) {
            continue;
        }
        c.story_nonstop += 1;
        if !caption_types.contains(tok) {
            c.unseen_nonstop += 1;
            novel_types.insert(tok.as_str());
        }
    }
    c.nonoverlap_types = novel_types.len() as u64;
    c
}

/// Averages per document over the corpus. All intermediate counts are integers,
/// so the parallel reduction is exact and order-independent.
pub fn compute_stats(
    examples: &[Example],
    stopwords: &HashSet<String>,
) -> Result<CorpusStats, CorpusError> {
    if examples.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let total = examples
        .par_iter()
        .map(|ex| doc_counts(ex, stopwords))
        .reduce(DocCounts::default, DocCounts::add);
    let n = examples.len() as f64;
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(CorpusStats {
        doc_count: examples.len(),
        avg_sentences_caption: total.caption_sents as f64 / n,
        avg_sentences_story: total.story_sents as f64 / n,
        avg_words_caption: total.caption_words as f64 / n,
        avg_words_story: total.story_words as f64 / n,
        avg_nonoverlap_words: total.nonoverlap_types as f64 / n,
        unseen_nonstop_fraction: ratio(total.unseen_nonstop, total.story_nonstop),
        unseen_nonstop_story_share: ratio(total.unseen_nonstop, total.story_words),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(descs: &[&str], story: &str) -> Example {
        Example {
            id: "d".into(),
            descriptions: descs.iter().map(|s| s.to_string()).collect(),
            story: story.into(),
        }
    }

    #[test]
    fn hand_counted_document() {
        let stop: HashSet<String> = ["a".to_string()].into();
        let s = compute_stats(&[doc(&["a b. c d."], "a e f.")], &stop).unwrap();
        assert_eq!(s.doc_count, 1);
        assert_eq!(s.avg_sentences_caption, 2.0);
        assert_eq!(s.avg_sentences_story, 1.0);
        assert_eq!(s.avg_words_caption, 4.0);
        assert_eq!(s.avg_words_story, 3.0);
        assert_eq!(s.avg_nonoverlap_words, 2.0);
        assert_eq!(s.unseen_nonstop_fraction, 1.0);
        assert!((s.unseen_nonstop_story_share - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn story_equal_to_captions_has_no_novelty() {
        let text = "the dog ran to the park. it was fun!";
        let s = compute_stats(&[doc(&[text], text)], &default_stopwords()).unwrap();
        assert_eq!(s.avg_nonoverlap_words, 0.0);
        assert_eq!(s.unseen_nonstop_fraction, 0.0);
        assert_eq!(s.avg_sentences_story, 2.0);
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(
            compute_stats(&[], &default_stopwords()),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    #[test]
    fn default_stopword_list_is_loaded() {
        let s = default_stopwords();
        assert!(s.len() > 140);
        assert!(s.contains("the") && s.contains("and"));
    }

    proptest! {
        #[test]
        fn stats_are_bounded(
            docs in prop::collection::vec(
                (prop::collection::vec("[a-h .!]{0,20}", 1..4), "[a-j .?]{0,30}"), 1..8)
        ) {
            let exs: Vec<Example> = docs.into_iter()
                .map(|(d, s)| Example { id: "p".into(), descriptions: d, story: s })
                .collect();
            let s = compute_stats(&exs, &default_stopwords()).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.unseen_nonstop_fraction));
            for v in [s.avg_sentences_caption, s.avg_sentences_story, s.avg_words_caption,
                      s.avg_words_story, s.avg_nonoverlap_words] {
                prop_assert!(v.is_finite() && v >= 0.0);
            }
        }
    }
}
