//! BLEU-4, METEOR (exact match), TER and ROUGE-L over tokenized text.

mod bleu;
mod meteor;
mod rouge;
mod ter;

use std::hash::Hash;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::tokenize;

pub use bleu::{bleu_corpus, bleu_stats, BleuStats, MAX_ORDER};
pub use meteor::{count_chunks, meteor, meteor_stats, MeteorStats, EXHAUSTIVE_MATCHES};
pub use rouge::{lcs_len, rouge_l};
pub use ter::{levenshtein, ter, ter_stats, TerStats, EXHAUSTIVE_MAX_LEN, MAX_BLOCK};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("hypothesis and reference counts differ: {hyps} hypotheses vs {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("empty reference")]
    EmptyReference,
    #[error("empty reference on line {0}")]
    EmptyReferenceLine(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn check_lengths(hyps: usize, refs: usize) -> Result<(), MetricsError> {
    if hyps != refs {
        return Err(MetricsError::LengthMismatch { hyps, refs });
    }
    if hyps == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Per-pair scores: BLEU-4 (smoothed, percent), METEOR (percent), TER (percent), ROUGE-L (fraction).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SentenceScores {
    pub bleu4: f64,
    pub meteor: f64,
    pub ter: f64,
    pub rouge_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub bleu4: f64,
    pub meteor: f64,
    pub ter: f64,
    pub rouge_l: f64,
    #[serde(skip)]
    pub sentences: Vec<SentenceScores>,
}

struct PairStats {
    bleu: BleuStats,
    meteor: MeteorStats,
    ter: TerStats,
    rouge_l: f64,
}

/// Score aligned token sequences. Pairs are processed in parallel; corpus values are
/// reduced from integer statistics, so they do not depend on scheduling.
pub fn evaluate_tokens<T>(
    hyps: &[Vec<T>],
    refs: &[Vec<T>],
    smoothing: bool,
) -> Result<MetricReport, MetricsError>
where
    T: Eq + Hash + Clone + Send + Sync,
{
    check_lengths(hyps.len(), refs.len())?;
    if let Some(i) = refs.iter().position(|r| r.is_empty()) {
        return Err(MetricsError::EmptyReferenceLine(i + 1));
    }
    let stats: Vec<PairStats> = hyps
        .par_iter()
        .zip(refs.par_iter())
        .map(|(h, r)| {
            Ok(PairStats {
                bleu: bleu_stats(h, r),
                meteor: meteor_stats(h, r)?,
                ter: ter_stats(h, r)?,
                rouge_l: rouge_l(h, r)?,
            })
        })
        .collect::<Result<_, MetricsError>>()?;

    let bleu = stats.iter().fold(BleuStats::default(), |a, s| a + s.bleu);
    let met = stats
        .iter()
        .fold(MeteorStats::default(), |a, s| a + s.meteor);
    let ter = stats.iter().fold(TerStats::default(), |a, s| a + s.ter);
    let rouge_sum: f64 = stats.iter().map(|s| s.rouge_l).sum();
    let sentences = stats
        .iter()
        .map(|s| SentenceScores {
            bleu4: s.bleu.score(true),
            meteor: 100.0 * s.meteor.score(),
            ter: s.ter.rate(),
            rouge_l: s.rouge_l,
        })
        .collect();
    Ok(MetricReport {
        bleu4: bleu.score(smoothing),
        meteor: 100.0 * met.score(),
        ter: ter.rate(),
        rouge_l: rouge_sum / stats.len() as f64,
        sentences,
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Evaluate two line-aligned text files.
pub fn evaluate_files(
    hyp_path: &Path,
    ref_path: &Path,
    smoothing: bool,
) -> Result<MetricReport, MetricsError> {
    let hyps = read_lines(hyp_path)?;
    let refs = read_lines(ref_path)?;
    evaluate_lines(&hyps, &refs, smoothing)
}

pub fn evaluate_lines<S: AsRef<str>>(
    hyps: &[S],
    refs: &[S],
    smoothing: bool,
) -> Result<MetricReport, MetricsError> {
    check_lengths(hyps.len(), refs.len())?;
    let tok = |lines: &[S]| {
        lines
            .iter()
            .map(|l| tokenize(l.as_ref()))
            .collect::<Vec<_>>()
    };
    evaluate_tokens(&tok(hyps), &tok(refs), smoothing)
}

pub const REPORT_COLUMNS: [&str; 4] = ["BLEU-4", "METEOR", "TER", "ROUGE-L"];

impl MetricReport {
    /// Fixed-width table with one row of scores.
    pub fn render_table(&self) -> String {
        let values = [
            format!("{:.2}", self.bleu4),
            format!("{:.2}", self.meteor),
            format!("{:.2}", self.ter),
            format!("{:.3}", self.rouge_l),
        ];
        let widths: Vec<usize> = REPORT_COLUMNS
            .iter()
            .zip(&values)
            .map(|(h, v)| h.len().max(v.len()))
            .collect();
        let row = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let header: Vec<String> = REPORT_COLUMNS.iter().map(|s| s.to_string()).collect();
        format!("{}\n{}\n", row(&header), row(&values))
    }

    /// `{"bleu4":…,"meteor":…,"ter":…,"rouge_l":…}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests;
