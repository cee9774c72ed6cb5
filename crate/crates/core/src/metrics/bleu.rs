use std::collections::HashMap;
use std::hash::Hash;

use super::MetricsError;

pub const MAX_ORDER: usize = 4;

/// Clipped n-gram matches and totals for orders 1..=4 plus lengths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl std::ops::Add for BleuStats {
    type Output = BleuStats;
    fn add(mut self, o: BleuStats) -> BleuStats {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
        self
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut out = HashMap::new();
    for g in tokens.windows(n) {
        *out.entry(g).or_insert(0) += 1;
    }
    out
}

pub fn bleu_stats<T: Eq + Hash>(hyp: &[T], reference: &[T]) -> BleuStats {
    let mut s = BleuStats {
        hyp_len: hyp.len() as u64,
        ref_len: reference.len() as u64,
        ..BleuStats::default()
    };
    for n in 1..=MAX_ORDER {
        let r = ngram_counts(reference, n);
        let h = ngram_counts(hyp, n);
        s.matches[n - 1] = h.iter().map(|(g, &c)| c.min(*r.get(g).unwrap_or(&0))).sum();
        s.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
    }
    s
}

impl BleuStats {
    /// BLEU-4 in percent.
    pub fn score(&self, smoothing: bool) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..MAX_ORDER {
            let (m, t) = (self.matches[n], self.totals[n]);
            let p = if m == 0 {
                if !smoothing {
                    return 0.0;
                }
                1.0 / (t as f64 + 1.0)
            } else {
                m as f64 / t as f64
            };
            log_sum += p.ln();
        }
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        let bp = (1.0 - r / c).exp().min(1.0);
        100.0 * bp * (log_sum / MAX_ORDER as f64).exp()
    }
}

/// Corpus-level BLEU-4 (percent) over aligned hypothesis/reference pairs.
pub fn bleu_corpus<T: Eq + Hash, H: AsRef<[T]>, R: AsRef<[T]>>(
    hyps: &[H],
    refs: &[R],
    smoothing: bool,
) -> Result<f64, MetricsError> {
    super::check_lengths(hyps.len(), refs.len())?;
    let total = hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| bleu_stats(h.as_ref(), r.as_ref()))
        .fold(BleuStats::default(), |a, b| a + b);
    Ok(total.score(smoothing))
}
