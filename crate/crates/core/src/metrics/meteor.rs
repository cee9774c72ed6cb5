use std::collections::HashMap;
use std::hash::Hash;

use super::MetricsError;

/// Alignments with at most this many matches are searched exhaustively.
pub const EXHAUSTIVE_MATCHES: usize = 12;

const ALPHA_WEIGHT: f64 = 9.0;
const PENALTY_GAMMA: f64 = 0.5;
const PENALTY_BETA: f64 = 3.0;

/// Exact-match alignment summary for one pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MeteorStats {
    pub matches: u64,
    pub chunks: u64,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl std::ops::Add for MeteorStats {
    type Output = MeteorStats;
    fn add(self, o: MeteorStats) -> MeteorStats {
        MeteorStats {
            matches: self.matches + o.matches,
            chunks: self.chunks + o.chunks,
            hyp_len: self.hyp_len + o.hyp_len,
            ref_len: self.ref_len + o.ref_len,
        }
    }
}

impl MeteorStats {
    /// Score in `[0, 1]`.
    pub fn score(&self) -> f64 {
        if self.matches == 0 {
            return 0.0;
        }
        let m = self.matches as f64;
        let p = m / self.hyp_len as f64;
        let r = m / self.ref_len as f64;
        let fmean = (1.0 + ALPHA_WEIGHT) * p * r / (r + ALPHA_WEIGHT * p);
        let penalty = PENALTY_GAMMA * (self.chunks as f64 / m).powf(PENALTY_BETA);
        fmean * (1.0 - penalty)
    }
}

/// Number of chunks in an alignment given as `(hyp_pos, ref_pos)` pairs sorted by `hyp_pos`.
pub fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    pairs
        .iter()
        .enumerate()
        .filter(|&(k, &(h, r))| k == 0 || !(pairs[k - 1].0 + 1 == h && pairs[k - 1].1 + 1 == r))
        .count()
}

struct Search<'a, T> {
    hyp: &'a [T],
    options: Vec<Vec<usize>>,
    target: usize,
    memo: HashMap<(usize, u64, usize, usize), Option<usize>>,
}

impl<T> Search<'_, T> {
    /// Fewest further chunks to reach `target` matches from hyp position `i`.
    /// `prev` is the ref position matched by hyp `i − 1`, or `usize::MAX`.
    fn best(&mut self, i: usize, used: u64, prev: usize, got: usize) -> Option<usize> {
        if got == self.target {
            return Some(0);
        }
        if i == self.hyp.len() {
            return None;
        }
        let key = (i, used, prev, got);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let mut best = self.best(i + 1, used, usize::MAX, got);
        for k in 0..self.options[i].len() {
            let r = self.options[i][k];
            if used & (1 << r) != 0 {
                continue;
            }
            let new_chunk = usize::from(prev == usize::MAX || prev + 1 != r);
            if let Some(rest) = self.best(i + 1, used | (1 << r), r, got + 1) {
                let total = rest + new_chunk;
                best = Some(best.map_or(total, |b: usize| b.min(total)));
            }
        }
        self.memo.insert(key, best);
        best
    }
}

fn exact_matches<T: Eq + Hash>(hyp: &[T], reference: &[T]) -> usize {
    let mut counts: HashMap<&T, (usize, usize)> = HashMap::new();
    for t in hyp {
        counts.entry(t).or_default().0 += 1;
    }
    for t in reference {
        counts.entry(t).or_default().1 += 1;
    }
    counts.values().map(|&(h, r)| h.min(r)).sum()
}

fn greedy_chunks<T: Eq>(hyp: &[T], reference: &[T]) -> usize {
    let mut used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    let mut prev: Option<usize> = None;
    for (i, t) in hyp.iter().enumerate() {
        let continued = prev
            .map(|p| p + 1)
            .filter(|&r| r < reference.len() && !used[r] && reference[r] == *t);
        let pick =
            continued.or_else(|| (0..reference.len()).find(|&r| !used[r] && reference[r] == *t));
        prev = pick;
        if let Some(r) = pick {
            used[r] = true;
            pairs.push((i, r));
        }
    }
    count_chunks(&pairs)
}

pub fn meteor_stats<T: Eq + Hash>(hyp: &[T], reference: &[T]) -> Result<MeteorStats, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let m = exact_matches(hyp, reference);
    let chunks = if m == 0 {
        0
    } else if m <= EXHAUSTIVE_MATCHES && reference.len() <= 64 {
        let options = hyp
            .iter()
            .map(|t| {
                (0..reference.len())
                    .filter(|&r| reference[r] == *t)
                    .collect()
            })
            .collect();
        let mut search = Search {
            hyp,
            options,
            target: m,
            memo: HashMap::new(),
        };
        search
            .best(0, 0, usize::MAX, 0)
            .expect("a full matching exists")
    } else {
        greedy_chunks(hyp, reference)
    };
    Ok(MeteorStats {
        matches: m as u64,
        chunks: chunks as u64,
        hyp_len: hyp.len() as u64,
        ref_len: reference.len() as u64,
    })
}

/// Exact-match METEOR in `[0, 1]`.
pub fn meteor<T: Eq + Hash>(hyp: &[T], reference: &[T]) -> Result<f64, MetricsError> {
    Ok(meteor_stats(hyp, reference)?.score())
}
