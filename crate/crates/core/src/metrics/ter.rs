use super::MetricsError;

/// Hypotheses up to this length try every block at every destination.
pub const EXHAUSTIVE_MAX_LEN: usize = 16;
/// Longest block considered for longer hypotheses.
pub const MAX_BLOCK: usize = 10;

/// Edit operations for one pair; the rate is `100·(edits + shifts)/ref_len`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TerStats {
    pub edits: u64,
    pub shifts: u64,
    pub ref_len: u64,
}

impl TerStats {
    pub fn rate(&self) -> f64 {
        if self.ref_len == 0 {
            return 0.0;
        }
        100.0 * (self.edits + self.shifts) as f64 / self.ref_len as f64
    }
}

impl std::ops::Add for TerStats {
    type Output = TerStats;
    fn add(self, o: TerStats) -> TerStats {
        TerStats {
            edits: self.edits + o.edits,
            shifts: self.shifts + o.shifts,
            ref_len: self.ref_len + o.ref_len,
        }
    }
}

/// Word-level Levenshtein distance with unit costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// For every reference position, the number of hypothesis tokens consumed before it
/// on one optimal alignment path.
fn alignment_anchors<T: PartialEq>(a: &[T], b: &[T]) -> Vec<usize> {
    let (n, m) = (a.len(), b.len());
    let mut d = vec![0usize; (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        d[at(i, 0)] = i;
    }
    for j in 0..=m {
        d[at(0, j)] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[at(i - 1, j - 1)] + usize::from(a[i - 1] != b[j - 1]);
            d[at(i, j)] = sub.min(d[at(i - 1, j)] + 1).min(d[at(i, j - 1)] + 1);
        }
    }
    let mut anchors = vec![0; m];
    let (mut i, mut j) = (n, m);
    while j > 0 {
        if i > 0 && d[at(i, j)] == d[at(i - 1, j - 1)] + usize::from(a[i - 1] != b[j - 1]) {
            anchors[j - 1] = i - 1;
            i -= 1;
            j -= 1;
        } else if i > 0 && d[at(i, j)] == d[at(i - 1, j)] + 1 {
            i -= 1;
        } else {
            anchors[j - 1] = i;
            j -= 1;
        }
    }
    anchors
}

/// Move `seq[start..start+len]` so that it begins at `dest` in the shortened sequence.
fn apply_shift<T: Clone>(seq: &[T], start: usize, len: usize, dest: usize) -> Vec<T> {
    let mut rest: Vec<T> = Vec::with_capacity(seq.len());
    rest.extend_from_slice(&seq[..start]);
    rest.extend_from_slice(&seq[start + len..]);
    let mut out = Vec::with_capacity(seq.len());
    out.extend_from_slice(&rest[..dest]);
    out.extend_from_slice(&seq[start..start + len]);
    out.extend_from_slice(&rest[dest..]);
    out
}

/// Candidate `(len, start, dest)` shifts for the current hypothesis.
fn candidates<T: PartialEq>(hyp: &[T], reference: &[T]) -> Vec<(usize, usize, usize)> {
    let n = hyp.len();
    let mut out = Vec::new();
    if n <= EXHAUSTIVE_MAX_LEN {
        for len in 1..n {
            for start in 0..=n - len {
                for dest in 0..=n - len {
                    if dest != start {
                        out.push((len, start, dest));
                    }
                }
            }
        }
        return out;
    }
    let anchors = alignment_anchors(hyp, reference);
    for len in 1..=MAX_BLOCK.min(n - 1) {
        for start in 0..=n - len {
            let block = &hyp[start..start + len];
            for j in 0..reference.len().saturating_sub(len - 1) {
                if &reference[j..j + len] != block {
                    continue;
                }
                let q = anchors[j];
                if q > start && q < start + len {
                    continue;
                }
                let base = if q >= start + len { q - len } else { q };
                for dest in [base.saturating_sub(1), base, base + 1] {
                    if dest != start && dest <= n - len {
                        out.push((len, start, dest));
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Greedy TER: apply the shift with the largest edit-distance reduction while
/// that reduction exceeds the shift's own cost, then count the remaining edits.
pub fn ter_stats<T: PartialEq + Clone>(
    hyp: &[T],
    reference: &[T],
) -> Result<TerStats, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let mut cur = hyp.to_vec();
    let mut dist = levenshtein(&cur, reference);
    let mut shifts = 0;
    while dist > 1 {
        let mut best: Option<(usize, Vec<T>)> = None;
        for (len, start, dest) in candidates(&cur, reference) {
            let shifted = apply_shift(&cur, start, len, dest);
            let d = levenshtein(&shifted, reference);
            // Candidates arrive ordered by (len, start, dest), so strict improvement keeps the tie rule.
            if d + 1 < dist && best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, shifted));
            }
        }
        match best {
            Some((d, shifted)) => {
                cur = shifted;
                dist = d;
                shifts += 1;
            }
            None => break,
        }
    }
    Ok(TerStats {
        edits: dist as u64,
        shifts,
        ref_len: reference.len() as u64,
    })
}

/// Translation edit rate in percent.
pub fn ter<T: PartialEq + Clone>(hyp: &[T], reference: &[T]) -> Result<f64, MetricsError> {
    Ok(ter_stats(hyp, reference)?.rate())
}
