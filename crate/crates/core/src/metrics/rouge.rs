use super::MetricsError;

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure with β = 1.
pub fn rouge_l<T: PartialEq>(hyp: &[T], reference: &[T]) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let l = lcs_len(hyp, reference);
    if l == 0 {
        return Ok(0.0);
    }
    let p = l as f64 / hyp.len() as f64;
    let r = l as f64 / reference.len() as f64;
    Ok(2.0 * p * r / (p + r))
}
