use super::Tensor;

/// Central differences `(f(p + h·eᵢ) − f(p − h·eᵢ)) / 2h` for every coordinate of `params`.
pub fn finite_diff<F>(mut f: F, params: &Tensor<f64>, h: f64) -> Tensor<f64>
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Tensor::new(params.shape().to_vec(), out).expect("same shape as params")
}

/// Largest `|a − n| / max(|a|, |n|, floor)` over paired entries.
///
/// The floor keeps entries whose true gradient is (numerically) zero from
/// dividing round-off by round-off.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
