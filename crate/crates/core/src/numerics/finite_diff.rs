//! Central-difference gradients, used as the independent oracle for every
//! analytic gradient in this crate.

/// Central finite differences of `loss_fn` with respect to each entry of
/// `params`. The slice is restored to its original values before returning.
/// `loss_fn` must be deterministic in `params` (fix any noise beforehand).
pub fn finite_difference_gradient<F, E>(
    mut loss_fn: F,
    params: &mut [f64],
    step: f64,
) -> Result<Vec<f64>, E>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let original = params[i];
        params[i] = original + step;
        let plus = loss_fn(params);
        params[i] = original - step;
        let minus = loss_fn(params);
        params[i] = original;
        grad.push((plus? - minus?) / (2.0 * step));
    }
    Ok(grad)
}
