use super::NumError;

/// Central-difference gradient `(f(x + h eᵢ) - f(x - h eᵢ)) / 2h`.
///
/// Coordinates where `f` is not finite on either side are collected and
/// reported together.
pub fn finite_diff_grad<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>, NumError>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    let mut failed = Vec::new();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if plus.is_finite() && minus.is_finite() {
            grad.push((plus - minus) / (2.0 * h));
        } else {
            failed.push(i);
            grad.push(f64::NAN);
        }
    }
    if failed.is_empty() {
        Ok(grad)
    } else {
        Err(NumError::FiniteDiff { coords: failed })
    }
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
