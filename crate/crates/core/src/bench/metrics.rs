use super::BenchError;
use crate::linalg::Mat;

/// Best fit rate in percent, clamped below at 0.
///
/// `100 · max{1 − Σ_k ‖y_k − ŷ_k‖₂ / Σ_k ‖y_k − ȳ‖₂, 0}` with `ȳ` the sample
/// mean of `y`.
pub fn bfr(y: &Mat, y_hat: &Mat) -> Result<f64, BenchError> {
    if y.shape() != y_hat.shape() {
        return Err(BenchError::Schema(format!(
            "output shapes differ: {:?} vs {:?}",
            y.shape(),
            y_hat.shape()
        )));
    }
    let (n, c) = y.shape();
    if n < 2 {
        return Err(BenchError::Schema(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let mut mean = vec![0.0; c];
    for k in 0..n {
        for (m, v) in mean.iter_mut().zip(y.row(k)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..n {
        let (yr, hr) = (y.row(k), y_hat.row(k));
        num += yr
            .iter()
            .zip(hr)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        den += yr
            .iter()
            .zip(&mean)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
    }
    if den == 0.0 {
        return Err(BenchError::DegenerateReference);
    }
    Ok((1.0 - num / den).max(0.0) * 100.0)
}

/// Mean squared error over all samples and channels.
pub fn mse(y: &Mat, y_hat: &Mat) -> Result<f64, BenchError> {
    if y.shape() != y_hat.shape() || y.as_slice().is_empty() {
        return Err(BenchError::Schema(
            "output shapes differ or are empty".into(),
        ));
    }
    let s: f64 = y
        .as_slice()
        .iter()
        .zip(y_hat.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(s / y.as_slice().len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Mat {
        Mat::column(v)
    }

    #[test]
    fn perfect_mean_and_clamped() {
        let y = col(&[1.0, 3.0, -2.0, 0.5]);
        assert_eq!(bfr(&y, &y).unwrap(), 100.0);
        let mean = 2.5 / 4.0;
        assert!(bfr(&y, &col(&[mean; 4])).unwrap().abs() < 1e-12);
        let worse = col(&y
            .as_slice()
            .iter()
            .map(|v| 2.0 * mean - v)
            .collect::<Vec<_>>());
        assert_eq!(bfr(&y, &worse).unwrap(), 0.0);
    }

    #[test]
    fn constant_reference_is_degenerate() {
        assert!(matches!(
            bfr(&col(&[1.0, 1.0]), &col(&[0.0, 1.0])),
            Err(BenchError::DegenerateReference)
        ));
    }

    #[test]
    fn hand_computed_two_channel() {
        let y = Mat::from_rows(&[[0.0, 0.0], [3.0, 4.0]]);
        let yh = Mat::from_rows(&[[0.0, 1.0], [3.0, 4.0]]);
        // mean (1.5, 2); deviations have norm 2.5 each; error sum 1
        assert!((bfr(&y, &yh).unwrap() - 80.0).abs() < 1e-12);
    }
}
