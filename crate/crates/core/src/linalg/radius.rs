use super::{norm2, Mat};

const MAX_SQUARINGS: u32 = 60;
const REL_TOL: f64 = 1e-8;

/// Result of the iterated-norm spectral radius estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRadius {
    pub value: f64,
    /// False when the estimate had not settled after 60 squarings.
    pub converged: bool,
}

/// Estimates `ρ(A)` from `‖A^(2^k)‖₂^(1/2^k)`, stopping once the estimate
/// has been unchanged over two squarings.
///
/// The power is carried as `c_k · B_k` with `‖B_k‖₂ = 1` and `log c_k`
/// tracked separately, so the squarings never overflow.
pub fn spectral_radius(a: &Mat) -> SpectralRadius {
    assert!(a.is_square(), "spectral_radius: matrix must be square");
    let n0 = norm2(a);
    if n0 == 0.0 {
        return SpectralRadius {
            value: 0.0,
            converged: true,
        };
    }
    // log ‖A^(2^k)‖ ≈ log_c, estimate = exp(log_c / 2^k)
    let mut b = a.scale(1.0 / n0);
    let mut log_c = n0.ln();
    let mut prev = n0;
    let mut settled = 0;
    for k in 1..=MAX_SQUARINGS {
        let sq = b.matmul(&b);
        let nb = norm2(&sq);
        if nb == 0.0 || !nb.is_finite() {
            // B^2 vanished: nilpotent (to round-off), radius is zero.
            return SpectralRadius {
                value: 0.0,
                converged: nb == 0.0,
            };
        }
        log_c = 2.0 * log_c + nb.ln();
        b = sq.scale(1.0 / nb);
        let est = (log_c / 2f64.powi(k as i32)).exp();
        if (est - prev).abs() <= REL_TOL * est.max(f64::MIN_POSITIVE) {
            settled += 1;
        } else {
            settled = 0;
        }
        if settled == 2 {
            return SpectralRadius {
                value: est,
                converged: true,
            };
        }
        prev = est;
    }
    SpectralRadius {
        value: prev,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal() {
        let r = spectral_radius(&Mat::from_diag(&[0.3, -0.9]));
        assert!(r.converged);
        assert!((r.value - 0.9).abs() < 1e-9);
    }

    #[test]
    fn nilpotent_is_zero() {
        let r = spectral_radius(&Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]]));
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn rotation_has_unit_radius() {
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let r = spectral_radius(&Mat::from_rows(&[[c, -s], [s, c]]).scale(0.5));
        assert!((r.value - 0.5).abs() < 1e-8);
    }
}
