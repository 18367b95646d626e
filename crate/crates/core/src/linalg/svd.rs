use super::Mat;

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
///
/// `U` is `m×k`, `V` is `n×k` with `k = min(m, n)`; singular values are
/// sorted in decreasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

const MAX_SWEEPS: usize = 100;

/// One-sided Jacobi SVD. Intended for the small dense blocks of this crate.
pub fn svd(a: &Mat) -> Svd {
    let (m, n) = a.shape();
    if m < n {
        let t = svd(&a.transpose());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    // m >= n: orthogonalize the columns of W = A V.
    let mut w = a.clone();
    let mut v = Mat::identity(n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (wp, wq) = (w[(i, p)], w[(i, q)]);
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (wp, wq) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(usize, f64)> = (0..n)
        .map(|j| (j, (0..m).map(|i| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt()))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut u = Mat::zeros(m, n);
    let mut vs = Mat::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &(j, sigma)) in order.iter().enumerate() {
        s.push(sigma);
        for i in 0..n {
            vs[(i, k)] = v[(i, j)];
        }
        if sigma > 0.0 {
            for i in 0..m {
                u[(i, k)] = w[(i, j)] / sigma;
            }
        }
    }
    Svd { u, s, v: vs }
}

/// Largest singular value.
pub fn norm2(a: &Mat) -> f64 {
    if a.rows() == 0 || a.cols() == 0 {
        return 0.0;
    }
    svd(a).s[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reconstructs_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(m, n) in &[(4, 4), (5, 3), (3, 6), (1, 4), (6, 1)] {
            let a = Mat::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
            let d = svd(&a);
            let rebuilt = d.u.scale_cols(&d.s).matmul(&d.v.transpose());
            assert!(rebuilt.max_abs_diff(&a) < 1e-12, "{m}x{n}");
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
            let vtv = d.v.transpose().matmul(&d.v);
            assert!(vtv.max_abs_diff(&Mat::identity(vtv.rows())) < 1e-12);
        }
    }

    #[test]
    fn rank_one_has_single_nonzero_value() {
        let a = Mat::column(&[1.0, 2.0, 0.0]).matmul(&Mat::from_rows(&[[0.0, 3.0]]));
        let d = svd(&a);
        assert!((d.s[0] - 5f64.sqrt() * 3.0).abs() < 1e-12);
        assert!(d.s[1].abs() < 1e-12);
    }
}
