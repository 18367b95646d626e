use super::{LinalgError, Mat};

/// Absolute pivot threshold, relative to `max|A|`.
pub const PIVOT_TOL: f64 = 1e-12;

/// LU factorization with partial pivoting, `P A = L U`.
///
/// `L` (unit lower) and `U` are packed into one matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Mat,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    /// Factors `a`. Never fails on singular input; use [`Lu::is_singular`]
    /// or [`Lu::solve`] to find out.
    pub fn factor(a: &Mat) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare {
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let tol = PIVOT_TOL * a.max_abs();
        let mut singular = n > 0 && a.max_abs() == 0.0;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            if pmax <= tol {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        let ukj = lu[(k, j)];
                        lu[(i, j)] -= f * ukj;
                    }
                }
            }
        }
        Ok(Self {
            lu,
            perm,
            sign,
            singular,
        })
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn det(&self) -> f64 {
        let n = self.lu.rows();
        (0..n).map(|i| self.lu[(i, i)]).product::<f64>() * self.sign
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &Mat) -> Result<Mat, LinalgError> {
        let n = self.lu.rows();
        if b.rows() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: (n, b.cols()),
                got: b.shape(),
            });
        }
        if self.singular {
            return Err(LinalgError::SingularMatrix);
        }
        let mut x = Mat::from_fn(n, b.cols(), |i, j| b[(self.perm[i], j)]);
        for j in 0..b.cols() {
            for i in 0..n {
                let mut s = x[(i, j)];
                for k in 0..i {
                    s -= self.lu[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, j)];
                for k in i + 1..n {
                    s -= self.lu[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = s / self.lu[(i, i)];
            }
        }
        Ok(x)
    }
}

/// Solves `A X = B` by LU with partial pivoting.
pub fn lu_solve(a: &Mat, b: &Mat) -> Result<Mat, LinalgError> {
    Lu::factor(a)?.solve(b)
}

/// Determinant via LU (product of pivots times permutation sign).
///
/// Returns 0 for matrices the factorization flags as singular.
pub fn det(a: &Mat) -> Result<f64, LinalgError> {
    let lu = Lu::factor(a)?;
    if lu.is_singular() {
        // Exact zero pivots would give 0 anyway; tiny ones are round-off.
        return Ok(0.0);
    }
    Ok(lu.det())
}

/// In-place LU for the small per-step systems of the rollout.
///
/// Works on a caller-owned `n×n` row-major buffer and writes the row
/// permutation into `perm`. Returns `false` when a pivot falls below the
/// relative threshold.
pub(crate) fn lu_in_place(a: &mut [f64], n: usize, perm: &mut [usize]) -> bool {
    let max_abs = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = PIVOT_TOL * max_abs;
    for (i, p) in perm.iter_mut().enumerate() {
        *p = i;
    }
    for k in 0..n {
        let mut p = k;
        let mut pmax = a[k * n + k].abs();
        for i in k + 1..n {
            let v = a[i * n + k].abs();
            if v > pmax {
                p = i;
                pmax = v;
            }
        }
        if pmax <= tol || !pmax.is_finite() {
            return false;
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        let pivot = a[k * n + k];
        for i in k + 1..n {
            let f = a[i * n + k] / pivot;
            a[i * n + k] = f;
            for j in k + 1..n {
                a[i * n + j] -= f * a[k * n + j];
            }
        }
    }
    true
}

/// Solves `A x = b` in place using factors from [`lu_in_place`].
pub(crate) fn lu_solve_in_place(
    lu: &[f64],
    n: usize,
    perm: &[usize],
    b: &mut [f64],
    tmp: &mut [f64],
) {
    for i in 0..n {
        tmp[i] = b[perm[i]];
    }
    for i in 0..n {
        let mut s = tmp[i];
        for k in 0..i {
            s -= lu[i * n + k] * tmp[k];
        }
        tmp[i] = s;
    }
    for i in (0..n).rev() {
        let mut s = tmp[i];
        for k in i + 1..n {
            s -= lu[i * n + k] * tmp[k];
        }
        tmp[i] = s / lu[i * n + i];
    }
    b[..n].copy_from_slice(&tmp[..n]);
}

/// Solves `Aᵀ x = b` in place using factors from [`lu_in_place`].
///
/// With `P A = L U`, `Aᵀ = Uᵀ Lᵀ P`, so solve `Uᵀ v = b`, `Lᵀ t = v` and
/// scatter `x[perm[i]] = t[i]`.
pub(crate) fn lu_solve_t_in_place(
    lu: &[f64],
    n: usize,
    perm: &[usize],
    b: &mut [f64],
    tmp: &mut [f64],
) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= lu[k * n + i] * tmp[k];
        }
        tmp[i] = s / lu[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = tmp[i];
        for k in i + 1..n {
            s -= lu[k * n + i] * tmp[k];
        }
        tmp[i] = s;
    }
    for i in 0..n {
        b[perm[i]] = tmp[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn cofactor_det(a: &Mat) -> f64 {
        let n = a.rows();
        if n == 1 {
            return a[(0, 0)];
        }
        (0..n)
            .map(|j| {
                let minor = Mat::from_fn(n - 1, n - 1, |i, k| {
                    a[(i + 1, if k < j { k } else { k + 1 })]
                });
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                s * a[(0, j)] * cofactor_det(&minor)
            })
            .sum()
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_mat(&mut rng, 3, 2);
        assert_eq!(lu_solve(&Mat::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn diagonal_solve() {
        let a = Mat::from_diag(&[2.0, 4.0]);
        let b = Mat::from_rows(&[[2.0], [8.0]]);
        assert_eq!(lu_solve(&a, &b).unwrap(), Mat::from_rows(&[[1.0], [2.0]]));
    }

    #[test]
    fn reconstructs_known_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_mat(&mut rng, 5, 5).add(&Mat::identity(5).scale(3.0));
        let x = random_mat(&mut rng, 5, 3);
        let got = lu_solve(&a, &a.matmul(&x)).unwrap();
        assert!(got.max_abs_diff(&x) < 1e-10);
    }

    #[test]
    fn singular_is_reported() {
        let a = Mat::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(
            lu_solve(&a, &Mat::identity(2)),
            Err(LinalgError::SingularMatrix)
        ));
        assert_eq!(det(&a).unwrap(), 0.0);
    }

    #[test]
    fn det_matches_cofactor_expansion() {
        assert_eq!(det(&Mat::identity(4)).unwrap(), 1.0);
        assert_eq!(det(&Mat::from_diag(&[2.0, 3.0])).unwrap(), 6.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_mat(&mut rng, 4, 4);
            let want = cofactor_det(&a);
            let got = det(&a).unwrap();
            assert!(
                (got - want).abs() <= 1e-10 * want.abs().max(1e-3),
                "{got} vs {want}"
            );
        }
    }

    #[test]
    fn in_place_solves_agree_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..6 {
            let a = random_mat(&mut rng, n, n).add(&Mat::identity(n));
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut lu = a.as_slice().to_vec();
            let mut perm = vec![0; n];
            let mut tmp = vec![0.0; n];
            assert!(lu_in_place(&mut lu, n, &mut perm));

            let mut x = b.clone();
            lu_solve_in_place(&lu, n, &perm, &mut x, &mut tmp);
            let want = lu_solve(&a, &Mat::column(&b)).unwrap();
            assert!(Mat::column(&x).max_abs_diff(&want) < 1e-12);

            let mut xt = b.clone();
            lu_solve_t_in_place(&lu, n, &perm, &mut xt, &mut tmp);
            let want_t = lu_solve(&a.transpose(), &Mat::column(&b)).unwrap();
            assert!(Mat::column(&xt).max_abs_diff(&want_t) < 1e-12);
        }
    }
}
