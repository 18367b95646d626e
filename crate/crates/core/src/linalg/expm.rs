//! Matrix exponential by scaling and squaring with a fixed [13/13] Padé
//! approximant, plus its Fréchet derivative through the block-triangular
//! embedding `expm([[A, E], [0, A]]) = [[e^A, L(A, E)], [0, e^A]]`.

use super::{LinalgError, Lu, Mat};

/// Scaling target: `‖A / 2^s‖₁ ≤ THETA_13`.
pub const THETA_13: f64 = 5.4;

const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `e^A`.
pub fn expm(a: &Mat) -> Result<Mat, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let norm = a.norm1();
    if !norm.is_finite() {
        return Err(LinalgError::Overflow);
    }
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a.scale(0.5f64.powi(s));
    let mut r = pade13(&scaled)?;
    for _ in 0..s {
        r = r.matmul(&r);
        if !r.is_finite() {
            return Err(LinalgError::Overflow);
        }
    }
    Ok(r)
}

fn pade13(a: &Mat) -> Result<Mat, LinalgError> {
    let n = a.rows();
    let b = &PADE_13;
    let ident = Mat::identity(n);
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| {
        a6.scale(c6)
            .add(&a4.scale(c4))
            .add(&a2.scale(c2))
            .add(&ident.scale(c0))
    };
    let u_inner = a6
        .matmul(&a6.scale(b[13]).add(&a4.scale(b[11])).add(&a2.scale(b[9])))
        .add(&lin(b[7], b[5], b[3], b[1]));
    let u = a.matmul(&u_inner);
    let v = a6
        .matmul(&a6.scale(b[12]).add(&a4.scale(b[10])).add(&a2.scale(b[8])))
        .add(&lin(b[6], b[4], b[2], b[0]));

    let p = v.add(&u);
    let q = v.sub(&u);
    if !p.is_finite() || !q.is_finite() {
        return Err(LinalgError::Overflow);
    }
    Lu::factor(&q)?.solve(&p)
}

/// Returns `(e^A, L(A, E))`, where `L(A, ·)` is the Fréchet derivative of
/// the exponential at `A`.
///
/// The adjoint satisfies `⟨G, L(A, E)⟩ = ⟨L(Aᵀ, G), E⟩`, which is what
/// reverse-mode code through `expm` relies on.
pub fn expm_frechet(a: &Mat, e: &Mat) -> Result<(Mat, Mat), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if e.shape() != a.shape() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.shape(),
            got: e.shape(),
        });
    }
    let n = a.rows();
    let mut big = Mat::zeros(2 * n, 2 * n);
    big.set_block(0, 0, a);
    big.set_block(0, n, e);
    big.set_block(n, n, a);
    let ex = expm(&big)?;
    Ok((ex.block(0, 0, n, n), ex.block(0, n, n, n)))
}
