//! Direct parameterization of the latent feedthrough `D_zw`.
//!
//! `D_zw = exp(-N)` with `N = Ψ (D_Aᵀ D_A + D_B − D_Bᵀ + ε I)`,
//! `Ψ = diag(exp(d_d))`, `D_A` lower triangular and `D_B` strictly upper
//! triangular. The symmetric part of `Ψ⁻¹ N` is `D_Aᵀ D_A + ε I ⪰ ε I`, so
//! every eigenvalue of `N` has positive real part and `ρ(D_zw) < 1` for
//! every value of the free variables.

use serde::{Deserialize, Serialize};

use super::LfrError;
use crate::linalg::{expm, expm_frechet, Mat};

/// Default `ε` added to the symmetric part of `N`.
pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Largest accepted `ε`.
pub const MAX_EPSILON: f64 = 0.1;

/// Free variables generating a well-posed `D_zw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellPosedFactors {
    pub n_w: usize,
    /// Lower triangle of `D_A` including the diagonal, row-major over `i >= j`.
    pub da_lower: Vec<f64>,
    /// Strict upper triangle of `D_B`, row-major over `i < j`.
    pub db_upper: Vec<f64>,
    /// Log-scales `d_d`, `Ψ = diag(exp(d_d))`.
    pub d_d: Vec<f64>,
    /// Fixed constant, not a trained variable.
    pub epsilon: f64,
}

/// Gradients with respect to the trainable parts of [`WellPosedFactors`].
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGradient {
    pub da_lower: Vec<f64>,
    pub db_upper: Vec<f64>,
    pub d_d: Vec<f64>,
}

impl WellPosedFactors {
    pub fn lower_len(n_w: usize) -> usize {
        n_w * (n_w + 1) / 2
    }

    pub fn upper_len(n_w: usize) -> usize {
        n_w * n_w.saturating_sub(1) / 2
    }

    /// Number of trainable reals: `n_w² + n_w`.
    pub fn param_count(n_w: usize) -> usize {
        Self::lower_len(n_w) + Self::upper_len(n_w) + n_w
    }

    pub fn new(
        n_w: usize,
        da_lower: Vec<f64>,
        db_upper: Vec<f64>,
        d_d: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self, LfrError> {
        let f = Self {
            n_w,
            da_lower,
            db_upper,
            d_d,
            epsilon,
        };
        f.validate()?;
        Ok(f)
    }

    /// All free variables zero.
    pub fn zeros(n_w: usize, epsilon: f64) -> Result<Self, LfrError> {
        Self::new(
            n_w,
            vec![0.0; Self::lower_len(n_w)],
            vec![0.0; Self::upper_len(n_w)],
            vec![0.0; n_w],
            epsilon,
        )
    }

    pub fn validate(&self) -> Result<(), LfrError> {
        let n = self.n_w;
        if self.da_lower.len() != Self::lower_len(n)
            || self.db_upper.len() != Self::upper_len(n)
            || self.d_d.len() != n
        {
            return Err(LfrError::DimensionMismatch(format!(
                "well-posed factors for n_w = {n} need {}/{}/{} entries, got {}/{}/{}",
                Self::lower_len(n),
                Self::upper_len(n),
                n,
                self.da_lower.len(),
                self.db_upper.len(),
                self.d_d.len()
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= MAX_EPSILON) {
            return Err(LfrError::InvalidStructure(format!(
                "epsilon must lie in (0, {MAX_EPSILON}], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// `D_A`, lower triangular.
    pub fn d_a(&self) -> Mat {
        let n = self.n_w;
        let mut m = Mat::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                m[(i, j)] = self.da_lower[k];
                k += 1;
            }
        }
        m
    }

    /// `D_B`, strictly upper triangular.
    pub fn d_b(&self) -> Mat {
        let n = self.n_w;
        let mut m = Mat::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                m[(i, j)] = self.db_upper[k];
                k += 1;
            }
        }
        m
    }

    pub fn psi(&self) -> Vec<f64> {
        self.d_d.iter().map(|v| v.exp()).collect()
    }

    /// `S = D_Aᵀ D_A + D_B − D_Bᵀ + ε I`, so that `N = Ψ S`.
    fn inner(&self) -> Mat {
        let da = self.d_a();
        let db = self.d_b();
        da.transpose()
            .matmul(&da)
            .add(&db)
            .sub(&db.transpose())
            .add(&Mat::identity(self.n_w).scale(self.epsilon))
    }

    pub fn build_n(&self) -> Mat {
        self.inner().scale_rows(&self.psi())
    }

    pub fn build_dzw(&self) -> Result<Mat, LfrError> {
        Ok(expm(&self.build_n().scale(-1.0))?)
    }

    /// Pulls a gradient `Ḡ = ∂ℓ/∂D_zw` back to the free variables.
    ///
    /// `∂ℓ/∂N = −L(−Nᵀ, Ḡ)` by the adjoint identity of the exponential's
    /// Fréchet derivative; the rest is the product rule through `Ψ S`.
    pub fn backward(&self, dzw_bar: &Mat) -> Result<FactorGradient, LfrError> {
        let n = self.n_w;
        let s = self.inner();
        let psi = self.psi();
        let n_mat = s.scale_rows(&psi);
        let (_, l) = expm_frechet(&n_mat.transpose().scale(-1.0), dzw_bar)?;
        let n_bar = l.scale(-1.0);

        let d_d = (0..n)
            .map(|i| psi[i] * (0..n).map(|j| n_bar[(i, j)] * s[(i, j)]).sum::<f64>())
            .collect();
        let s_bar = n_bar.scale_rows(&psi);
        let da_full = self.d_a().matmul(&s_bar.add(&s_bar.transpose()));
        let db_full = s_bar.sub(&s_bar.transpose());

        let mut da_lower = Vec::with_capacity(Self::lower_len(n));
        let mut db_upper = Vec::with_capacity(Self::upper_len(n));
        for i in 0..n {
            for j in 0..=i {
                da_lower.push(da_full[(i, j)]);
            }
            for j in i + 1..n {
                db_upper.push(db_full[(i, j)]);
            }
        }
        Ok(FactorGradient {
            da_lower,
            db_upper,
            d_d,
        })
    }
}
