use super::{DeltaStructure, LfrError};
use crate::linalg::Mat;

/// Constant part `M` of the interconnection together with the Δ-block
/// structure:
///
/// ```text
/// x⁺ = A_x x + B_w w + B_u u
/// z  = C_z x + D_zw w + D_zu u
/// y  = C_y x + D_yw w + D_yu u
/// w  = Δ(p) z
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LfrPlant {
    pub a_x: Mat,
    pub b_w: Mat,
    pub b_u: Mat,
    pub c_z: Mat,
    pub d_zw: Mat,
    pub d_zu: Mat,
    pub c_y: Mat,
    pub d_yw: Mat,
    pub d_yu: Mat,
    pub delta: DeltaStructure,
}

/// `(n_x, n_w, n_u, n_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantDims {
    pub n_x: usize,
    pub n_w: usize,
    pub n_u: usize,
    pub n_y: usize,
}

impl LfrPlant {
    /// Checks every block against the dimensions implied by `a_x`, `b_u`,
    /// `c_y` and the Δ structure.
    pub fn validate(&self) -> Result<PlantDims, LfrError> {
        let n_x = self.a_x.rows();
        let n_u = self.b_u.cols();
        let n_y = self.c_y.rows();
        let n_w = self.delta.n_w();
        let expect = [
            ("A_x", &self.a_x, (n_x, n_x)),
            ("B_w", &self.b_w, (n_x, n_w)),
            ("B_u", &self.b_u, (n_x, n_u)),
            ("C_z", &self.c_z, (n_w, n_x)),
            ("D_zw", &self.d_zw, (n_w, n_w)),
            ("D_zu", &self.d_zu, (n_w, n_u)),
            ("C_y", &self.c_y, (n_y, n_x)),
            ("D_yw", &self.d_yw, (n_y, n_w)),
            ("D_yu", &self.d_yu, (n_y, n_u)),
        ];
        for (name, m, shape) in expect {
            if m.shape() != shape {
                return Err(LfrError::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    shape.0,
                    shape.1
                )));
            }
            if !m.is_finite() {
                return Err(LfrError::NonFinite(name.to_string()));
            }
        }
        Ok(PlantDims { n_x, n_w, n_u, n_y })
    }

    pub fn dims(&self) -> PlantDims {
        PlantDims {
            n_x: self.a_x.rows(),
            n_w: self.delta.n_w(),
            n_u: self.b_u.cols(),
            n_y: self.c_y.rows(),
        }
    }

    pub fn n_p(&self) -> usize {
        self.delta.n_p()
    }

    /// All-zero plant of the given size.
    pub fn zeros(n_x: usize, n_u: usize, n_y: usize, delta: DeltaStructure) -> Self {
        let n_w = delta.n_w();
        Self {
            a_x: Mat::zeros(n_x, n_x),
            b_w: Mat::zeros(n_x, n_w),
            b_u: Mat::zeros(n_x, n_u),
            c_z: Mat::zeros(n_w, n_x),
            d_zw: Mat::zeros(n_w, n_w),
            d_zu: Mat::zeros(n_w, n_u),
            c_y: Mat::zeros(n_y, n_x),
            d_yw: Mat::zeros(n_y, n_w),
            d_yu: Mat::zeros(n_y, n_u),
            delta,
        }
    }

    /// True when `D_zw` is identically zero (affine scheduling dependence).
    pub fn is_affine(&self) -> bool {
        self.d_zw.as_slice().iter().all(|&v| v == 0.0)
    }
}
