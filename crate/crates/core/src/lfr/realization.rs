use super::{loop_matrix, DeltaStructure, LfrError, LfrPlant};
use crate::linalg::{lu_solve, svd, Mat};

/// Default relative rank tolerance for [`affine_ss_to_lfr`].
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Affine LPV state-space model
/// `A(p) = A₀ + Σ pᵢ Aᵢ` (and likewise for `B`, `C`, `D`).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSsModel {
    pub a0: Mat,
    pub b0: Mat,
    pub c0: Mat,
    pub d0: Mat,
    pub a: Vec<Mat>,
    pub b: Vec<Mat>,
    pub c: Vec<Mat>,
    pub d: Vec<Mat>,
}

impl AffineSsModel {
    pub fn n_p(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<(), LfrError> {
        let (n_x, n_u, n_y) = (self.a0.rows(), self.b0.cols(), self.c0.rows());
        let n_p = self.a.len();
        if self.b.len() != n_p || self.c.len() != n_p || self.d.len() != n_p {
            return Err(LfrError::DimensionMismatch(
                "increment lists have different lengths".into(),
            ));
        }
        let shapes = [(n_x, n_x), (n_x, n_u), (n_y, n_x), (n_y, n_u)];
        let base = [&self.a0, &self.b0, &self.c0, &self.d0];
        for (m, s) in base.iter().zip(shapes) {
            if m.shape() != s {
                return Err(LfrError::DimensionMismatch(format!(
                    "base block is {:?}, expected {:?}",
                    m.shape(),
                    s
                )));
            }
        }
        for i in 0..n_p {
            for (m, s) in [&self.a[i], &self.b[i], &self.c[i], &self.d[i]]
                .iter()
                .zip(shapes)
            {
                if m.shape() != s {
                    return Err(LfrError::DimensionMismatch(format!(
                        "increment {i} block is {:?}, expected {:?}",
                        m.shape(),
                        s
                    )));
                }
            }
        }
        Ok(())
    }

    /// `(A(p), B(p), C(p), D(p))`.
    pub fn evaluate(&self, p: &[f64]) -> (Mat, Mat, Mat, Mat) {
        let mut out = (
            self.a0.clone(),
            self.b0.clone(),
            self.c0.clone(),
            self.d0.clone(),
        );
        for (i, &pi) in p.iter().enumerate() {
            out.0.add_assign(&self.a[i].scale(pi));
            out.1.add_assign(&self.b[i].scale(pi));
            out.2.add_assign(&self.c[i].scale(pi));
            out.3.add_assign(&self.d[i].scale(pi));
        }
        out
    }
}

/// LFR realization of an affine model.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRealization {
    pub plant: LfrPlant,
    /// Original index of each retained scheduling variable. Variables whose
    /// increments are numerically zero are dropped.
    pub kept: Vec<usize>,
}

/// Realizes an affine LPV-SS model as an LFR with `D_zw = 0`.
///
/// Each stacked increment `[Aᵢ Bᵢ; Cᵢ Dᵢ]` is split into `Lᵢ Rᵢ` by a
/// truncated SVD (`ηᵢ` = numerical rank, relative tolerance `rank_tol`
/// against the increment's largest singular value). `Lᵢ` feeds the `w`
/// columns of `[B_w; D_yw]`, `Rᵢ` the `z` rows of `[C_z D_zu]`.
pub fn affine_ss_to_lfr(m: &AffineSsModel, rank_tol: f64) -> Result<AffineRealization, LfrError> {
    m.validate()?;
    let (n_x, n_u, n_y) = (m.a0.rows(), m.b0.cols(), m.c0.rows());
    let mut lefts = Vec::new();
    let mut rights = Vec::new();
    let mut eta = Vec::new();
    let mut kept = Vec::new();
    for i in 0..m.n_p() {
        let top = Mat::hstack(&[&m.a[i], &m.b[i]]);
        let bottom = Mat::hstack(&[&m.c[i], &m.d[i]]);
        let stacked = Mat::vstack(&[&top, &bottom]);
        let dec = svd(&stacked);
        let smax = dec.s.first().copied().unwrap_or(0.0);
        let rank = if smax > 0.0 {
            dec.s.iter().take_while(|&&s| s > rank_tol * smax).count()
        } else {
            0
        };
        if rank == 0 {
            log::warn!("scheduling variable {i} has a zero increment and is dropped");
            continue;
        }
        let root: Vec<f64> = dec.s[..rank].iter().map(|s| s.sqrt()).collect();
        let l = dec.u.block(0, 0, n_x + n_y, rank).scale_cols(&root);
        let r = dec
            .v
            .block(0, 0, n_x + n_u, rank)
            .scale_cols(&root)
            .transpose();
        lefts.push(l);
        rights.push(r);
        eta.push(rank);
        kept.push(i);
    }

    let delta = DeltaStructure::new(eta)?;
    let n_w = delta.n_w();
    let left = if lefts.is_empty() {
        Mat::zeros(n_x + n_y, 0)
    } else {
        Mat::hstack(&lefts.iter().collect::<Vec<_>>())
    };
    let right = if rights.is_empty() {
        Mat::zeros(0, n_x + n_u)
    } else {
        Mat::vstack(&rights.iter().collect::<Vec<_>>())
    };
    let plant = LfrPlant {
        a_x: m.a0.clone(),
        b_w: left.block(0, 0, n_x, n_w),
        b_u: m.b0.clone(),
        c_z: right.block(0, 0, n_w, n_x),
        d_zw: Mat::zeros(n_w, n_w),
        d_zu: right.block(0, n_x, n_w, n_u),
        c_y: m.c0.clone(),
        d_yw: left.block(n_x, 0, n_y, n_w),
        d_yu: m.d0.clone(),
        delta,
    };
    Ok(AffineRealization { plant, kept })
}

/// Scheduling box `[p_min, p_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingBox {
    p_min: Vec<f64>,
    p_max: Vec<f64>,
}

impl SchedulingBox {
    pub fn new(p_min: Vec<f64>, p_max: Vec<f64>) -> Result<Self, LfrError> {
        if p_min.len() != p_max.len() {
            return Err(LfrError::DimensionMismatch(
                "box bounds differ in length".into(),
            ));
        }
        if let Some(i) = (0..p_min.len()).find(|&i| !(p_min[i] < p_max[i])) {
            return Err(LfrError::InvalidStructure(format!(
                "box is empty in coordinate {i}: [{}, {}]",
                p_min[i], p_max[i]
            )));
        }
        Ok(Self { p_min, p_max })
    }

    /// `[-1, 1]^n_p`.
    pub fn unit(n_p: usize) -> Self {
        Self {
            p_min: vec![-1.0; n_p],
            p_max: vec![1.0; n_p],
        }
    }

    pub fn dim(&self) -> usize {
        self.p_min.len()
    }

    pub fn p_min(&self) -> &[f64] {
        &self.p_min
    }

    pub fn p_max(&self) -> &[f64] {
        &self.p_max
    }

    pub fn center(&self) -> Vec<f64> {
        self.p_min
            .iter()
            .zip(&self.p_max)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn half_width(&self) -> Vec<f64> {
        self.p_min
            .iter()
            .zip(&self.p_max)
            .map(|(a, b)| 0.5 * (b - a))
            .collect()
    }
}

/// Affine map `p = center + scale ⊙ p̄` from the unit box to the original one.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleMap {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ScheduleMap {
    pub fn apply(&self, p_bar: &[f64]) -> Vec<f64> {
        p_bar
            .iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(pb, (c, s))| c + s * pb)
            .collect()
    }
}

/// Rewrites `plant` so that its scheduling box becomes `[-1, 1]^n_p`.
///
/// The constant part `Δ(c)` of the scheduling block is closed into the
/// plant through `Φ₀ = (I − D_zw Δ(c))⁻¹`, and the half-widths are absorbed
/// into the `z` rows. The result satisfies
/// `eliminate_to_ss(normalized, p̄) = eliminate_to_ss(plant, c + s ⊙ p̄)`.
pub fn normalize_scheduling(
    plant: &LfrPlant,
    bbox: &SchedulingBox,
) -> Result<(LfrPlant, ScheduleMap), LfrError> {
    plant.validate()?;
    if bbox.dim() != plant.n_p() {
        return Err(LfrError::DimensionMismatch(format!(
            "box has dimension {}, plant has n_p = {}",
            bbox.dim(),
            plant.n_p()
        )));
    }
    let center = bbox.center();
    let scale = bbox.half_width();
    let dc = plant.delta.expand(&center)?;
    let s_eta = plant.delta.expand(&scale)?;

    // Φ₀ [C_z D_zw D_zu]
    let rhs = Mat::hstack(&[&plant.c_z, &plant.d_zw, &plant.d_zu]);
    let sol = lu_solve(&loop_matrix(plant, &dc), &rhs).map_err(|_| LfrError::SingularCenter)?;
    let (n_x, n_w) = (plant.a_x.rows(), plant.delta.n_w());
    let n_u = plant.b_u.cols();
    let phi_cz = sol.block(0, 0, n_w, n_x);
    let phi_dzw = sol.block(0, n_x, n_w, n_w);
    let phi_dzu = sol.block(0, n_x + n_w, n_w, n_u);

    let bw_dc = plant.b_w.scale_cols(&dc);
    let dyw_dc = plant.d_yw.scale_cols(&dc);
    let normalized = LfrPlant {
        a_x: plant.a_x.add(&bw_dc.matmul(&phi_cz)),
        b_w: plant.b_w.add(&bw_dc.matmul(&phi_dzw)),
        b_u: plant.b_u.add(&bw_dc.matmul(&phi_dzu)),
        c_z: phi_cz.scale_rows(&s_eta),
        d_zw: phi_dzw.scale_rows(&s_eta),
        d_zu: phi_dzu.scale_rows(&s_eta),
        c_y: plant.c_y.add(&dyw_dc.matmul(&phi_cz)),
        d_yw: plant.d_yw.add(&dyw_dc.matmul(&phi_dzw)),
        d_yu: plant.d_yu.add(&dyw_dc.matmul(&phi_dzu)),
        delta: plant.delta.clone(),
    };
    Ok((normalized, ScheduleMap { center, scale }))
}
