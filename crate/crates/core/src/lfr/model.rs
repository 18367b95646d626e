use serde::{Deserialize, Serialize};

use super::{
    eliminate_to_ss, simulate, DeltaStructure, FrozenSs, LfrError, LfrPlant, Scheduling,
    Trajectory, WellPosedFactors,
};
use crate::linalg::Mat;
use crate::sched::SchedulingNet;

/// Tag written into every model document.
pub const MODEL_FORMAT: &str = "lpvlfr-model/1";

/// How `D_zw` is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelMode {
    /// `D_zw = 0`: the eliminated model is affine in `p`.
    Affine,
    /// `D_zw` generated from [`WellPosedFactors`].
    Rational,
}

impl std::fmt::Display for ModelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelMode::Affine => "affine",
            ModelMode::Rational => "rational",
        })
    }
}

impl std::str::FromStr for ModelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "affine" => Ok(ModelMode::Affine),
            "rational" => Ok(ModelMode::Rational),
            other => Err(format!(
                "unknown mode '{other}' (expected affine or rational)"
            )),
        }
    }
}

/// Source of the scheduling signal of a model.
#[derive(Debug, Clone, PartialEq)]
pub enum SchedulingMap {
    /// `p_k = ψ(x_k, u_k, d_k)`.
    Net(SchedulingNet),
    /// `p_k = d_k`; requires `n_d = n_p`.
    Exogenous,
}

/// Per-channel affine scaling applied to `u` and `y` before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataScalers {
    pub u_mean: Vec<f64>,
    pub u_std: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

fn column_stats(m: &Mat) -> (Vec<f64>, Vec<f64>) {
    let (n, c) = m.shape();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for k in 0..n {
        for (acc, v) in mean.iter_mut().zip(m.row(k)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n.max(1) as f64);
    for k in 0..n {
        for ((acc, v), mu) in var.iter_mut().zip(m.row(k)).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let std = var
        .iter()
        .map(|v| {
            let s = (v / n.max(1) as f64).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

fn apply_affine(m: &Mat, shift: &[f64], scale: &[f64], forward: bool) -> Mat {
    Mat::from_fn(m.rows(), m.cols(), |i, j| {
        if forward {
            (m[(i, j)] - shift[j]) / scale[j]
        } else {
            m[(i, j)] * scale[j] + shift[j]
        }
    })
}

impl DataScalers {
    /// Zero-mean, unit-variance scalers from training data. Constant
    /// channels keep unit scale.
    pub fn fit(u: &Mat, y: &Mat) -> Self {
        let (u_mean, u_std) = column_stats(u);
        let (y_mean, y_std) = column_stats(y);
        Self {
            u_mean,
            u_std,
            y_mean,
            y_std,
        }
    }

    pub fn scale_u(&self, u: &Mat) -> Mat {
        apply_affine(u, &self.u_mean, &self.u_std, true)
    }

    pub fn scale_y(&self, y: &Mat) -> Mat {
        apply_affine(y, &self.y_mean, &self.y_std, true)
    }

    pub fn unscale_y(&self, y: &Mat) -> Mat {
        apply_affine(y, &self.y_mean, &self.y_std, false)
    }
}

/// A complete identified model: plant, scheduling map, initial state and
/// optional data scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct LfrModel {
    pub mode: ModelMode,
    pub plant: LfrPlant,
    /// Present exactly in rational mode.
    pub factors: Option<WellPosedFactors>,
    pub scheduling: SchedulingMap,
    pub x0: Vec<f64>,
    pub scalers: Option<DataScalers>,
}

impl LfrModel {
    pub fn validate(&self) -> Result<(), LfrError> {
        let dims = self.plant.validate()?;
        if self.x0.len() != dims.n_x {
            return Err(LfrError::DimensionMismatch(format!(
                "x0 has length {}, expected {}",
                self.x0.len(),
                dims.n_x
            )));
        }
        match (self.mode, &self.factors) {
            (ModelMode::Affine, None) => {
                if !self.plant.is_affine() {
                    return Err(LfrError::InvalidStructure(
                        "affine model with non-zero D_zw".into(),
                    ));
                }
            }
            (ModelMode::Rational, Some(f)) => {
                f.validate()?;
                if f.n_w != dims.n_w {
                    return Err(LfrError::DimensionMismatch(format!(
                        "factors are for n_w = {}, plant has n_w = {}",
                        f.n_w, dims.n_w
                    )));
                }
                let built = f.build_dzw()?;
                let tol = 1e-12 * built.max_abs().max(1.0);
                if built.max_abs_diff(&self.plant.d_zw) > tol {
                    return Err(LfrError::InvalidStructure(
                        "D_zw does not match the well-posed factors".into(),
                    ));
                }
            }
            (ModelMode::Affine, Some(_)) => {
                return Err(LfrError::InvalidStructure(
                    "affine model carries well-posed factors".into(),
                ))
            }
            (ModelMode::Rational, None) => {
                return Err(LfrError::InvalidStructure(
                    "rational model without well-posed factors".into(),
                ))
            }
        }
        match &self.scheduling {
            SchedulingMap::Net(net) => {
                if net.n_x() != dims.n_x || net.n_u() != dims.n_u || net.n_p() != self.plant.n_p() {
                    return Err(LfrError::DimensionMismatch(
                        "scheduling net does not match plant dimensions".into(),
                    ));
                }
            }
            SchedulingMap::Exogenous => {}
        }
        if let Some(s) = &self.scalers {
            if s.u_mean.len() != dims.n_u
                || s.u_std.len() != dims.n_u
                || s.y_mean.len() != dims.n_y
                || s.y_std.len() != dims.n_y
            {
                return Err(LfrError::DimensionMismatch(
                    "data scalers do not match channels".into(),
                ));
            }
            if s.u_std
                .iter()
                .chain(&s.y_std)
                .any(|v| !(*v > 0.0 && v.is_finite()))
            {
                return Err(LfrError::InvalidStructure(
                    "data scalers need positive scales".into(),
                ));
            }
        }
        Ok(())
    }

    /// Number of exogenous channels the model consumes.
    pub fn n_d(&self) -> usize {
        match &self.scheduling {
            SchedulingMap::Net(net) => net.n_d(),
            SchedulingMap::Exogenous => self.plant.n_p(),
        }
    }

    /// Simulates from `x0` on raw (unscaled) data; `y` in the trajectory is
    /// in data units, the other signals in model units.
    pub fn simulate(&self, u: &Mat, d: &Mat) -> Result<Trajectory, LfrError> {
        self.simulate_from(u, d, &self.x0)
    }

    pub fn simulate_from(&self, u: &Mat, d: &Mat, x0: &[f64]) -> Result<Trajectory, LfrError> {
        if d.cols() != self.n_d() || d.rows() != u.rows() {
            return Err(LfrError::DimensionMismatch(format!(
                "exogenous signal is {}x{}, model expects {}x{}",
                d.rows(),
                d.cols(),
                u.rows(),
                self.n_d()
            )));
        }
        let scaled;
        let u_model = match &self.scalers {
            Some(s) => {
                if u.cols() != s.u_mean.len() {
                    return Err(LfrError::DimensionMismatch(format!(
                        "input has {} channels, model expects {}",
                        u.cols(),
                        s.u_mean.len()
                    )));
                }
                scaled = s.scale_u(u);
                &scaled
            }
            None => u,
        };
        let sched = match &self.scheduling {
            SchedulingMap::Net(net) => Scheduling::Net(net),
            SchedulingMap::Exogenous => Scheduling::Exogenous(d),
        };
        let mut traj = simulate(&self.plant, sched, u_model, d, x0)?;
        if let Some(s) = &self.scalers {
            traj.y = s.unscale_y(&traj.y);
        }
        Ok(traj)
    }

    pub fn predict(&self, u: &Mat, d: &Mat) -> Result<Mat, LfrError> {
        Ok(self.simulate(u, d)?.y)
    }

    /// Frozen LTI matrices of the plant at `p` (model units).
    pub fn frozen(&self, p: &[f64]) -> Result<FrozenSs, LfrError> {
        eliminate_to_ss(&self.plant, p)
    }

    pub fn to_document(&self) -> ModelDocument {
        let d = self.plant.dims();
        let rows = |m: &Mat| m.to_rows();
        ModelDocument {
            format: MODEL_FORMAT.to_string(),
            mode: self.mode,
            dims: DocDims {
                n_x: d.n_x,
                n_u: d.n_u,
                n_y: d.n_y,
                n_d: self.n_d(),
                n_p: self.plant.n_p(),
                n_w: d.n_w,
            },
            eta: self.plant.delta.eta().to_vec(),
            blocks: DocBlocks {
                a_x: rows(&self.plant.a_x),
                b_w: rows(&self.plant.b_w),
                b_u: rows(&self.plant.b_u),
                c_z: rows(&self.plant.c_z),
                d_zw: rows(&self.plant.d_zw),
                d_zu: rows(&self.plant.d_zu),
                c_y: rows(&self.plant.c_y),
                d_yw: rows(&self.plant.d_yw),
                d_yu: rows(&self.plant.d_yu),
            },
            wellposed_factors: self.factors.clone(),
            scheduling: match self.scheduling {
                SchedulingMap::Net(_) => SchedulingTag::Net,
                SchedulingMap::Exogenous => SchedulingTag::Exogenous,
            },
            scheduling_net: match &self.scheduling {
                SchedulingMap::Net(net) => Some(net.clone()),
                SchedulingMap::Exogenous => None,
            },
            data_scalers: self.scalers.clone(),
            x0: self.x0.clone(),
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self, LfrError> {
        if doc.format != MODEL_FORMAT {
            return Err(LfrError::InvalidStructure(format!(
                "unsupported model format '{}', expected '{MODEL_FORMAT}'",
                doc.format
            )));
        }
        let plant = doc.plant()?;
        let dims = doc.dims;
        let scheduling = match (doc.scheduling, doc.scheduling_net) {
            (SchedulingTag::Net, Some(net)) => SchedulingMap::Net(net),
            (SchedulingTag::Net, None) => {
                return Err(LfrError::InvalidStructure(
                    "scheduling 'net' without scheduling_net".into(),
                ))
            }
            (SchedulingTag::Exogenous, _) => SchedulingMap::Exogenous,
        };
        let model = LfrModel {
            mode: doc.mode,
            plant,
            factors: doc.wellposed_factors,
            scheduling,
            x0: doc.x0,
            scalers: doc.data_scalers,
        };
        model.validate()?;
        if model.n_d() != dims.n_d {
            return Err(LfrError::DimensionMismatch(format!(
                "document declares n_d = {}, scheduling map uses {}",
                dims.n_d,
                model.n_d()
            )));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LfrError> {
        let doc: ModelDocument = serde_json::from_str(text)
            .map_err(|e| LfrError::InvalidStructure(format!("model document: {e}")))?;
        Self::from_document(doc)
    }
}

impl ModelDocument {
    /// Plant blocks of the document, checked for shape only. Unlike
    /// [`LfrModel::from_document`] this accepts a `D_zw` that is not
    /// generated by well-posed factors, which is what a verifier needs.
    pub fn plant(&self) -> Result<LfrPlant, LfrError> {
        let delta = DeltaStructure::new(self.eta.clone())?;
        let dims = self.dims;
        if delta.n_p() != dims.n_p || delta.n_w() != dims.n_w {
            return Err(LfrError::DimensionMismatch(
                "eta does not match n_p / n_w".into(),
            ));
        }
        let shaped =
            |name: &str, rows: Vec<Vec<f64>>, r: usize, c: usize| -> Result<Mat, LfrError> {
                if r * c == 0
                    && rows.iter().all(|row| row.is_empty())
                    && (rows.is_empty() || rows.len() == r)
                {
                    return Ok(Mat::zeros(r, c));
                }
                let m = Mat::try_from(rows)
                    .map_err(|e| LfrError::InvalidStructure(format!("block {name}: {e}")))?;
                if m.shape() != (r, c) {
                    return Err(LfrError::DimensionMismatch(format!(
                        "block {name} is {}x{}, expected {r}x{c}",
                        m.rows(),
                        m.cols()
                    )));
                }
                Ok(m)
            };
        let (n_x, n_u, n_y, n_w) = (dims.n_x, dims.n_u, dims.n_y, dims.n_w);
        let b = self.blocks.clone();
        let plant = LfrPlant {
            a_x: shaped("A_x", b.a_x, n_x, n_x)?,
            b_w: shaped("B_w", b.b_w, n_x, n_w)?,
            b_u: shaped("B_u", b.b_u, n_x, n_u)?,
            c_z: shaped("C_z", b.c_z, n_w, n_x)?,
            d_zw: shaped("D_zw", b.d_zw, n_w, n_w)?,
            d_zu: shaped("D_zu", b.d_zu, n_w, n_u)?,
            c_y: shaped("C_y", b.c_y, n_y, n_x)?,
            d_yw: shaped("D_yw", b.d_yw, n_y, n_w)?,
            d_yu: shaped("D_yu", b.d_yu, n_y, n_u)?,
            delta,
        };
        plant.validate()?;
        Ok(plant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulingTag {
    Net,
    Exogenous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocDims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub n_d: usize,
    pub n_p: usize,
    pub n_w: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocBlocks {
    #[serde(rename = "A_x")]
    pub a_x: Vec<Vec<f64>>,
    #[serde(rename = "B_w")]
    pub b_w: Vec<Vec<f64>>,
    #[serde(rename = "B_u")]
    pub b_u: Vec<Vec<f64>>,
    #[serde(rename = "C_z")]
    pub c_z: Vec<Vec<f64>>,
    #[serde(rename = "D_zw")]
    pub d_zw: Vec<Vec<f64>>,
    #[serde(rename = "D_zu")]
    pub d_zu: Vec<Vec<f64>>,
    #[serde(rename = "C_y")]
    pub c_y: Vec<Vec<f64>>,
    #[serde(rename = "D_yw")]
    pub d_yw: Vec<Vec<f64>>,
    #[serde(rename = "D_yu")]
    pub d_yu: Vec<Vec<f64>>,
}

/// Serialized form of [`LfrModel`]. Reals are written in shortest
/// round-trip decimal, so reading a document back is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub mode: ModelMode,
    pub dims: DocDims,
    pub eta: Vec<usize>,
    pub blocks: DocBlocks,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wellposed_factors: Option<WellPosedFactors>,
    pub scheduling: SchedulingTag,
    #[serde(default)]
    pub scheduling_net: Option<SchedulingNet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_scalers: Option<DataScalers>,
    pub x0: Vec<f64>,
}
