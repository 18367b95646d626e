use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::lfr::{DeltaStructure, LfrModel, LfrPlant, ModelMode, SchedulingMap, WellPosedFactors};
use crate::linalg::Mat;
use crate::sched::{NetPlan, SchedulingNet};

/// Where the scheduling signal of a trained model comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulingKind {
    /// Learned map `ψ(x, u, d)`.
    #[default]
    Net,
    /// `p_k = d_k`, no scheduling parameters.
    Exogenous,
}

/// Structure of a model to be trained: everything except the values.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub mode: ModelMode,
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub n_d: usize,
    pub delta: DeltaStructure,
    pub scheduling: SchedulingKind,
    pub plan: NetPlan,
    pub epsilon: f64,
}

impl ModelSpec {
    pub fn n_w(&self) -> usize {
        self.delta.n_w()
    }

    pub fn n_p(&self) -> usize {
        self.delta.n_p()
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.n_x == 0 || self.n_u == 0 || self.n_y == 0 {
            return Err(TrainError::Config(
                "n_x, n_u and n_y must be positive".into(),
            ));
        }
        if self.scheduling == SchedulingKind::Exogenous && self.n_d != self.n_p() {
            return Err(TrainError::Config(format!(
                "exogenous scheduling needs n_d = n_p, got n_d = {} and n_p = {}",
                self.n_d,
                self.n_p()
            )));
        }
        if self.mode == ModelMode::Rational {
            WellPosedFactors::zeros(self.n_w(), self.epsilon)?;
        }
        Ok(())
    }

    /// A zero-valued scheduling net with this structure.
    pub fn net_template(&self) -> Option<SchedulingNet> {
        match self.scheduling {
            SchedulingKind::Net => Some(SchedulingNet::zeros(
                self.n_x,
                self.n_u,
                self.n_d,
                self.n_p(),
                &self.plan,
            )),
            SchedulingKind::Exogenous => None,
        }
    }
}

/// Index map of the flat parameter vector
/// `θ = [A_x, B_w, B_u, C_z, (D_A, D_B, d_d), D_zu, C_y, D_yw, D_yu, θ_ψ, x0]`.
///
/// Blocks are stored row-major. The well-posed factor ranges are empty in
/// affine mode, where `D_zw` is fixed at zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub a_x: Range<usize>,
    pub b_w: Range<usize>,
    pub b_u: Range<usize>,
    pub c_z: Range<usize>,
    pub da_lower: Range<usize>,
    pub db_upper: Range<usize>,
    pub d_d: Range<usize>,
    pub d_zu: Range<usize>,
    pub c_y: Range<usize>,
    pub d_yw: Range<usize>,
    pub d_yu: Range<usize>,
    pub net: Range<usize>,
    pub x0: Range<usize>,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        let (n_x, n_u, n_y, n_w) = (spec.n_x, spec.n_u, spec.n_y, spec.n_w());
        let mut off = 0;
        let mut take = |len: usize| {
            let r = off..off + len;
            off += len;
            r
        };
        let rational = spec.mode == ModelMode::Rational;
        let a_x = take(n_x * n_x);
        let b_w = take(n_x * n_w);
        let b_u = take(n_x * n_u);
        let c_z = take(n_w * n_x);
        let da_lower = take(if rational {
            WellPosedFactors::lower_len(n_w)
        } else {
            0
        });
        let db_upper = take(if rational {
            WellPosedFactors::upper_len(n_w)
        } else {
            0
        });
        let d_d = take(if rational { n_w } else { 0 });
        let d_zu = take(n_w * n_u);
        let c_y = take(n_y * n_x);
        let d_yw = take(n_y * n_w);
        let d_yu = take(n_y * n_u);
        let net = take(spec.net_template().map_or(0, |n| n.param_count()));
        let x0 = take(n_x);
        Self {
            a_x,
            b_w,
            b_u,
            c_z,
            da_lower,
            db_upper,
            d_d,
            d_zu,
            c_y,
            d_yw,
            d_yu,
            net,
            x0,
            total: off,
        }
    }

    /// Number of reals spent on the `D_zw` factors.
    pub fn factor_len(&self) -> usize {
        self.da_lower.len() + self.db_upper.len() + self.d_d.len()
    }

    /// Assembles a model from `theta`; builds `D_zw` in rational mode.
    pub fn unflatten(&self, spec: &ModelSpec, theta: &[f64]) -> Result<LfrModel, TrainError> {
        if theta.len() != self.total {
            return Err(TrainError::Config(format!(
                "parameter vector has {} entries, layout expects {}",
                theta.len(),
                self.total
            )));
        }
        let (n_x, n_u, n_y, n_w) = (spec.n_x, spec.n_u, spec.n_y, spec.n_w());
        let block = |r: &Range<usize>, rows: usize, cols: usize| {
            Mat::from_fn(rows, cols, |i, j| theta[r.start + i * cols + j])
        };
        let mut plant = LfrPlant {
            a_x: block(&self.a_x, n_x, n_x),
            b_w: block(&self.b_w, n_x, n_w),
            b_u: block(&self.b_u, n_x, n_u),
            c_z: block(&self.c_z, n_w, n_x),
            d_zw: Mat::zeros(n_w, n_w),
            d_zu: block(&self.d_zu, n_w, n_u),
            c_y: block(&self.c_y, n_y, n_x),
            d_yw: block(&self.d_yw, n_y, n_w),
            d_yu: block(&self.d_yu, n_y, n_u),
            delta: spec.delta.clone(),
        };
        let factors = match spec.mode {
            ModelMode::Affine => None,
            ModelMode::Rational => {
                let f = WellPosedFactors::new(
                    n_w,
                    theta[self.da_lower.clone()].to_vec(),
                    theta[self.db_upper.clone()].to_vec(),
                    theta[self.d_d.clone()].to_vec(),
                    spec.epsilon,
                )?;
                plant.d_zw = f.build_dzw()?;
                Some(f)
            }
        };
        let scheduling = match spec.net_template() {
            Some(mut net) => {
                net.read_params(&theta[self.net.clone()]);
                SchedulingMap::Net(net)
            }
            None => SchedulingMap::Exogenous,
        };
        Ok(LfrModel {
            mode: spec.mode,
            plant,
            factors,
            scheduling,
            x0: theta[self.x0.clone()].to_vec(),
            scalers: None,
        })
    }

    /// Inverse of [`unflatten`](Self::unflatten).
    pub fn flatten(&self, model: &LfrModel) -> Result<Vec<f64>, TrainError> {
        let mut theta = vec![0.0; self.total];
        let p = &model.plant;
        let pairs = [
            (&self.a_x, &p.a_x),
            (&self.b_w, &p.b_w),
            (&self.b_u, &p.b_u),
            (&self.c_z, &p.c_z),
            (&self.d_zu, &p.d_zu),
            (&self.c_y, &p.c_y),
            (&self.d_yw, &p.d_yw),
            (&self.d_yu, &p.d_yu),
        ];
        for (r, m) in pairs {
            if r.len() != m.as_slice().len() {
                return Err(TrainError::Config(
                    "model does not match the parameter layout".into(),
                ));
            }
            theta[r.clone()].copy_from_slice(m.as_slice());
        }
        match &model.factors {
            Some(f) if self.factor_len() > 0 => {
                if f.da_lower.len() != self.da_lower.len()
                    || f.db_upper.len() != self.db_upper.len()
                    || f.d_d.len() != self.d_d.len()
                {
                    return Err(TrainError::Config(
                        "factor sizes do not match the layout".into(),
                    ));
                }
                theta[self.da_lower.clone()].copy_from_slice(&f.da_lower);
                theta[self.db_upper.clone()].copy_from_slice(&f.db_upper);
                theta[self.d_d.clone()].copy_from_slice(&f.d_d);
            }
            None if self.factor_len() == 0 => {}
            _ => {
                return Err(TrainError::Config(
                    "model mode does not match the layout".into(),
                ))
            }
        }
        match &model.scheduling {
            SchedulingMap::Net(net) if net.param_count() == self.net.len() => {
                net.write_params(&mut theta[self.net.clone()]);
            }
            SchedulingMap::Exogenous if self.net.is_empty() => {}
            _ => {
                return Err(TrainError::Config(
                    "scheduling map does not match the layout".into(),
                ))
            }
        }
        if model.x0.len() != self.x0.len() {
            return Err(TrainError::Config("x0 does not match the layout".into()));
        }
        theta[self.x0.clone()].copy_from_slice(&model.x0);
        Ok(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(mode: ModelMode, eta: Vec<usize>, scheduling: SchedulingKind) -> ModelSpec {
        let n_p = eta.len();
        ModelSpec {
            mode,
            n_x: 2,
            n_u: 1,
            n_y: 1,
            n_d: if scheduling == SchedulingKind::Exogenous {
                n_p
            } else {
                1
            },
            delta: DeltaStructure::new(eta).unwrap(),
            scheduling,
            plan: NetPlan::default(),
            epsilon: 1e-3,
        }
    }

    #[test]
    fn rational_adds_square_plus_n() {
        for eta in [vec![1], vec![3], vec![2, 1], vec![1, 2, 3]] {
            let a = ParamLayout::new(&spec(ModelMode::Affine, eta.clone(), SchedulingKind::Net));
            let r = ParamLayout::new(&spec(ModelMode::Rational, eta.clone(), SchedulingKind::Net));
            let n_w: usize = eta.iter().sum();
            assert_eq!(r.total - a.total, n_w * n_w + n_w);
            assert_eq!(a.factor_len(), 0);
        }
    }

    #[test]
    fn exogenous_has_no_net_entries() {
        let l = ParamLayout::new(&spec(
            ModelMode::Affine,
            vec![1, 1],
            SchedulingKind::Exogenous,
        ));
        assert!(l.net.is_empty());
        // A_x 4, B_w 4, B_u 2, C_z 4, D_zu 2, C_y 2, D_yw 2, D_yu 1, x0 2
        assert_eq!(l.total, 23);
    }

    proptest! {
        #[test]
        fn flatten_inverts_unflatten(seed in 0u64..1000, rational in any::<bool>()) {
            use rand::{Rng, SeedableRng};
            let mode = if rational { ModelMode::Rational } else { ModelMode::Affine };
            let s = spec(mode, vec![2, 1], SchedulingKind::Net);
            let l = ParamLayout::new(&s);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let theta: Vec<f64> = (0..l.total).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let model = l.unflatten(&s, &theta).unwrap();
            prop_assert_eq!(l.flatten(&model).unwrap(), theta);
        }
    }
}
