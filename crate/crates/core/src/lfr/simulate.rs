use super::{LfrError, LfrPlant};
use crate::linalg::{lu_solve, Mat};
use crate::sched::SchedulingNet;

/// Where the scheduling signal comes from during simulation.
#[derive(Debug, Clone, Copy)]
pub enum Scheduling<'a> {
    /// Self-scheduled: `p_k = ψ(x_k, u_k, d_k)`.
    Net(&'a SchedulingNet),
    /// Externally supplied `N × n_p` sequence.
    Exogenous(&'a Mat),
}

/// Simulated signals. `x` has `N + 1` rows (the final state included).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Mat,
    pub p: Mat,
    pub z: Mat,
    pub w: Mat,
    pub y: Mat,
}

/// Closed-form `(𝒜, ℬ, 𝒞, 𝒟)` of the eliminated model at one scheduling point.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenSs {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

/// `I − D_zw Δ(p)`.
pub(crate) fn loop_matrix(plant: &LfrPlant, delta_diag: &[f64]) -> Mat {
    let n_w = delta_diag.len();
    Mat::identity(n_w).sub(&plant.d_zw.scale_cols(delta_diag))
}

/// Runs the interconnection forward, eliminating the latent loop at every
/// step with a fresh LU solve of `(I − D_zw Δ(p_k)) z_k = C_z x_k + D_zu u_k`.
pub fn simulate(
    plant: &LfrPlant,
    sched: Scheduling<'_>,
    u: &Mat,
    d: &Mat,
    x0: &[f64],
) -> Result<Trajectory, LfrError> {
    let dims = plant.validate()?;
    let n = u.rows();
    let n_p = plant.n_p();
    if u.cols() != dims.n_u {
        return Err(LfrError::DimensionMismatch(format!(
            "input has {} channels, plant expects {}",
            u.cols(),
            dims.n_u
        )));
    }
    if x0.len() != dims.n_x {
        return Err(LfrError::DimensionMismatch(format!(
            "initial state has length {}, expected {}",
            x0.len(),
            dims.n_x
        )));
    }
    match sched {
        Scheduling::Net(net) => {
            if net.n_p() != n_p || net.n_x() != dims.n_x || net.n_u() != dims.n_u {
                return Err(LfrError::DimensionMismatch(
                    "scheduling net does not match plant dimensions".into(),
                ));
            }
            if d.rows() != n || d.cols() != net.n_d() {
                return Err(LfrError::DimensionMismatch(format!(
                    "exogenous signal is {}x{}, expected {}x{}",
                    d.rows(),
                    d.cols(),
                    n,
                    net.n_d()
                )));
            }
        }
        Scheduling::Exogenous(p) => {
            if p.shape() != (n, n_p) {
                return Err(LfrError::DimensionMismatch(format!(
                    "scheduling sequence is {}x{}, expected {}x{}",
                    p.rows(),
                    p.cols(),
                    n,
                    n_p
                )));
            }
        }
    }

    let mut traj = Trajectory {
        x: Mat::zeros(n + 1, dims.n_x),
        p: Mat::zeros(n, n_p),
        z: Mat::zeros(n, dims.n_w),
        w: Mat::zeros(n, dims.n_w),
        y: Mat::zeros(n, dims.n_y),
    };
    traj.x.row_mut(0).copy_from_slice(x0);
    let mut delta_diag = vec![0.0; dims.n_w];
    for k in 0..n {
        let x = traj.x.row(k).to_vec();
        let uk = u.row(k);
        let pk = match sched {
            Scheduling::Net(net) => net.forward(&x, uk, d.row(k))?,
            Scheduling::Exogenous(p) => p.row(k).to_vec(),
        };
        plant.delta.expand_into(&pk, &mut delta_diag);

        let mut rhs = plant.c_z.matvec(&x);
        plant.d_zu.matvec_add(uk, &mut rhs);
        let z = lu_solve(&loop_matrix(plant, &delta_diag), &Mat::column(&rhs))
            .map_err(|_| LfrError::SingularStep(k))?
            .into_vec();
        let w: Vec<f64> = z.iter().zip(&delta_diag).map(|(a, b)| a * b).collect();

        let yk = traj.y.row_mut(k);
        plant.c_y.matvec_into(&x, yk);
        plant.d_yw.matvec_add(&w, yk);
        plant.d_yu.matvec_add(uk, yk);

        let xn = traj.x.row_mut(k + 1);
        plant.a_x.matvec_into(&x, xn);
        plant.b_w.matvec_add(&w, xn);
        plant.b_u.matvec_add(uk, xn);
        if xn.iter().any(|v| !v.is_finite()) {
            return Err(LfrError::Diverged(k));
        }

        traj.p.row_mut(k).copy_from_slice(&pk);
        traj.z.row_mut(k).copy_from_slice(&z);
        traj.w.row_mut(k).copy_from_slice(&w);
    }
    Ok(traj)
}

/// Eliminates the latent loop at a fixed scheduling point:
/// with `Φ = (I − D_zw Δ(p))⁻¹`,
/// `𝒜 = A_x + B_w Δ Φ C_z`, `ℬ = B_u + B_w Δ Φ D_zu`,
/// `𝒞 = C_y + D_yw Δ Φ C_z`, `𝒟 = D_yu + D_yw Δ Φ D_zu`.
pub fn eliminate_to_ss(plant: &LfrPlant, p: &[f64]) -> Result<FrozenSs, LfrError> {
    plant.validate()?;
    let delta_diag = plant.delta.expand(p)?;
    // Φ [C_z D_zu] in one solve
    let rhs = Mat::hstack(&[&plant.c_z, &plant.d_zu]);
    let sol =
        lu_solve(&loop_matrix(plant, &delta_diag), &rhs).map_err(|_| LfrError::SingularPoint)?;
    let w_map = sol.scale_rows(&delta_diag);
    let n_x = plant.a_x.rows();
    let n_u = plant.b_u.cols();
    let wx = w_map.block(0, 0, w_map.rows(), n_x);
    let wu = w_map.block(0, n_x, w_map.rows(), n_u);
    Ok(FrozenSs {
        a: plant.a_x.add(&plant.b_w.matmul(&wx)),
        b: plant.b_u.add(&plant.b_w.matmul(&wu)),
        c: plant.c_y.add(&plant.d_yw.matmul(&wx)),
        d: plant.d_yu.add(&plant.d_yw.matmul(&wu)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lfr::DeltaStructure;
    use crate::sched::{NetPlan, SchedulingNet};

    fn scalar_plant(a_x: f64, b_w: f64, c_z: f64, d_zw: f64) -> LfrPlant {
        let mut p = LfrPlant::zeros(1, 1, 1, DeltaStructure::ones(1));
        p.a_x[(0, 0)] = a_x;
        p.b_w[(0, 0)] = b_w;
        p.c_z[(0, 0)] = c_z;
        p.d_zw[(0, 0)] = d_zw;
        p
    }

    #[test]
    fn lti_recursion() {
        let n_x = 2;
        let mut plant = LfrPlant::zeros(n_x, 1, 1, DeltaStructure::ones(1));
        plant.a_x = Mat::identity(n_x).scale(0.5);
        plant.b_u = Mat::column(&[0.1, 0.1]);
        plant.c_y = Mat::from_rows(&[[1.0, 0.0]]);
        let net = SchedulingNet::zeros(n_x, 1, 0, 1, &NetPlan::linear());
        let u = Mat::from_fn(3, 1, |_, _| 1.0);
        let traj = simulate(
            &plant,
            Scheduling::Net(&net),
            &u,
            &Mat::zeros(3, 0),
            &[0.0, 0.0],
        )
        .unwrap();
        assert!((traj.x[(1, 0)] - 0.1).abs() < 1e-15);
        assert!((traj.x[(2, 1)] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn zero_input_stays_at_origin() {
        let mut plant = scalar_plant(0.9, 1.0, 1.0, 0.5);
        plant.c_y[(0, 0)] = 1.0;
        let net = SchedulingNet::zeros(1, 1, 1, 1, &NetPlan::default());
        let traj = simulate(
            &plant,
            Scheduling::Net(&net),
            &Mat::zeros(10, 1),
            &Mat::zeros(10, 1),
            &[0.0],
        )
        .unwrap();
        assert!(traj.y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_elimination_by_hand() {
        let plant = scalar_plant(0.0, 1.0, 1.0, 0.5);
        let ss = eliminate_to_ss(&plant, &[1.0]).unwrap();
        assert!((ss.a[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn elimination_at_zero_returns_constant_blocks() {
        let plant = scalar_plant(0.3, 1.0, 1.0, 0.7);
        let ss = eliminate_to_ss(&plant, &[0.0]).unwrap();
        assert_eq!(ss.a, plant.a_x);
        assert_eq!(ss.b, plant.b_u);
    }

    #[test]
    fn singular_step_is_reported() {
        let plant = scalar_plant(0.0, 1.0, 1.0, 2.0);
        let p = Mat::from_rows(&[[0.0], [0.5]]);
        let err = simulate(
            &plant,
            Scheduling::Exogenous(&p),
            &Mat::zeros(2, 1),
            &Mat::zeros(2, 0),
            &[1.0],
        );
        assert!(matches!(err, Err(LfrError::SingularStep(1))));
        assert!(matches!(
            eliminate_to_ss(&plant, &[0.5]),
            Err(LfrError::SingularPoint)
        ));
    }
}
