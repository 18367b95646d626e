mod common;

use common::{eig_radius, random_eta, random_factors, random_mat, random_plant, to_na};
use lpvlfr::lfr::{
    affine_ss_to_lfr, eliminate_to_ss, is_well_posed, normalize_scheduling, simulate,
    AffineSsModel, DeltaStructure, FrozenSs, LfrPlant, Scheduling, SchedulingBox,
};
use lpvlfr::linalg::Mat;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frozen_diff(a: &FrozenSs, b: &FrozenSs) -> f64 {
    [
        a.a.max_abs_diff(&b.a),
        a.b.max_abs_diff(&b.b),
        a.c.max_abs_diff(&b.c),
        a.d.max_abs_diff(&b.d),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn loop_det_na(d_zw: &Mat, delta: &DeltaStructure, p: &[f64]) -> f64 {
    let diag = delta.expand(p).unwrap();
    let n = diag.len();
    let dz = to_na(d_zw);
    let dl = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
    (DMatrix::identity(n, n) - dz * dl).determinant()
}

fn unit_point<R: Rng>(rng: &mut R, n_p: usize) -> Vec<f64> {
    (0..n_p).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

#[test]
fn generated_dzw_has_radius_below_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n_w = 1 + i % 6;
        let scale = [0.1, 1.0, 3.0][i % 3];
        let f = random_factors(&mut rng, n_w, scale);
        let r = eig_radius(&f.build_dzw().unwrap());
        assert!(r < 1.0, "draw {i}: rho = {r}");
        worst = worst.max(r);
    }
    assert!(worst > 0.5, "draws never approach the boundary: {worst}");
}

#[test]
fn generated_dzw_contracts_in_the_psi_weighted_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for i in 0..300 {
        let n_w = 1 + i % 6;
        let f = random_factors(&mut rng, n_w, 2.0);
        let psi = f.psi();
        let d = to_na(&f.build_dzw().unwrap());
        let weighted = DMatrix::from_fn(n_w, n_w, |r, c| d[(r, c)] * (psi[c] / psi[r]).sqrt());
        let s = weighted.singular_values().max();
        assert!(s < 1.0, "draw {i}: {s}");
    }
}

#[test]
fn loop_matrix_is_invertible_on_the_unit_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for i in 0..200 {
        let n_w = 1 + i % 6;
        let eta = random_eta(&mut rng, n_w);
        let delta = DeltaStructure::new(eta.clone()).unwrap();
        let n_p = delta.n_p();
        let d_zw = random_factors(&mut rng, n_w, 2.0).build_dzw().unwrap();
        // vertices
        for mask in 0..(1usize << n_p) {
            let p: Vec<f64> = (0..n_p)
                .map(|j| if mask >> j & 1 == 1 { 1.0 } else { -1.0 })
                .collect();
            let det = loop_det_na(&d_zw, &delta, &p);
            assert!(det > 0.0, "draw {i}, vertex {p:?}: det {det}");
        }
        for _ in 0..50 {
            let p = unit_point(&mut rng, n_p);
            assert!(loop_det_na(&d_zw, &delta, &p) > 0.0, "draw {i} at {p:?}");
        }
        let mut plant = LfrPlant::zeros(1, 1, 1, delta);
        plant.d_zw = d_zw;
        let grid = if n_p <= 3 { 9 } else { 4 };
        let report = is_well_posed(&plant, &SchedulingBox::unit(n_p), grid, 100, &mut rng).unwrap();
        assert!(
            report.empirical_ok && report.spectral_radius_below_one,
            "{report:?}"
        );
    }
}

#[test]
fn scalar_loop_gain_two_is_caught() {
    let mut plant = LfrPlant::zeros(1, 1, 1, DeltaStructure::ones(1));
    plant.d_zw[(0, 0)] = 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let report = is_well_posed(&plant, &SchedulingBox::unit(1), 20, 0, &mut rng).unwrap();
    assert!(!report.empirical_ok);
    assert!(!report.small_gain_certified);
    let p = report.counterexample.unwrap();
    assert!((p[0] - 0.5).abs() < 1e-9, "{p:?}");
}

#[test]
fn frozen_matrices_match_direct_inversion() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for i in 0..20 {
        let n_w = 1 + i % 5;
        let eta = random_eta(&mut rng, n_w);
        let plant = random_plant(&mut rng, 3, 2, 2, eta, true);
        let p = unit_point(&mut rng, plant.n_p());
        let ss = eliminate_to_ss(&plant, &p).unwrap();
        let dl = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            plant.delta.expand(&p).unwrap(),
        ));
        let phi = (DMatrix::identity(n_w, n_w) - to_na(&plant.d_zw) * &dl)
            .try_inverse()
            .unwrap();
        let gain = &dl * phi;
        let a = to_na(&plant.a_x) + to_na(&plant.b_w) * &gain * to_na(&plant.c_z);
        let d = to_na(&plant.d_yu) + to_na(&plant.d_yw) * &gain * to_na(&plant.d_zu);
        assert!((to_na(&ss.a) - a).amax() < 1e-12);
        assert!((to_na(&ss.d) - d).amax() < 1e-12);
    }
}

#[test]
fn simulation_matches_frozen_recursion() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let n = 200;
    for i in 0..20 {
        let n_w = 1 + i % 4;
        let eta = random_eta(&mut rng, n_w);
        let plant = random_plant(&mut rng, 1 + i % 3, 1 + i % 2, 1, eta, i % 4 != 0);
        let n_p = plant.n_p();
        let (n_x, n_u) = (plant.a_x.rows(), plant.b_u.cols());
        let u = random_mat(&mut rng, n, n_u, 1.0);
        let p = random_mat(&mut rng, n, n_p, 1.0);
        let x0: Vec<f64> = (0..n_x).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let traj = simulate(
            &plant,
            Scheduling::Exogenous(&p),
            &u,
            &Mat::zeros(n, 0),
            &x0,
        )
        .unwrap();
        let mut x = x0.clone();
        let mut err = 0.0f64;
        for k in 0..n {
            let ss = eliminate_to_ss(&plant, p.row(k)).unwrap();
            let mut y = ss.c.matvec(&x);
            ss.d.matvec_add(u.row(k), &mut y);
            let mut next = ss.a.matvec(&x);
            ss.b.matvec_add(u.row(k), &mut next);
            x = next;
            for (a, b) in y.iter().zip(traj.y.row(k)) {
                err = err.max((a - b).abs());
            }
            for (a, b) in x.iter().zip(traj.x.row(k + 1)) {
                err = err.max((a - b).abs());
            }
        }
        assert!(err < 1e-10, "plant {i}: {err:e}");
    }
}

#[test]
fn normalization_preserves_the_frozen_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for i in 0..20 {
        let n_w = 1 + i % 4;
        let eta = random_eta(&mut rng, n_w);
        let mut plant = random_plant(&mut rng, 2, 1, 1, eta, true);
        let n_p = plant.n_p();
        let lo: Vec<f64> = (0..n_p).map(|_| rng.gen_range(-2.0..-0.2)).collect();
        let hi: Vec<f64> = (0..n_p).map(|_| rng.gen_range(0.1..1.5)).collect();
        plant.d_zw = plant.d_zw.scale(0.45);
        let bbox = SchedulingBox::new(lo, hi).unwrap();
        let (norm, map) = normalize_scheduling(&plant, &bbox).unwrap();
        for _ in 0..100 {
            let pb = unit_point(&mut rng, n_p);
            let p = map.apply(&pb);
            let a = eliminate_to_ss(&norm, &pb).unwrap();
            let b = eliminate_to_ss(&plant, &p).unwrap();
            let err = frozen_diff(&a, &b);
            assert!(err < 1e-9, "plant {i}: {err:e}");
        }
    }
}

fn random_affine<R: Rng>(
    rng: &mut R,
    n_x: usize,
    n_u: usize,
    n_y: usize,
    ranks: &[usize],
) -> AffineSsModel {
    let mut m = AffineSsModel {
        a0: random_mat(rng, n_x, n_x, 0.5),
        b0: random_mat(rng, n_x, n_u, 1.0),
        c0: random_mat(rng, n_y, n_x, 1.0),
        d0: random_mat(rng, n_y, n_u, 1.0),
        a: vec![],
        b: vec![],
        c: vec![],
        d: vec![],
    };
    for &r in ranks {
        let l = random_mat(rng, n_x + n_y, r, 1.0);
        let rt = random_mat(rng, r, n_x + n_u, 1.0);
        let inc = l.matmul(&rt);
        m.a.push(inc.block(0, 0, n_x, n_x));
        m.b.push(inc.block(0, n_x, n_x, n_u));
        m.c.push(inc.block(n_x, 0, n_y, n_x));
        m.d.push(inc.block(n_x, n_x, n_y, n_u));
    }
    m
}

fn check_round_trip(m: &AffineSsModel, points: &[Vec<f64>]) -> f64 {
    let real = affine_ss_to_lfr(m, 1e-9).unwrap();
    assert!(real.plant.is_affine());
    let mut err = 0.0f64;
    for p in points {
        let kept: Vec<f64> = real.kept.iter().map(|&i| p[i]).collect();
        let ss = eliminate_to_ss(&real.plant, &kept).unwrap();
        let (a, b, c, d) = m.evaluate(p);
        err = err
            .max(ss.a.max_abs_diff(&a))
            .max(ss.b.max_abs_diff(&b))
            .max(ss.c.max_abs_diff(&c))
            .max(ss.d.max_abs_diff(&d));
    }
    err
}

#[test]
fn affine_models_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    for i in 0..20 {
        let ranks: Vec<usize> = match i % 4 {
            0 => vec![1, 2],
            1 => vec![3],
            2 => vec![0, 1, 2],
            _ => vec![1, 1, 1],
        };
        let m = random_affine(&mut rng, 3, 2, 2, &ranks);
        let real = affine_ss_to_lfr(&m, 1e-9).unwrap();
        let expected: Vec<usize> = ranks.iter().copied().filter(|&r| r > 0).collect();
        assert_eq!(real.plant.delta.eta(), expected.as_slice());
        let points: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..ranks.len()).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let err = check_round_trip(&m, &points);
        assert!(err < 1e-9, "model {i}: {err:e}");
    }
}

#[test]
fn msd_embedding_round_trips() {
    // x⁺ = A(p) x + B(p) u with p = (x₁, x₁²)
    let (ts, k1, k2, d1) = (0.1, 0.1, 1.0, 1.0);
    let z22 = Mat::zeros(2, 2);
    let m = AffineSsModel {
        a0: Mat::from_rows(&[[1.0, ts], [-ts * k1, 1.0 - ts * d1]]),
        b0: Mat::column(&[0.0, ts]),
        c0: Mat::from_rows(&[[1.0, 0.0]]),
        d0: Mat::zeros(1, 1),
        a: vec![z22.clone(), Mat::from_rows(&[[0.0, 0.0], [-ts * k2, 0.0]])],
        b: vec![Mat::column(&[0.0, -0.6 * ts]), Mat::zeros(2, 1)],
        c: vec![Mat::zeros(1, 2); 2],
        d: vec![Mat::zeros(1, 1); 2],
    };
    let real = affine_ss_to_lfr(&m, 1e-9).unwrap();
    assert_eq!(real.plant.delta.eta(), &[1, 1]);
    let points: Vec<Vec<f64>> = [-2.0, -0.3, 0.0, 0.7, 1.9]
        .iter()
        .map(|&x1: &f64| vec![x1, x1 * x1])
        .collect();
    assert!(check_round_trip(&m, &points) < 1e-12);
}

proptest! {
    #[test]
    fn affine_output_is_linear_in_the_input(seed in any::<u64>(), alpha in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plant = random_plant(&mut rng, 2, 1, 1, vec![1, 2], false);
        let n = 30;
        let u = random_mat(&mut rng, n, 1, 1.0);
        let p = random_mat(&mut rng, n, 2, 1.0);
        let none = Mat::zeros(n, 0);
        let y1 = simulate(&plant, Scheduling::Exogenous(&p), &u, &none, &[0.0, 0.0]).unwrap().y;
        let y2 = simulate(&plant, Scheduling::Exogenous(&p), &u.scale(alpha), &none, &[0.0, 0.0]).unwrap().y;
        prop_assert!(y2.max_abs_diff(&y1.scale(alpha)) < 1e-10 * (1.0 + y1.max_abs() * alpha.abs()));
    }

    #[test]
    fn constant_schedule_gives_lti_response(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plant = random_plant(&mut rng, 2, 1, 1, vec![2], true);
        let p0: f64 = rng.gen_range(-1.0..1.0);
        let n = 25;
        let u = random_mat(&mut rng, n, 1, 1.0);
        let p = Mat::from_fn(n, 1, |_, _| p0);
        let traj = simulate(&plant, Scheduling::Exogenous(&p), &u, &Mat::zeros(n, 0), &[0.0, 0.0]).unwrap();
        let ss = eliminate_to_ss(&plant, &[p0]).unwrap();
        let mut x = vec![0.0, 0.0];
        for k in 0..n {
            let mut y = ss.c.matvec(&x);
            ss.d.matvec_add(u.row(k), &mut y);
            prop_assert!((y[0] - traj.y[(k, 0)]).abs() < 1e-10 * (1.0 + y[0].abs()));
            let mut next = ss.a.matvec(&x);
            ss.b.matvec_add(u.row(k), &mut next);
            x = next;
        }
    }
}
