use lpvlfr::lfr::{DeltaStructure, ModelMode};
use lpvlfr::linalg::Mat;
use lpvlfr::sched::NetPlan;
use lpvlfr::train::{init_params, ModelSpec, ParamLayout, SchedulingKind, SimLoss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    spec: ModelSpec,
    theta: Vec<f64>,
    u: Mat,
    d: Mat,
    y: Mat,
}

fn instance(
    seed: u64,
    mode: ModelMode,
    scheduling: SchedulingKind,
    n_d: usize,
    plan: NetPlan,
) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta = if scheduling == SchedulingKind::Exogenous {
        vec![2, 1]
    } else {
        vec![3]
    };
    let n_d = if scheduling == SchedulingKind::Exogenous {
        eta.len()
    } else {
        n_d
    };
    let spec = ModelSpec {
        mode,
        n_x: 2,
        n_u: 1,
        n_y: 1,
        n_d,
        delta: DeltaStructure::new(eta).unwrap(),
        scheduling,
        plan,
        epsilon: 1e-3,
    };
    let mut theta = init_params(&spec, &mut rng);
    for v in theta.iter_mut() {
        *v += rng.gen_range(-0.3..0.3);
    }
    let n = 50;
    let u = Mat::from_fn(n, 1, |_, _| rng.gen_range(-1.5..1.5));
    let d = Mat::from_fn(n, n_d, |_, _| rng.gen_range(-1.0..1.0));
    let y = Mat::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
    Instance {
        spec,
        theta,
        u,
        d,
        y,
    }
}

/// Central differences with step `1e-6 · max(1, |θ_i|)`.
fn check(inst: &Instance, rho: f64) -> Result<(), String> {
    let mut obj = SimLoss::new(&inst.spec, &inst.u, &inst.d, &inst.y, rho).unwrap();
    let (v, g) = obj.loss_and_gradient(&inst.theta);
    if !v.is_finite() {
        return Err("non-finite loss at the test point".into());
    }
    let mut theta = inst.theta.clone();
    for i in 0..theta.len() {
        let h = 1e-6 * theta[i].abs().max(1.0);
        let t0 = theta[i];
        theta[i] = t0 + h;
        let fp = obj.loss(&theta);
        theta[i] = t0 - h;
        let fm = obj.loss(&theta);
        theta[i] = t0;
        let fd = (fp - fm) / (2.0 * h);
        if (g[i] - fd).abs() > 1e-7 + 1e-4 * fd.abs() {
            return Err(format!(
                "entry {i}: analytic {} vs finite difference {fd}",
                g[i]
            ));
        }
    }
    Ok(())
}

#[test]
fn gradients_match_finite_differences() {
    let mut cases = 0;
    for mode in [ModelMode::Affine, ModelMode::Rational] {
        for (scheduling, n_d, plan) in [
            (SchedulingKind::Net, 0, NetPlan::linear()),
            (SchedulingKind::Net, 1, NetPlan::default()),
            (SchedulingKind::Net, 0, NetPlan { hidden: vec![4] }),
            (SchedulingKind::Exogenous, 0, NetPlan::linear()),
        ] {
            for seed in 0..5 {
                let inst = instance(seed * 31 + 7, mode, scheduling, n_d, plan.clone());
                let rho = if seed % 2 == 0 { 0.0 } else { 1e-3 };
                check(&inst, rho).unwrap_or_else(|e| {
                    panic!("{mode:?} {scheduling:?} n_d={n_d} seed {seed}: {e}")
                });
                cases += 1;
            }
        }
    }
    assert_eq!(cases, 40);
}

#[test]
fn zero_model_loss_is_mean_square_output() {
    for mode in [ModelMode::Affine, ModelMode::Rational] {
        let inst = instance(1, mode, SchedulingKind::Net, 0, NetPlan::linear());
        let l = ParamLayout::new(&inst.spec);
        let mut obj = SimLoss::new(&inst.spec, &inst.u, &inst.d, &inst.y, 0.0).unwrap();
        let v = obj.loss(&vec![0.0; l.total]);
        let ms = inst.y.as_slice().iter().map(|v| v * v).sum::<f64>() / 50.0;
        assert!((v - ms).abs() < 1e-15, "{v} vs {ms}");
    }
}

#[test]
fn perfect_fit_has_zero_loss_and_gradient() {
    for mode in [ModelMode::Affine, ModelMode::Rational] {
        let inst = instance(2, mode, SchedulingKind::Net, 1, NetPlan::default());
        let model = ParamLayout::new(&inst.spec)
            .unflatten(&inst.spec, &inst.theta)
            .unwrap();
        let y = model.predict(&inst.u, &inst.d).unwrap();
        let mut obj = SimLoss::new(&inst.spec, &inst.u, &inst.d, &y, 0.0).unwrap();
        let (v, g) = obj.loss_and_gradient(&inst.theta);
        assert!(v < 1e-28, "loss {v}");
        assert!(g.iter().all(|x| x.abs() < 1e-8));

        let rho = 0.01;
        let mut obj = SimLoss::new(&inst.spec, &inst.u, &inst.d, &y, rho).unwrap();
        let norm2: f64 = inst.theta.iter().map(|t| t * t).sum();
        assert!((obj.loss(&inst.theta) - rho * norm2).abs() < 1e-12);
    }
}

#[test]
fn singular_rollout_is_infinite_not_an_error() {
    // affine exogenous model whose state explodes
    let inst = instance(
        3,
        ModelMode::Affine,
        SchedulingKind::Exogenous,
        0,
        NetPlan::linear(),
    );
    let l = ParamLayout::new(&inst.spec);
    let mut theta = inst.theta.clone();
    theta[l.a_x.start] = 1e200;
    theta[l.a_x.start + 3] = 1e200;
    theta[l.x0.start] = 1.0;
    let mut obj = SimLoss::new(&inst.spec, &inst.u, &inst.d, &inst.y, 0.0).unwrap();
    let (v, g) = obj.loss_and_gradient(&theta);
    assert_eq!(v, f64::INFINITY);
    assert!(g.iter().all(|x| *x == 0.0));
}

#[test]
fn db_has_only_strict_upper_entries() {
    let inst = instance(
        4,
        ModelMode::Rational,
        SchedulingKind::Net,
        0,
        NetPlan::linear(),
    );
    let l = ParamLayout::new(&inst.spec);
    assert_eq!(l.db_upper.len(), 3);
    assert_eq!(l.da_lower.len(), 6);
    assert_eq!(l.d_d.len(), 3);
}
