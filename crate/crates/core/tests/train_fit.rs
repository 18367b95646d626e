use lpvlfr::bench::{Dataset, DatasetMeta};
use lpvlfr::lfr::{DeltaStructure, ModelMode, WellPosedFactors};
use lpvlfr::linalg::{spectral_radius, Mat};
use lpvlfr::sched::NetPlan;
use lpvlfr::train::{
    fit, fit_initial_state, init_params, lbfgs_run, LbfgsConfig, ModelSpec, Objective, ParamLayout,
    SchedulingKind, SimLoss, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `x⁺ = 0.8 x + 0.5 u`, `y = x + 0.1 u` from rest.
fn lti_dataset(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut x = 0.0;
    let mut y = Vec::with_capacity(n);
    for &uk in &u {
        y.push(x + 0.1 * uk);
        x = 0.8 * x + 0.5 * uk;
    }
    Dataset::new(
        "lti",
        Mat::column(&u),
        Mat::zeros(n, 0),
        Mat::column(&y),
        DatasetMeta::with_ts(1.0),
    )
    .unwrap()
}

fn lti_config() -> TrainConfig {
    TrainConfig {
        mode: ModelMode::Affine,
        n_x: 1,
        eta: vec![],
        net: NetPlan::linear(),
        adam_epochs: 200,
        lbfgs_epochs: 300,
        reg_rho: 0.0,
        adam: lpvlfr::train::AdamConfig {
            step: 1e-2,
            ..Default::default()
        },
        restarts: 1,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn lti_toy_is_recovered() {
    let train = lti_dataset(1, 400);
    let val = lti_dataset(2, 400);
    let r = fit(&lti_config(), &train, &val).unwrap();
    assert!(r.bfr_val > 99.0, "val BFR {}", r.bfr_val);
    assert_eq!(r.restarts.len(), 1);
    assert!(!r.traces.is_empty());
}

#[test]
fn restarts_are_independent_of_scheduling() {
    let train = lti_dataset(3, 200);
    let val = lti_dataset(4, 200);
    let mut cfg = lti_config();
    cfg.adam_epochs = 20;
    cfg.lbfgs_epochs = 20;
    cfg.restarts = 3;
    cfg.jobs = Some(1);
    let seq = fit(&cfg, &train, &val).unwrap();
    cfg.jobs = Some(3);
    let par = fit(&cfg, &train, &val).unwrap();
    assert_eq!(seq.best, par.best);
    assert_eq!(seq.best_restart, par.best_restart);
    assert_eq!(seq.best.to_json(), par.best.to_json());
}

#[test]
fn init_follows_the_table() {
    let spec = ModelSpec {
        mode: ModelMode::Rational,
        n_x: 3,
        n_u: 2,
        n_y: 1,
        n_d: 0,
        delta: DeltaStructure::new(vec![3]).unwrap(),
        scheduling: SchedulingKind::Net,
        plan: NetPlan::default(),
        epsilon: 1e-3,
    };
    let l = ParamLayout::new(&spec);
    for seed in 0..5 {
        let theta = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
        let a = &theta[l.a_x.clone()];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a[i * 3 + j], if i == j { 0.5 } else { 0.0 });
            }
        }
        for r in [&l.b_w, &l.d_yw, &l.d_yu, &l.d_d, &l.x0] {
            assert!(theta[r.clone()].iter().all(|&v| v == 0.0));
        }
        for r in [&l.b_u, &l.c_z, &l.d_zu, &l.c_y] {
            assert!(theta[r.clone()].iter().all(|v| v.abs() < 0.1));
        }
        assert_eq!(l.da_lower.len(), 6);
        assert!(theta[l.da_lower.clone()]
            .iter()
            .all(|&v| (0.0..0.1).contains(&v)));
        assert_eq!(l.db_upper.len(), 3);
        let again = init_params(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(theta, again);
    }
}

#[test]
fn every_rational_iterate_is_well_posed() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 100;
    let u = Mat::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
    let y = Mat::from_fn(n, 1, |k, _| (k as f64 * 0.3).sin());
    let d = Mat::zeros(n, 0);
    let spec = ModelSpec {
        mode: ModelMode::Rational,
        n_x: 2,
        n_u: 1,
        n_y: 1,
        n_d: 0,
        delta: DeltaStructure::new(vec![3]).unwrap(),
        scheduling: SchedulingKind::Net,
        plan: NetPlan::linear(),
        epsilon: 1e-3,
    };
    let mut obj = Watch {
        inner: SimLoss::new(&spec, &u, &d, &y, 1e-4).unwrap(),
        layout: ParamLayout::new(&spec),
        worst: 0.0,
        evaluations: 0,
    };
    let theta0 = init_params(&spec, &mut rng);
    let r = lbfgs_run(&mut obj, &theta0, 60, &LbfgsConfig::default(), |_| {});
    assert!(obj.evaluations > 60);
    assert!(obj.worst < 1.0, "spectral radius {}", obj.worst);
    assert!(r.trace.windows(2).all(|w| w[1].loss <= w[0].loss));
}

/// Records the largest `ρ(D_zw)` over every point the optimizer evaluates.
struct Watch<'a> {
    inner: SimLoss<'a>,
    layout: ParamLayout,
    worst: f64,
    evaluations: usize,
}

impl Watch<'_> {
    fn inspect(&mut self, theta: &[f64]) {
        let l = &self.layout;
        let f = WellPosedFactors::new(
            3,
            theta[l.da_lower.clone()].to_vec(),
            theta[l.db_upper.clone()].to_vec(),
            theta[l.d_d.clone()].to_vec(),
            1e-3,
        )
        .unwrap();
        let rho = spectral_radius(&f.build_dzw().unwrap()).value;
        self.worst = self.worst.max(rho);
        self.evaluations += 1;
    }
}

impl Objective for Watch<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&mut self, theta: &[f64]) -> f64 {
        self.inspect(theta);
        self.inner.value(theta)
    }

    fn value_grad(&mut self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.inspect(theta);
        self.inner.value_grad(theta, grad)
    }
}

#[test]
fn initial_state_refit_recovers_offset() {
    let train = lti_dataset(5, 400);
    let r = fit(&lti_config(), &train, &lti_dataset(6, 400)).unwrap();
    // same plant, started from x = 2
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 200;
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut x = 2.0;
    let mut y = Vec::new();
    for &uk in &u {
        y.push(x + 0.1 * uk);
        x = 0.8 * x + 0.5 * uk;
    }
    let ds = Dataset::new(
        "shifted",
        Mat::column(&u),
        Mat::zeros(n, 0),
        Mat::column(&y),
        DatasetMeta::with_ts(1.0),
    )
    .unwrap();
    let x0 = fit_initial_state(&r.best, &ds, 100, 50).unwrap();
    let mut m = r.best.clone();
    m.x0 = x0;
    let y_hat = m.predict(&ds.u, &ds.d).unwrap();
    let err = y_hat.max_abs_diff(&ds.y);
    assert!(err < 1e-2, "max error {err}");
}
