use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    adam_run, lbfgs_run, AdamConfig, LbfgsConfig, ModelSpec, Objective, ParamLayout,
    SchedulingKind, SimLoss, StopReason, TrainError,
};
use crate::bench::{bfr, Dataset};
use crate::lfr::{DataScalers, DeltaStructure, LfrModel, ModelMode, DEFAULT_EPSILON};
use crate::linalg::Mat;
use crate::sched::{NetPlan, SchedulingNet};

/// Attempts per restart to find a starting point with finite loss.
pub const MAX_INIT_ATTEMPTS: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: ModelMode,
    pub n_x: usize,
    pub eta: Vec<usize>,
    pub scheduling: SchedulingKind,
    pub net: NetPlan,
    pub epsilon: f64,
    pub adam_epochs: usize,
    pub lbfgs_epochs: usize,
    pub adam: AdamConfig,
    pub lbfgs_memory: usize,
    pub reg_rho: f64,
    pub restarts: usize,
    pub seed: u64,
    pub normalize_data: bool,
    /// Cap on concurrent restarts; `None` uses every available core.
    pub jobs: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: ModelMode::Rational,
            n_x: 2,
            eta: vec![3],
            scheduling: SchedulingKind::Net,
            net: NetPlan::linear(),
            epsilon: DEFAULT_EPSILON,
            adam_epochs: 1000,
            lbfgs_epochs: 4000,
            adam: AdamConfig::default(),
            lbfgs_memory: 10,
            reg_rho: 1e-4,
            restarts: 1,
            seed: 0,
            normalize_data: false,
            jobs: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.n_x == 0 {
            return Err(TrainError::Config("n_x must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(TrainError::Config("restarts must be positive".into()));
        }
        if self.lbfgs_memory == 0 {
            return Err(TrainError::Config("lbfgs_memory must be positive".into()));
        }
        if !(self.reg_rho >= 0.0 && self.reg_rho.is_finite()) {
            return Err(TrainError::Config(format!(
                "reg_rho must be >= 0, got {}",
                self.reg_rho
            )));
        }
        let a = &self.adam;
        if !(a.step > 0.0
            && (0.0..1.0).contains(&a.beta1)
            && (0.0..1.0).contains(&a.beta2)
            && a.eps > 0.0)
        {
            return Err(TrainError::Config(
                "Adam needs step > 0, betas in [0, 1) and eps > 0".into(),
            ));
        }
        if self.jobs == Some(0) {
            return Err(TrainError::Config("jobs must be positive".into()));
        }
        DeltaStructure::new(self.eta.clone())?;
        Ok(())
    }

    /// Model structure for data with the given channel counts.
    pub fn spec(&self, n_u: usize, n_y: usize, n_d: usize) -> Result<ModelSpec, TrainError> {
        self.validate()?;
        let spec = ModelSpec {
            mode: self.mode,
            n_x: self.n_x,
            n_u,
            n_y,
            n_d,
            delta: DeltaStructure::new(self.eta.clone())?,
            scheduling: self.scheduling,
            plan: self.net.clone(),
            epsilon: self.epsilon,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Random starting point.
///
/// `A_x = 0.5 I`; `B_w`, `D_yw`, `D_yu` zero; `B_u`, `C_z`, `D_zu`, `C_y`
/// uniform on `(−0.1, 0.1)`. In rational mode `D_A` entries are uniform on
/// `(0, 0.1)`, `D_B` entries normal with mean 1 and unit variance, and
/// `d_d = 0`. The net gets Xavier weights and `x0 = 0`.
pub fn init_params<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Vec<f64> {
    let l = ParamLayout::new(spec);
    let mut theta = vec![0.0; l.total];
    for i in 0..spec.n_x {
        theta[l.a_x.start + i * spec.n_x + i] = 0.5;
    }
    for r in [&l.b_u, &l.c_z, &l.d_zu, &l.c_y] {
        for v in &mut theta[r.clone()] {
            *v = rng.gen_range(-0.1..0.1);
        }
    }
    for v in &mut theta[l.da_lower.clone()] {
        *v = rng.gen_range(0.0..0.1);
    }
    let normal = Normal::new(1.0, 1.0).expect("unit normal");
    for v in &mut theta[l.db_upper.clone()] {
        *v = normal.sample(rng);
    }
    if spec.scheduling == SchedulingKind::Net {
        let net =
            SchedulingNet::xavier_init(spec.n_x, spec.n_u, spec.n_d, spec.n_p(), &spec.plan, rng);
        net.write_params(&mut theta[l.net.clone()]);
    }
    theta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Adam,
    Lbfgs,
}

/// One line of the training trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub restart: usize,
    pub phase: Phase,
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// Seconds since the restart began.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub seed: u64,
    /// Initialization draws consumed (1 when the first draw was finite).
    pub init_attempts: u64,
    pub final_loss: f64,
    pub lbfgs_stop: Option<StopReason>,
    pub bfr_train: Option<f64>,
    pub bfr_val: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub best: LfrModel,
    pub best_restart: usize,
    pub bfr_train: f64,
    pub bfr_val: f64,
    pub restarts: Vec<RestartSummary>,
    pub traces: Vec<TraceRecord>,
    pub wall_seconds: f64,
}

struct RestartOutcome {
    summary: RestartSummary,
    model: Option<LfrModel>,
    trace: Vec<TraceRecord>,
}

fn score(model: &LfrModel, data: &Dataset) -> Option<f64> {
    let y_hat = model.predict(&data.u, &data.d).ok()?;
    bfr(&data.y, &y_hat).ok().filter(|v| v.is_finite())
}

fn run_restart(
    cfg: &TrainConfig,
    spec: &ModelSpec,
    scalers: Option<&DataScalers>,
    (u, d, y): (&Mat, &Mat, &Mat),
    train: &Dataset,
    val: &Dataset,
    restart: usize,
) -> Result<RestartOutcome, TrainError> {
    let start = Instant::now();
    let seed = cfg.seed.wrapping_add(restart as u64);
    let mut obj = SimLoss::new(spec, u, d, y, cfg.reg_rho)?;
    let mut theta = None;
    let mut attempts = 0;
    for attempt in 0..MAX_INIT_ATTEMPTS {
        attempts = attempt + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let candidate = init_params(spec, &mut rng);
        if obj.value(&candidate).is_finite() {
            theta = Some(candidate);
            break;
        }
        log::debug!("restart {restart}: initial draw {attempt} has non-finite loss");
    }
    let mut summary = RestartSummary {
        restart,
        seed,
        init_attempts: attempts,
        final_loss: f64::INFINITY,
        lbfgs_stop: None,
        bfr_train: None,
        bfr_val: None,
        seconds: 0.0,
    };
    let Some(theta0) = theta else {
        summary.seconds = start.elapsed().as_secs_f64();
        return Ok(RestartOutcome {
            summary,
            model: None,
            trace: Vec::new(),
        });
    };

    let mut trace = Vec::with_capacity(cfg.adam_epochs + cfg.lbfgs_epochs);
    let adam = adam_run(&mut obj, &theta0, cfg.adam_epochs, &cfg.adam, |r| {
        trace.push(TraceRecord {
            restart,
            phase: Phase::Adam,
            iter: r.iter,
            loss: r.loss,
            grad_norm: r.grad_norm,
            elapsed: start.elapsed().as_secs_f64(),
        })
    });
    let lcfg = LbfgsConfig {
        memory: cfg.lbfgs_memory,
        ..LbfgsConfig::default()
    };
    let lbfgs = lbfgs_run(&mut obj, &adam.theta, cfg.lbfgs_epochs, &lcfg, |r| {
        trace.push(TraceRecord {
            restart,
            phase: Phase::Lbfgs,
            iter: r.iter,
            loss: r.loss,
            grad_norm: r.grad_norm,
            elapsed: start.elapsed().as_secs_f64(),
        })
    });
    summary.final_loss = lbfgs.loss;
    summary.lbfgs_stop = Some(lbfgs.stop);

    let model = if lbfgs.loss.is_finite() {
        let mut m = obj.layout().unflatten(spec, &lbfgs.theta)?;
        m.scalers = scalers.cloned();
        summary.bfr_train = score(&m, train);
        summary.bfr_val = score(&m, val);
        Some(m)
    } else {
        None
    };
    summary.seconds = start.elapsed().as_secs_f64();
    log::info!(
        "restart {restart}: loss {:.6e}, BFR train {:?}, val {:?} ({:.1} s)",
        summary.final_loss,
        summary.bfr_train,
        summary.bfr_val,
        summary.seconds
    );
    Ok(RestartOutcome {
        summary,
        model,
        trace,
    })
}

/// Multi-start estimation: each restart runs Adam then L-BFGS from its own
/// random start, and the model with the highest validation BFR is kept.
///
/// Restart `r` uses seed `cfg.seed + r`, so results do not depend on how
/// restarts are scheduled across threads.
pub fn fit(cfg: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<FitResult, TrainError> {
    let start = Instant::now();
    let spec = cfg.spec(train.n_u(), train.n_y(), train.n_d())?;
    val.check_channels(train.n_u(), train.n_d(), train.n_y())?;

    let scalers = cfg
        .normalize_data
        .then(|| DataScalers::fit(&train.u, &train.y));
    let (u_s, y_s) = match &scalers {
        Some(s) => (s.scale_u(&train.u), s.scale_y(&train.y)),
        None => (train.u.clone(), train.y.clone()),
    };
    let data = (&u_s, &train.d, &y_s);

    let run = |r: usize| run_restart(cfg, &spec, scalers.as_ref(), data, train, val, r);
    let outcomes: Vec<RestartOutcome> = match cfg.jobs {
        Some(1) => (0..cfg.restarts).map(run).collect::<Result<_, _>>()?,
        jobs => {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(j) = jobs {
                builder = builder.num_threads(j);
            }
            let pool = builder
                .build()
                .map_err(|e| TrainError::Config(format!("thread pool: {e}")))?;
            pool.install(|| {
                (0..cfg.restarts)
                    .into_par_iter()
                    .map(run)
                    .collect::<Result<_, _>>()
            })?
        }
    };

    let mut best: Option<(usize, f64)> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if o.model.is_none() {
            continue;
        }
        let v = o.summary.bfr_val.unwrap_or(f64::NEG_INFINITY);
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    let Some((best_idx, _)) = best else {
        return Err(TrainError::AllRestartsFailed(cfg.restarts));
    };
    let mut restarts = Vec::with_capacity(outcomes.len());
    let mut traces = Vec::new();
    let mut best_model = None;
    for (i, o) in outcomes.into_iter().enumerate() {
        if i == best_idx {
            best_model = o.model;
        }
        restarts.push(o.summary);
        traces.extend(o.trace);
    }
    let best_summary = &restarts[best_idx];
    Ok(FitResult {
        best: best_model.expect("selected restart has a model"),
        best_restart: best_idx,
        bfr_train: best_summary.bfr_train.unwrap_or(f64::NAN),
        bfr_val: best_summary.bfr_val.unwrap_or(f64::NAN),
        restarts,
        traces,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Restricts an objective to the `x0` block of the parameter vector.
struct InitialStateLoss<'a> {
    inner: SimLoss<'a>,
    theta: Vec<f64>,
    full_grad: Vec<f64>,
    range: std::ops::Range<usize>,
}

impl Objective for InitialStateLoss<'_> {
    fn dim(&self) -> usize {
        self.range.len()
    }

    fn value(&mut self, x0: &[f64]) -> f64 {
        self.theta[self.range.clone()].copy_from_slice(x0);
        self.inner.loss(&self.theta)
    }

    fn value_grad(&mut self, x0: &[f64], grad: &mut [f64]) -> f64 {
        self.theta[self.range.clone()].copy_from_slice(x0);
        let v = self
            .inner
            .loss_and_gradient_into(&self.theta, &mut self.full_grad);
        grad.copy_from_slice(&self.full_grad[self.range.clone()]);
        v
    }
}

/// Re-estimates `x0` by L-BFGS on the first `samples` samples of `data`,
/// all other parameters fixed.
pub fn fit_initial_state(
    model: &LfrModel,
    data: &Dataset,
    samples: usize,
    iters: usize,
) -> Result<Vec<f64>, TrainError> {
    let n_d = model.n_d();
    data.check_channels(model.plant.b_u.cols(), n_d, model.plant.c_y.rows())?;
    let head = data.head(samples.max(1));
    let (u, y) = match &model.scalers {
        Some(s) => (s.scale_u(&head.u), s.scale_y(&head.y)),
        None => (head.u.clone(), head.y.clone()),
    };
    let spec = ModelSpec {
        mode: model.mode,
        n_x: model.plant.a_x.rows(),
        n_u: u.cols(),
        n_y: y.cols(),
        n_d,
        delta: model.plant.delta.clone(),
        scheduling: match &model.scheduling {
            crate::lfr::SchedulingMap::Net(_) => SchedulingKind::Net,
            crate::lfr::SchedulingMap::Exogenous => SchedulingKind::Exogenous,
        },
        plan: match &model.scheduling {
            crate::lfr::SchedulingMap::Net(net) => net.plan(),
            crate::lfr::SchedulingMap::Exogenous => NetPlan::linear(),
        },
        epsilon: model
            .factors
            .as_ref()
            .map_or(DEFAULT_EPSILON, |f| f.epsilon),
    };
    let inner = SimLoss::new(&spec, &u, &head.d, &y, 0.0)?;
    let layout = inner.layout().clone();
    let theta = layout.flatten(model)?;
    let mut obj = InitialStateLoss {
        full_grad: vec![0.0; theta.len()],
        range: layout.x0.clone(),
        theta,
        inner,
    };
    let r = lbfgs_run(&mut obj, &model.x0, iters, &LbfgsConfig::default(), |_| {});
    if r.loss.is_finite() {
        Ok(r.theta)
    } else {
        Err(TrainError::NonFiniteLoss)
    }
}
