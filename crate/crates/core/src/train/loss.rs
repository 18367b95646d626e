use super::{ModelSpec, Objective, ParamLayout, TrainError};
use crate::bench::Dataset;
use crate::lfr::{LfrError, LfrModel, SchedulingMap};
use crate::linalg::{dot, lu_in_place, lu_solve_in_place, lu_solve_t_in_place, Mat};

#[inline]
fn gemv_add(a: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o += dot(&a[i * cols..(i + 1) * cols], v);
    }
}

/// `out += aᵀ v` for a row-major `a` with `v.len()` rows.
#[inline]
fn gemv_t_add(a: &[f64], cols: usize, v: &[f64], out: &mut [f64]) {
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        for (o, &aij) in out.iter_mut().zip(&a[i * cols..(i + 1) * cols]) {
            *o += aij * vi;
        }
    }
}

#[inline]
fn outer_add(g: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (gij, &bj) in g[i * cols..(i + 1) * cols].iter_mut().zip(b) {
            *gij += ai * bj;
        }
    }
}

/// Forward signals of one rollout, kept for the reverse sweep.
#[derive(Debug, Default)]
struct Tape {
    x: Vec<f64>,
    input: Vec<f64>,
    acts: Vec<f64>,
    p: Vec<f64>,
    delta: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    lu: Vec<f64>,
    perm: Vec<usize>,
    e: Vec<f64>,
}

#[derive(Debug, Default)]
struct Scratch {
    x_bar: Vec<f64>,
    x_bar_next: Vec<f64>,
    w_bar: Vec<f64>,
    r_bar: Vec<f64>,
    delta_bar: Vec<f64>,
    p_bar: Vec<f64>,
    y_bar: Vec<f64>,
    input_bar: Vec<f64>,
    dzw_bar: Vec<f64>,
    solve: Vec<f64>,
    net: Vec<f64>,
}

/// Simulation-error objective
/// `V(θ) = (1/N) Σ_k ‖y_k − ŷ_k(θ)‖₂² + ρ ‖θ‖₂²`
/// with its exact reverse-mode gradient.
///
/// Owns preallocated buffers for the rollout, so repeated evaluations do
/// not allocate beyond assembling the plant matrices. Rollouts that hit a
/// singular latent loop or diverge evaluate to `+∞`.
pub struct SimLoss<'a> {
    spec: ModelSpec,
    layout: ParamLayout,
    u: &'a Mat,
    d: &'a Mat,
    y: &'a Mat,
    rho: f64,
    tape: Tape,
    scratch: Scratch,
}

impl<'a> SimLoss<'a> {
    pub fn new(
        spec: &ModelSpec,
        u: &'a Mat,
        d: &'a Mat,
        y: &'a Mat,
        rho: f64,
    ) -> Result<Self, TrainError> {
        spec.validate()?;
        let n = u.rows();
        if n == 0 {
            return Err(TrainError::Config("empty data record".into()));
        }
        if (u.cols(), d.cols(), y.cols()) != (spec.n_u, spec.n_d, spec.n_y)
            || d.rows() != n
            || y.rows() != n
        {
            return Err(TrainError::Config(format!(
                "data is (u {}x{}, d {}x{}, y {}x{}), model expects (n_u, n_d, n_y) = ({}, {}, {})",
                u.rows(),
                u.cols(),
                d.rows(),
                d.cols(),
                y.rows(),
                y.cols(),
                spec.n_u,
                spec.n_d,
                spec.n_y
            )));
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(TrainError::Config(format!(
                "regularization weight must be >= 0, got {rho}"
            )));
        }
        let layout = ParamLayout::new(spec);
        let (n_x, n_w, n_p) = (spec.n_x, spec.n_w(), spec.n_p());
        let net = spec.net_template();
        let n_in = net.as_ref().map_or(0, |n| n.input_dim());
        let h = net.as_ref().map_or(0, |n| n.hidden_units());
        let tape = Tape {
            x: vec![0.0; (n + 1) * n_x],
            input: vec![0.0; n * n_in],
            acts: vec![0.0; n * h],
            p: vec![0.0; n * n_p],
            delta: vec![0.0; n * n_w],
            z: vec![0.0; n * n_w],
            w: vec![0.0; n * n_w],
            lu: vec![0.0; n * n_w * n_w],
            perm: vec![0; n * n_w],
            e: vec![0.0; n * spec.n_y],
        };
        let scratch = Scratch {
            x_bar: vec![0.0; n_x],
            x_bar_next: vec![0.0; n_x],
            w_bar: vec![0.0; n_w],
            r_bar: vec![0.0; n_w],
            delta_bar: vec![0.0; n_w],
            p_bar: vec![0.0; n_p],
            y_bar: vec![0.0; spec.n_y],
            input_bar: vec![0.0; n_in],
            dzw_bar: vec![0.0; n_w * n_w],
            solve: vec![0.0; n_w],
            net: Vec::new(),
        };
        Ok(Self {
            spec: spec.clone(),
            layout,
            u,
            d,
            y,
            rho,
            tape,
            scratch,
        })
    }

    pub fn from_dataset(spec: &ModelSpec, data: &'a Dataset, rho: f64) -> Result<Self, TrainError> {
        Self::new(spec, &data.u, &data.d, &data.y, rho)
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.u.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.u.rows() == 0
    }

    fn regularizer(&self, theta: &[f64]) -> f64 {
        self.rho * dot(theta, theta)
    }

    /// `V(θ)`, `+∞` when the rollout fails.
    pub fn loss(&mut self, theta: &[f64]) -> f64 {
        let Ok(model) = self.layout.unflatten(&self.spec, theta) else {
            return f64::INFINITY;
        };
        match self.forward(&model) {
            Some(sse) => {
                let v = sse / self.len() as f64 + self.regularizer(theta);
                if v.is_finite() {
                    v
                } else {
                    f64::INFINITY
                }
            }
            None => f64::INFINITY,
        }
    }

    /// `V(θ)` and `∂V/∂θ` written into `grad`. On an infinite loss `grad`
    /// is zeroed.
    pub fn loss_and_gradient_into(&mut self, theta: &[f64], grad: &mut [f64]) -> f64 {
        assert_eq!(grad.len(), self.layout.total);
        let Ok(model) = self.layout.unflatten(&self.spec, theta) else {
            grad.fill(0.0);
            return f64::INFINITY;
        };
        let Some(sse) = self.forward(&model) else {
            grad.fill(0.0);
            return f64::INFINITY;
        };
        let v = sse / self.len() as f64 + self.regularizer(theta);
        if !v.is_finite() || self.backward(&model, grad).is_err() {
            grad.fill(0.0);
            return f64::INFINITY;
        }
        for (g, t) in grad.iter_mut().zip(theta) {
            *g += 2.0 * self.rho * t;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            grad.fill(0.0);
            return f64::INFINITY;
        }
        v
    }

    pub fn loss_and_gradient(&mut self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; self.layout.total];
        let v = self.loss_and_gradient_into(theta, &mut g);
        (v, g)
    }

    /// Rollout from `model.x0`; returns the sum of squared output errors.
    fn forward(&mut self, model: &LfrModel) -> Option<f64> {
        let spec = &self.spec;
        let (n_x, n_u, n_y, n_w, n_p) = (spec.n_x, spec.n_u, spec.n_y, spec.n_w(), spec.n_p());
        let pl = &model.plant;
        let (ax, bw, bu, cz, dzw, dzu, cy, dyw, dyu) = (
            pl.a_x.as_slice(),
            pl.b_w.as_slice(),
            pl.b_u.as_slice(),
            pl.c_z.as_slice(),
            pl.d_zw.as_slice(),
            pl.d_zu.as_slice(),
            pl.c_y.as_slice(),
            pl.d_yw.as_slice(),
            pl.d_yu.as_slice(),
        );
        let net = match &model.scheduling {
            SchedulingMap::Net(net) => Some(net),
            SchedulingMap::Exogenous => None,
        };
        let n_in = net.map_or(0, |n| n.input_dim());
        let h = net.map_or(0, |n| n.hidden_units());
        let rational = model.factors.is_some() && n_w > 0;
        let Tape {
            x: xs,
            input,
            acts,
            p,
            delta,
            z,
            w,
            lu,
            perm,
            e,
        } = &mut self.tape;
        let tmp = &mut self.scratch.solve;

        xs[..n_x].copy_from_slice(&model.x0);
        let mut sse = 0.0;
        for k in 0..self.u.rows() {
            let (past, future) = xs.split_at_mut((k + 1) * n_x);
            let x = &past[k * n_x..];
            let xn = &mut future[..n_x];
            let uk = self.u.row(k);
            let pk = &mut p[k * n_p..(k + 1) * n_p];
            match net {
                Some(net) => {
                    let inp = &mut input[k * n_in..(k + 1) * n_in];
                    inp[..n_x].copy_from_slice(x);
                    inp[n_x..n_x + n_u].copy_from_slice(uk);
                    inp[n_x + n_u..].copy_from_slice(self.d.row(k));
                    net.forward_record(inp, &mut acts[k * h..(k + 1) * h], pk);
                }
                None => pk.copy_from_slice(self.d.row(k)),
            }
            let dl = &mut delta[k * n_w..(k + 1) * n_w];
            spec.delta.expand_into(pk, dl);

            let zk = &mut z[k * n_w..(k + 1) * n_w];
            zk.fill(0.0);
            gemv_add(cz, n_x, x, zk);
            gemv_add(dzu, n_u, uk, zk);
            if rational {
                let m = &mut lu[k * n_w * n_w..(k + 1) * n_w * n_w];
                for i in 0..n_w {
                    for j in 0..n_w {
                        m[i * n_w + j] = if i == j { 1.0 } else { 0.0 } - dzw[i * n_w + j] * dl[j];
                    }
                }
                let pm = &mut perm[k * n_w..(k + 1) * n_w];
                if !lu_in_place(m, n_w, pm) {
                    return None;
                }
                lu_solve_in_place(m, n_w, pm, zk, tmp);
            }
            let wk = &mut w[k * n_w..(k + 1) * n_w];
            for ((wi, zi), di) in wk.iter_mut().zip(zk.iter()).zip(dl.iter()) {
                *wi = zi * di;
            }

            let ek = &mut e[k * n_y..(k + 1) * n_y];
            for (ei, yi) in ek.iter_mut().zip(self.y.row(k)) {
                *ei = -yi;
            }
            gemv_add(cy, n_x, x, ek);
            gemv_add(dyw, n_w, wk, ek);
            gemv_add(dyu, n_u, uk, ek);
            sse += dot(ek, ek);

            xn.fill(0.0);
            gemv_add(ax, n_x, x, xn);
            gemv_add(bw, n_w, wk, xn);
            gemv_add(bu, n_u, uk, xn);
            if !xn.iter().all(|v| v.is_finite()) {
                return None;
            }
        }
        sse.is_finite().then_some(sse)
    }

    /// Reverse sweep over the tape of the last [`forward`](Self::forward).
    fn backward(&mut self, model: &LfrModel, grad: &mut [f64]) -> Result<(), TrainError> {
        let spec = &self.spec;
        let l = &self.layout;
        let (n_x, n_y, n_w, n_p) = (spec.n_x, spec.n_y, spec.n_w(), spec.n_p());
        let n = self.u.rows();
        let pl = &model.plant;
        let (ax, bw, cz, dzw, cy, dyw) = (
            pl.a_x.as_slice(),
            pl.b_w.as_slice(),
            pl.c_z.as_slice(),
            pl.d_zw.as_slice(),
            pl.c_y.as_slice(),
            pl.d_yw.as_slice(),
        );
        let net = match &model.scheduling {
            SchedulingMap::Net(net) => Some(net),
            SchedulingMap::Exogenous => None,
        };
        let n_in = net.map_or(0, |n| n.input_dim());
        let h = net.map_or(0, |n| n.hidden_units());
        let rational = model.factors.is_some() && n_w > 0;
        let t = &self.tape;
        let Scratch {
            x_bar,
            x_bar_next,
            w_bar,
            r_bar,
            delta_bar,
            p_bar,
            y_bar,
            input_bar,
            dzw_bar,
            solve,
            net: net_scratch,
        } = &mut self.scratch;

        grad.fill(0.0);
        dzw_bar.fill(0.0);
        x_bar_next.fill(0.0);
        let scale = 2.0 / n as f64;
        for k in (0..n).rev() {
            let x = &t.x[k * n_x..(k + 1) * n_x];
            let uk = self.u.row(k);
            let zk = &t.z[k * n_w..(k + 1) * n_w];
            let wk = &t.w[k * n_w..(k + 1) * n_w];
            let dl = &t.delta[k * n_w..(k + 1) * n_w];
            for (yb, e) in y_bar.iter_mut().zip(&t.e[k * n_y..(k + 1) * n_y]) {
                *yb = scale * e;
            }

            // x_{k+1} = A_x x + B_w w + B_u u
            outer_add(&mut grad[l.a_x.clone()], x_bar_next, x);
            outer_add(&mut grad[l.b_w.clone()], x_bar_next, wk);
            outer_add(&mut grad[l.b_u.clone()], x_bar_next, uk);
            x_bar.fill(0.0);
            gemv_t_add(ax, n_x, x_bar_next, x_bar);
            w_bar.fill(0.0);
            gemv_t_add(bw, n_w, x_bar_next, w_bar);

            // y = C_y x + D_yw w + D_yu u
            outer_add(&mut grad[l.c_y.clone()], y_bar, x);
            outer_add(&mut grad[l.d_yw.clone()], y_bar, wk);
            outer_add(&mut grad[l.d_yu.clone()], y_bar, uk);
            gemv_t_add(cy, n_x, y_bar, x_bar);
            gemv_t_add(dyw, n_w, y_bar, w_bar);

            // w = Δ z
            for i in 0..n_w {
                r_bar[i] = dl[i] * w_bar[i];
                delta_bar[i] = zk[i] * w_bar[i];
            }

            // (I − D_zw Δ) z = r
            if rational {
                let m = &t.lu[k * n_w * n_w..(k + 1) * n_w * n_w];
                let pm = &t.perm[k * n_w..(k + 1) * n_w];
                lu_solve_t_in_place(m, n_w, pm, r_bar, solve);
                outer_add(dzw_bar, r_bar, wk);
                // δ̄_j += z_j (D_zwᵀ r̄)_j
                solve.fill(0.0);
                gemv_t_add(dzw, n_w, r_bar, solve);
                for j in 0..n_w {
                    delta_bar[j] += zk[j] * solve[j];
                }
            }

            // r = C_z x + D_zu u
            outer_add(&mut grad[l.c_z.clone()], r_bar, x);
            outer_add(&mut grad[l.d_zu.clone()], r_bar, uk);
            gemv_t_add(cz, n_x, r_bar, x_bar);

            if let Some(net) = net {
                p_bar.fill(0.0);
                spec.delta.reduce_add(delta_bar, p_bar);
                input_bar.fill(0.0);
                net.backward(
                    &t.input[k * n_in..(k + 1) * n_in],
                    &t.acts[k * h..(k + 1) * h],
                    &t.p[k * n_p..(k + 1) * n_p],
                    p_bar,
                    &mut grad[l.net.clone()],
                    input_bar,
                    net_scratch,
                );
                for (xb, ib) in x_bar.iter_mut().zip(&input_bar[..n_x]) {
                    *xb += ib;
                }
            }
            std::mem::swap(x_bar, x_bar_next);
        }
        grad[l.x0.clone()].copy_from_slice(x_bar_next);

        if rational {
            let factors = model.factors.as_ref().expect("rational model has factors");
            let g =
                factors.backward(&Mat::new(n_w, n_w, dzw_bar.clone()).map_err(LfrError::from)?)?;
            grad[l.da_lower.clone()].copy_from_slice(&g.da_lower);
            grad[l.db_upper.clone()].copy_from_slice(&g.db_upper);
            grad[l.d_d.clone()].copy_from_slice(&g.d_d);
        }
        Ok(())
    }
}

impl Objective for SimLoss<'_> {
    fn dim(&self) -> usize {
        self.layout.total
    }

    fn value(&mut self, theta: &[f64]) -> f64 {
        self.loss(theta)
    }

    fn value_grad(&mut self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.loss_and_gradient_into(theta, grad)
    }
}

/// `V(θ)` on a dataset.
pub fn loss(spec: &ModelSpec, theta: &[f64], data: &Dataset, rho: f64) -> Result<f64, TrainError> {
    Ok(SimLoss::from_dataset(spec, data, rho)?.loss(theta))
}

/// `V(θ)` and its gradient on a dataset.
pub fn loss_and_gradient(
    spec: &ModelSpec,
    theta: &[f64],
    data: &Dataset,
    rho: f64,
) -> Result<(f64, Vec<f64>), TrainError> {
    Ok(SimLoss::from_dataset(spec, data, rho)?.loss_and_gradient(theta))
}
