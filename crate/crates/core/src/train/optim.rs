use serde::{Deserialize, Serialize};

use crate::linalg::dot;

/// A differentiable scalar objective. Non-finite values mark infeasible
/// points.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&mut self, theta: &[f64]) -> f64;
    /// Value and gradient; `grad` has length [`dim`](Self::dim).
    fn value_grad(&mut self, theta: &[f64], grad: &mut [f64]) -> f64;
}

/// One optimizer iteration as reported to the caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    GradientTolerance,
    RelativeDecrease,
    LineSearchFailure,
    /// The starting point already had a non-finite loss.
    NonFiniteStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub theta: Vec<f64>,
    pub loss: f64,
    pub iterations: usize,
    pub stop: StopReason,
    pub trace: Vec<IterRecord>,
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Halvings tried before an Adam step with non-finite loss is skipped.
const ADAM_MAX_HALVINGS: usize = 30;

/// Full-batch Adam for `steps` iterations.
///
/// A step landing on a non-finite loss is retried with half the step
/// length; if no halving helps the iterate stays put for that iteration.
pub fn adam_run<O: Objective + ?Sized>(
    obj: &mut O,
    theta0: &[f64],
    steps: usize,
    cfg: &AdamConfig,
    mut on_iter: impl FnMut(&IterRecord),
) -> OptimResult {
    let dim = obj.dim();
    let mut theta = theta0.to_vec();
    let mut grad = vec![0.0; dim];
    let mut loss = obj.value_grad(&theta, &mut grad);
    let mut trace = Vec::with_capacity(steps);
    if !loss.is_finite() {
        return OptimResult {
            theta,
            loss,
            iterations: 0,
            stop: StopReason::NonFiniteStart,
            trace,
        };
    }
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut dir = vec![0.0; dim];
    let mut cand = vec![0.0; dim];
    let mut cand_grad = vec![0.0; dim];
    for t in 1..=steps {
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        for i in 0..dim {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            dir[i] = (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.eps);
        }
        let mut lr = cfg.step;
        for _ in 0..=ADAM_MAX_HALVINGS {
            for i in 0..dim {
                cand[i] = theta[i] - lr * dir[i];
            }
            let f = obj.value_grad(&cand, &mut cand_grad);
            if f.is_finite() {
                std::mem::swap(&mut theta, &mut cand);
                std::mem::swap(&mut grad, &mut cand_grad);
                loss = f;
                break;
            }
            lr *= 0.5;
        }
        let rec = IterRecord {
            iter: t,
            loss,
            grad_norm: dot(&grad, &grad).sqrt(),
        };
        on_iter(&rec);
        trace.push(rec);
    }
    OptimResult {
        theta,
        loss,
        iterations: steps,
        stop: StopReason::MaxIters,
        trace,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    pub grad_tol: f64,
    pub rel_decrease_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 1e-9,
            rel_decrease_tol: 1e-12,
        }
    }
}

const MAX_BRACKET_STEPS: usize = 25;
const MAX_ZOOM_STEPS: usize = 30;

struct Point {
    alpha: f64,
    f: f64,
    dphi: f64,
    grad: Vec<f64>,
}

struct LineSearch<'a, O: Objective + ?Sized> {
    obj: &'a mut O,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
    buf: Vec<f64>,
}

impl<O: Objective + ?Sized> LineSearch<'_, O> {
    fn eval(&mut self, alpha: f64) -> Point {
        for i in 0..self.x.len() {
            self.buf[i] = self.x[i] + alpha * self.d[i];
        }
        let mut grad = vec![0.0; self.x.len()];
        let f = self.obj.value_grad(&self.buf, &mut grad);
        let dphi = if f.is_finite() {
            dot(&grad, self.d)
        } else {
            f64::NAN
        };
        Point {
            alpha,
            f,
            dphi,
            grad,
        }
    }

    fn armijo_fails(&self, p: &Point) -> bool {
        !p.f.is_finite() || p.f > self.f0 + self.c1 * p.alpha * self.dphi0
    }

    fn curvature_ok(&self, p: &Point) -> bool {
        p.dphi.abs() <= -self.c2 * self.dphi0
    }

    /// Strong-Wolfe step: bracketing phase followed by zoom.
    fn search(&mut self, alpha1: f64) -> Option<Point> {
        let mut prev = Point {
            alpha: 0.0,
            f: self.f0,
            dphi: self.dphi0,
            grad: Vec::new(),
        };
        let mut alpha = alpha1;
        for i in 0..MAX_BRACKET_STEPS {
            let cur = self.eval(alpha);
            if self.armijo_fails(&cur) || (i > 0 && cur.f >= prev.f) {
                return self.zoom(prev, cur);
            }
            if self.curvature_ok(&cur) {
                return Some(cur);
            }
            if cur.dphi >= 0.0 {
                return self.zoom(cur, prev);
            }
            alpha = 2.0 * cur.alpha;
            prev = cur;
        }
        (prev.alpha > 0.0).then_some(prev)
    }

    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Option<Point> {
        for _ in 0..MAX_ZOOM_STEPS {
            let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
            let width = b - a;
            if width <= f64::EPSILON * b.max(1e-300) {
                break;
            }
            let mut alpha = cubic_minimizer(&lo, &hi).unwrap_or(0.5 * (a + b));
            // keep the trial well inside the bracket
            let margin = 0.1 * width;
            if !(alpha > a + margin && alpha < b - margin) {
                alpha = 0.5 * (a + b);
            }
            let cur = self.eval(alpha);
            if self.armijo_fails(&cur) || cur.f >= lo.f {
                hi = cur;
            } else {
                if self.curvature_ok(&cur) {
                    return Some(cur);
                }
                if cur.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = std::mem::replace(&mut lo, cur);
                } else {
                    lo = cur;
                }
            }
        }
        // best point with sufficient decrease, if any
        (lo.alpha > 0.0).then_some(lo)
    }
}

/// Minimizer of the cubic interpolating `(α, φ, φ')` at both ends.
fn cubic_minimizer(p: &Point, q: &Point) -> Option<f64> {
    if !(p.f.is_finite() && q.f.is_finite() && p.dphi.is_finite() && q.dphi.is_finite()) {
        return None;
    }
    let d1 = p.dphi + q.dphi - 3.0 * (p.f - q.f) / (p.alpha - q.alpha);
    let disc = d1 * d1 - p.dphi * q.dphi;
    if disc < 0.0 {
        return None;
    }
    let d2 = (q.alpha - p.alpha).signum() * disc.sqrt();
    let denom = q.dphi - p.dphi + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let a = q.alpha - (q.alpha - p.alpha) * (q.dphi + d2 - d1) / denom;
    a.is_finite().then_some(a)
}

/// Limited-memory BFGS with two-loop recursion and strong-Wolfe line
/// search. Stops on `‖g‖∞ < grad_tol`, a relative loss decrease below
/// `rel_decrease_tol`, a failed line search, or `max_iters`; in every case
/// the best iterate is returned.
pub fn lbfgs_run<O: Objective + ?Sized>(
    obj: &mut O,
    theta0: &[f64],
    max_iters: usize,
    cfg: &LbfgsConfig,
    mut on_iter: impl FnMut(&IterRecord),
) -> OptimResult {
    let dim = obj.dim();
    let mut x = theta0.to_vec();
    let mut g = vec![0.0; dim];
    let mut f = obj.value_grad(&x, &mut g);
    let mut trace = Vec::new();
    if !f.is_finite() {
        return OptimResult {
            theta: x,
            loss: f,
            iterations: 0,
            stop: StopReason::NonFiniteStart,
            trace,
        };
    }
    let mem = cfg.memory.max(1);
    let mut s_hist: Vec<Vec<f64>> = Vec::with_capacity(mem);
    let mut y_hist: Vec<Vec<f64>> = Vec::with_capacity(mem);
    let mut rho_hist: Vec<f64> = Vec::with_capacity(mem);
    let mut alpha_buf = vec![0.0; mem];
    let mut d = vec![0.0; dim];
    let mut stop = StopReason::MaxIters;
    let mut iterations = 0;

    for iter in 1..=max_iters {
        if norm_inf(&g) < cfg.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        // two-loop recursion: d = −H g
        d.copy_from_slice(&g);
        for j in (0..s_hist.len()).rev() {
            let a = rho_hist[j] * dot(&s_hist[j], &d);
            alpha_buf[j] = a;
            for (di, yi) in d.iter_mut().zip(&y_hist[j]) {
                *di -= a * yi;
            }
        }
        let gamma = match (s_hist.last(), y_hist.last()) {
            (Some(s), Some(y)) => dot(s, y) / dot(y, y),
            _ => 1.0,
        };
        for di in d.iter_mut() {
            *di *= gamma;
        }
        for j in 0..s_hist.len() {
            let b = rho_hist[j] * dot(&y_hist[j], &d);
            for (di, si) in d.iter_mut().zip(&s_hist[j]) {
                *di += (alpha_buf[j] - b) * si;
            }
        }
        for di in d.iter_mut() {
            *di = -*di;
        }
        let mut dphi0 = dot(&g, &d);
        if !(dphi0 < 0.0) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            for (di, gi) in d.iter_mut().zip(&g) {
                *di = -gi;
            }
            dphi0 = dot(&g, &d);
        }
        let alpha1 = if s_hist.is_empty() {
            (1.0 / norm_inf(&g)).min(1.0)
        } else {
            1.0
        };

        let mut ls = LineSearch {
            obj: &mut *obj,
            x: &x,
            d: &d,
            f0: f,
            dphi0,
            c1: cfg.c1,
            c2: cfg.c2,
            buf: vec![0.0; dim],
        };
        let Some(pt) = ls.search(alpha1) else {
            stop = StopReason::LineSearchFailure;
            break;
        };

        let s: Vec<f64> = d.iter().map(|di| pt.alpha * di).collect();
        let y: Vec<f64> = pt.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        let f_old = f;
        f = pt.f;
        g = pt.grad;
        iterations = iter;

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if s_hist.len() == mem {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            rho_hist.push(1.0 / sy);
            s_hist.push(s);
            y_hist.push(y);
        }

        let rec = IterRecord {
            iter,
            loss: f,
            grad_norm: dot(&g, &g).sqrt(),
        };
        on_iter(&rec);
        trace.push(rec);

        let scale = f_old.abs().max(f.abs()).max(f64::MIN_POSITIVE);
        if (f_old - f) / scale < cfg.rel_decrease_tol {
            stop = StopReason::RelativeDecrease;
            break;
        }
    }
    OptimResult {
        theta: x,
        loss: f,
        iterations,
        stop,
        trace,
    }
}
