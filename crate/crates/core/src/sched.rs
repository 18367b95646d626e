//! Scheduling maps `p = ψ(x, u, d)`.
//!
//! A one-block ResNet: a tanh feedforward stack on `[x; u; d]` whose head is
//! summed with a linear bypass, and the sum is squashed by an output tanh so
//! that `‖p‖∞ < 1` for every input. With no hidden layers this is the
//! linear-with-saturation map `tanh(W_x x + W_u u + W_d d + b)`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, Mat};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchedError {
    #[error("scheduling net dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid scheduling net document: {0}")]
    InvalidDocument(String),
}

/// Hidden-layer sizes. Empty means the linear saturated map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetPlan {
    pub hidden: Vec<usize>,
}

impl NetPlan {
    pub fn linear() -> Self {
        Self { hidden: Vec::new() }
    }
}

impl Default for NetPlan {
    /// Two tanh layers of six neurons.
    fn default() -> Self {
        Self { hidden: vec![6, 6] }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    weights: Mat,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingNet {
    n_x: usize,
    n_u: usize,
    n_d: usize,
    hidden: Vec<Dense>,
    /// `n_p × last_hidden`; `None` when there are no hidden layers.
    head: Option<Mat>,
    /// `[W_x W_u W_d]`, `n_p × (n_x + n_u + n_d)`.
    bypass: Mat,
    bias: Vec<f64>,
    offsets: NetOffsets,
}

impl SchedulingNet {
    /// All weights and biases zero.
    pub fn zeros(n_x: usize, n_u: usize, n_d: usize, n_p: usize, plan: &NetPlan) -> Self {
        let n_in = n_x + n_u + n_d;
        let mut fan_in = n_in;
        let hidden = plan
            .hidden
            .iter()
            .map(|&h| {
                let layer = Dense {
                    weights: Mat::zeros(h, fan_in),
                    bias: vec![0.0; h],
                };
                fan_in = h;
                layer
            })
            .collect::<Vec<_>>();
        let head = (!hidden.is_empty()).then(|| Mat::zeros(n_p, fan_in));
        let mut net = Self {
            n_x,
            n_u,
            n_d,
            hidden,
            head,
            bypass: Mat::zeros(n_p, n_in),
            bias: vec![0.0; n_p],
            offsets: NetOffsets::default(),
        };
        net.offsets = net.compute_offsets();
        net
    }

    /// Uniform Xavier weights `U(±sqrt(6 / (fan_in + fan_out)))`, zero biases.
    ///
    /// The bypass `[W_x W_u W_d]` is treated as one weight matrix.
    pub fn xavier_init<R: Rng + ?Sized>(
        n_x: usize,
        n_u: usize,
        n_d: usize,
        n_p: usize,
        plan: &NetPlan,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(n_x, n_u, n_d, n_p, plan);
        let mut fill = |m: &mut Mat| {
            let limit = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
            if m.rows() + m.cols() == 0 {
                return;
            }
            for v in m.as_mut_slice() {
                *v = rng.gen_range(-limit..=limit);
            }
        };
        for layer in &mut net.hidden {
            fill(&mut layer.weights);
        }
        if let Some(head) = &mut net.head {
            fill(head);
        }
        fill(&mut net.bypass);
        net
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_d(&self) -> usize {
        self.n_d
    }

    pub fn n_p(&self) -> usize {
        self.bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.n_x + self.n_u + self.n_d
    }

    pub fn plan(&self) -> NetPlan {
        NetPlan {
            hidden: self.hidden.iter().map(|l| l.bias.len()).collect(),
        }
    }

    /// Total hidden units (size of the per-step activation record).
    pub fn hidden_units(&self) -> usize {
        self.hidden.iter().map(|l| l.bias.len()).sum()
    }

    pub fn bypass(&self) -> &Mat {
        &self.bypass
    }

    pub fn bypass_mut(&mut self) -> &mut Mat {
        &mut self.bypass
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// `p = ψ(x, u, d)`.
    pub fn forward(&self, x: &[f64], u: &[f64], d: &[f64]) -> Result<Vec<f64>, SchedError> {
        if x.len() != self.n_x || u.len() != self.n_u || d.len() != self.n_d {
            return Err(SchedError::DimensionMismatch(format!(
                "got (x, u, d) lengths ({}, {}, {}), expected ({}, {}, {})",
                x.len(),
                u.len(),
                d.len(),
                self.n_x,
                self.n_u,
                self.n_d
            )));
        }
        let mut input = Vec::with_capacity(self.input_dim());
        input.extend_from_slice(x);
        input.extend_from_slice(u);
        input.extend_from_slice(d);
        let mut acts = vec![0.0; self.hidden_units()];
        let mut p = vec![0.0; self.n_p()];
        self.forward_record(&input, &mut acts, &mut p);
        Ok(p)
    }

    /// Forward pass on a concatenated input, recording hidden activations.
    #[inline]
    pub(crate) fn forward_record(&self, input: &[f64], acts: &mut [f64], p: &mut [f64]) {
        let mut off = 0;
        for (l, layer) in self.hidden.iter().enumerate() {
            let h = layer.bias.len();
            let (prev, cur) = acts.split_at_mut(off);
            let src: &[f64] = if l == 0 {
                input
            } else {
                &prev[off - layer.weights.cols()..]
            };
            for (i, out) in cur[..h].iter_mut().enumerate() {
                *out = (dot(layer.weights.row(i), src) + layer.bias[i]).tanh();
            }
            off += h;
        }
        for (i, out) in p.iter_mut().enumerate() {
            let mut a = dot(self.bypass.row(i), input) + self.bias[i];
            if let Some(head) = &self.head {
                a += dot(head.row(i), &acts[off - head.cols()..off]);
            }
            *out = a.tanh();
        }
    }

    /// Reverse pass for one evaluation recorded by [`forward_record`].
    ///
    /// Accumulates parameter gradients into `grad` (layout of
    /// [`write_params`](Self::write_params)) and input gradients into
    /// `input_bar`. `scratch` needs `2 * max(hidden, n_p)` entries.
    pub(crate) fn backward(
        &self,
        input: &[f64],
        acts: &[f64],
        p: &[f64],
        p_bar: &[f64],
        grad: &mut [f64],
        input_bar: &mut [f64],
        scratch: &mut Vec<f64>,
    ) {
        let widest = self
            .hidden
            .iter()
            .map(|l| l.bias.len())
            .max()
            .unwrap_or(0)
            .max(self.n_p());
        scratch.clear();
        scratch.resize(2 * widest, 0.0);
        let (g_cur, g_prev) = scratch.split_at_mut(widest);

        let n_p = self.n_p();
        let offsets = &self.offsets;
        for i in 0..n_p {
            g_cur[i] = p_bar[i] * (1.0 - p[i] * p[i]);
        }
        // output bias and bypass
        for i in 0..n_p {
            let a_bar = g_cur[i];
            grad[offsets.bias + i] += a_bar;
            if a_bar == 0.0 {
                continue;
            }
            let n_in = self.input_dim();
            let row = &mut grad[offsets.bypass + i * n_in..offsets.bypass + (i + 1) * n_in];
            for (g, &v) in row.iter_mut().zip(input) {
                *g += a_bar * v;
            }
            for (ib, &w) in input_bar.iter_mut().zip(self.bypass.row(i)) {
                *ib += a_bar * w;
            }
        }
        let Some(head) = &self.head else {
            return;
        };

        let total = acts.len();
        let last = head.cols();
        let h_last = &acts[total - last..];
        // head weights and gradient into the last hidden layer
        g_prev[..last].fill(0.0);
        for i in 0..n_p {
            let a_bar = g_cur[i];
            let row = &mut grad[offsets.head + i * last..offsets.head + (i + 1) * last];
            for (g, &h) in row.iter_mut().zip(h_last) {
                *g += a_bar * h;
            }
            for (hb, &w) in g_prev[..last].iter_mut().zip(head.row(i)) {
                *hb += a_bar * w;
            }
        }

        let mut end = total;
        for (l, layer) in self.hidden.iter().enumerate().rev() {
            let h = layer.bias.len();
            let start = end - h;
            let out = &acts[start..end];
            // pre-activation gradient
            for i in 0..h {
                g_cur[i] = g_prev[i] * (1.0 - out[i] * out[i]);
            }
            let src: &[f64] = if l == 0 {
                input
            } else {
                &acts[start - layer.weights.cols()..start]
            };
            let n_src = src.len();
            let (w_off, b_off) = offsets.hidden[l];
            for i in 0..h {
                let gi = g_cur[i];
                grad[b_off + i] += gi;
                if gi == 0.0 {
                    continue;
                }
                let row = &mut grad[w_off + i * n_src..w_off + (i + 1) * n_src];
                for (g, &s) in row.iter_mut().zip(src) {
                    *g += gi * s;
                }
            }
            if l == 0 {
                for i in 0..h {
                    for (ib, &w) in input_bar.iter_mut().zip(layer.weights.row(i)) {
                        *ib += g_cur[i] * w;
                    }
                }
            } else {
                g_prev[..n_src].fill(0.0);
                for i in 0..h {
                    for (pb, &w) in g_prev[..n_src].iter_mut().zip(layer.weights.row(i)) {
                        *pb += g_cur[i] * w;
                    }
                }
            }
            end = start;
        }
    }

    fn compute_offsets(&self) -> NetOffsets {
        let mut off = 0;
        let mut hidden = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let w = off;
            off += layer.weights.rows() * layer.weights.cols();
            hidden.push((w, off));
            off += layer.bias.len();
        }
        let head = off;
        off += self.head.as_ref().map_or(0, |h| h.rows() * h.cols());
        let bypass = off;
        off += self.bypass.rows() * self.bypass.cols();
        NetOffsets {
            hidden,
            head,
            bypass,
            bias: off,
        }
    }

    /// Number of trainable reals.
    pub fn param_count(&self) -> usize {
        self.offsets.bias + self.n_p()
    }

    /// Flattens the parameters: hidden layers (weights row-major, then
    /// bias), head weights, bypass weights, output bias.
    pub fn write_params(&self, out: &mut [f64]) {
        assert_eq!(out.len(), self.param_count());
        let mut k = 0;
        let mut put = |s: &[f64]| {
            out[k..k + s.len()].copy_from_slice(s);
            k += s.len();
        };
        for layer in &self.hidden {
            put(layer.weights.as_slice());
            put(&layer.bias);
        }
        if let Some(h) = &self.head {
            put(h.as_slice());
        }
        put(self.bypass.as_slice());
        put(&self.bias);
    }

    /// Inverse of [`write_params`](Self::write_params).
    pub fn read_params(&mut self, src: &[f64]) {
        assert_eq!(src.len(), self.param_count());
        let mut k = 0;
        let mut take = |dst: &mut [f64]| {
            let n = dst.len();
            dst.copy_from_slice(&src[k..k + n]);
            k += n;
        };
        for layer in &mut self.hidden {
            take(layer.weights.as_mut_slice());
            take(&mut layer.bias);
        }
        if let Some(h) = &mut self.head {
            take(h.as_mut_slice());
        }
        take(self.bypass.as_mut_slice());
        take(&mut self.bias);
    }

    pub fn to_document(&self) -> NetDocument {
        let mut layers = Vec::new();
        for layer in &self.hidden {
            layers.push(LayerRecord {
                role: LayerRole::Hidden,
                shape: [layer.weights.rows(), layer.weights.cols()],
                weights: layer.weights.clone(),
                bias: Some(layer.bias.clone()),
                activation: Activation::Tanh,
            });
        }
        if let Some(h) = &self.head {
            layers.push(LayerRecord {
                role: LayerRole::Head,
                shape: [h.rows(), h.cols()],
                weights: h.clone(),
                bias: None,
                activation: Activation::Linear,
            });
        }
        layers.push(LayerRecord {
            role: LayerRole::Bypass,
            shape: [self.bypass.rows(), self.bypass.cols()],
            weights: self.bypass.clone(),
            bias: Some(self.bias.clone()),
            activation: Activation::Tanh,
        });
        NetDocument {
            n_x: self.n_x,
            n_u: self.n_u,
            n_d: self.n_d,
            n_p: self.n_p(),
            layers,
        }
    }

    pub fn from_document(doc: &NetDocument) -> Result<Self, SchedError> {
        let plan = NetPlan {
            hidden: doc
                .layers
                .iter()
                .filter(|l| l.role == LayerRole::Hidden)
                .map(|l| l.shape[0])
                .collect(),
        };
        let mut net = Self::zeros(doc.n_x, doc.n_u, doc.n_d, doc.n_p, &plan);
        let bad = |msg: String| SchedError::InvalidDocument(msg);
        let mut hidden_idx = 0;
        let mut saw_bypass = false;
        for rec in &doc.layers {
            let weights = if rec.weights.rows() * rec.weights.cols() == 0 {
                Mat::zeros(rec.shape[0], rec.shape[1])
            } else {
                rec.weights.clone()
            };
            if weights.shape() != (rec.shape[0], rec.shape[1]) {
                return Err(bad(format!(
                    "layer weights do not match declared shape {:?}",
                    rec.shape
                )));
            }
            let target = match rec.role {
                LayerRole::Hidden => {
                    let layer = net
                        .hidden
                        .get_mut(hidden_idx)
                        .ok_or_else(|| bad("too many hidden layers".into()))?;
                    hidden_idx += 1;
                    let bias = rec
                        .bias
                        .clone()
                        .ok_or_else(|| bad("hidden layer without bias".into()))?;
                    if bias.len() != layer.bias.len() {
                        return Err(bad("hidden bias length mismatch".into()));
                    }
                    layer.bias = bias;
                    &mut layer.weights
                }
                LayerRole::Head => net
                    .head
                    .as_mut()
                    .ok_or_else(|| bad("head without hidden layers".into()))?,
                LayerRole::Bypass => {
                    saw_bypass = true;
                    let bias = rec
                        .bias
                        .clone()
                        .ok_or_else(|| bad("bypass without bias".into()))?;
                    if bias.len() != net.bias.len() {
                        return Err(bad("output bias length mismatch".into()));
                    }
                    net.bias = bias;
                    &mut net.bypass
                }
            };
            if target.shape() != weights.shape() {
                return Err(bad(format!(
                    "{:?} layer is {:?}, expected {:?}",
                    rec.role,
                    weights.shape(),
                    target.shape()
                )));
            }
            *target = weights;
        }
        if !saw_bypass {
            return Err(bad("missing bypass layer".into()));
        }
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
struct NetOffsets {
    /// `(weights, bias)` offsets per hidden layer.
    hidden: Vec<(usize, usize)>,
    head: usize,
    bypass: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerRole {
    Hidden,
    Head,
    Bypass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Linear,
}

/// One layer of the serialized net, in evaluation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub role: LayerRole,
    pub shape: [usize; 2],
    pub weights: Mat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetDocument {
    pub n_x: usize,
    pub n_u: usize,
    pub n_d: usize,
    pub n_p: usize,
    pub layers: Vec<LayerRecord>,
}

impl Serialize for SchedulingNet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_document().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SchedulingNet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = NetDocument::deserialize(d)?;
        Self::from_document(&doc).map_err(serde::de::Error::custom)
    }
}
