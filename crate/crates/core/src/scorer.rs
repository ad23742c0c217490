//! Deep-SVDD style anomaly scorer.
//!
//! An MLP feature map `φ: R^D → R^E` with ReLU hidden layers. Each hidden
//! pre-activation is standardised with per-unit statistics measured once on
//! the warm-up batch and then frozen. The anomaly score is the squared
//! distance of the embedding to a fixed center, `L0 = ‖φ(x) − c‖²`, and the
//! opposing loss is `L1 = 1 / (L0 + ε)`.
//!
//! All trainable parameters live in one flat vector so that the optimizer,
//! gradient checks and snapshots can treat them uniformly.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, Stream};

pub const DEFAULT_EPSILON: f64 = 1e-6;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const CENTER_FLOOR: f64 = 0.1;
const SNAPSHOT_FORMAT: &str = "soel-scorer";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    /// Bias terms on every layer. Off by default: a biased final layer can
    /// map every input onto the center.
    #[serde(default)]
    pub bias: bool,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, embed_dim: usize) -> Self {
        Architecture {
            input_dim,
            hidden_dims,
            embed_dim,
            bias: false,
        }
    }

    /// (fan_in, fan_out) per layer.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in self
            .hidden_dims
            .iter()
            .chain(std::iter::once(&self.embed_dim))
        {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(i, o)| i * o + if self.bias { o } else { 0 })
            .sum()
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embed_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Argument(format!(
                "all layer sizes must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Offsets of one layer's weights (row-major `out × in`) and bias in the
/// flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct LayerLayout {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerState {
    pub architecture: Architecture,
    pub params: Vec<f64>,
    /// Frozen standardisation of each hidden layer: `(z − shift) / scale`.
    pub norm_shift: Vec<Vec<f64>>,
    pub norm_scale: Vec<Vec<f64>>,
    pub center: Vec<f64>,
    pub epsilon: f64,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPair {
    pub l0: f64,
    pub l1: f64,
}

/// Activations retained for backpropagation.
struct ForwardTrace {
    /// Input to each layer (layer 0 gets `x`).
    inputs: Vec<Vec<f64>>,
    /// Post-standardisation pre-activations of hidden layers (for the ReLU mask).
    hidden_pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ScorerState {
    fn layouts(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.architecture
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let w = offset;
                offset += fan_in * fan_out;
                let b = self.architecture.bias.then(|| {
                    let b = offset;
                    offset += fan_out;
                    b
                });
                LayerLayout {
                    fan_in,
                    fan_out,
                    w,
                    b,
                }
            })
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.architecture.input_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.architecture.embed_dim
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Argument(format!(
                "row has {} features, scorer expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn affine(&self, layout: &LayerLayout, input: &[f64]) -> Vec<f64> {
        let w = &self.params[layout.w..layout.w + layout.fan_in * layout.fan_out];
        (0..layout.fan_out)
            .map(|o| {
                let row = &w[o * layout.fan_in..(o + 1) * layout.fan_in];
                let dot: f64 = row.iter().zip(input).map(|(a, b)| a * b).sum();
                dot + layout.b.map_or(0.0, |b| self.params[b + o])
            })
            .collect()
    }

    fn forward_trace(&self, x: &[f64]) -> ForwardTrace {
        let layouts = self.layouts();
        let n_hidden = layouts.len() - 1;
        let mut inputs = Vec::with_capacity(layouts.len());
        let mut hidden_pre = Vec::with_capacity(n_hidden);
        let mut current = x.to_vec();
        for (l, layout) in layouts.iter().enumerate() {
            let mut z = self.affine(layout, &current);
            inputs.push(std::mem::take(&mut current));
            if l < n_hidden {
                for ((zi, s), k) in z
                    .iter_mut()
                    .zip(&self.norm_shift[l])
                    .zip(&self.norm_scale[l])
                {
                    *zi = (*zi - s) / k;
                }
                current = z.iter().map(|&v| v.max(0.0)).collect();
                hidden_pre.push(z);
            } else {
                current = z;
            }
        }
        ForwardTrace {
            inputs,
            hidden_pre,
            output: current,
        }
    }

    /// The feature map φ(x).
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.forward_trace(x).output)
    }

    /// Anomaly score `‖φ(x) − c‖²`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let phi = self.embed(x)?;
        Ok(sq_dist(&phi, &self.center))
    }

    pub fn loss_pair(&self, x: &[f64]) -> Result<LossPair> {
        let l0 = self.score(x)?;
        Ok(LossPair {
            l0,
            l1: 1.0 / (l0 + self.epsilon),
        })
    }

    pub fn embed_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.embed(r)).collect()
    }

    pub fn score_all(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.score(r)).collect()
    }

    /// `Σ w_i (y_i L1(x_i) + (1 − y_i) L0(x_i))` and its exact gradient with
    /// respect to the trainable parameters. The center is not a parameter.
    pub fn weighted_loss_grad(
        &self,
        batch: &[&[f64]],
        labels: &[f64],
        weights: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        if labels.len() != batch.len() || weights.len() != batch.len() {
            return Err(Error::Argument(format!(
                "batch has {} rows but {} labels and {} weights",
                batch.len(),
                labels.len(),
                weights.len()
            )));
        }
        let layouts = self.layouts();
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for ((x, &y), &w) in batch.iter().zip(labels).zip(weights) {
            self.check_dim(x)?;
            if w == 0.0 {
                continue;
            }
            let trace = self.forward_trace(x);
            let l0 = sq_dist(&trace.output, &self.center);
            let shifted = l0 + self.epsilon;
            loss += w * (y / shifted + (1.0 - y) * l0);
            // d(term)/dL0 for term = y/(L0+ε) + (1−y)L0
            let dl0 = w * ((1.0 - y) - y / (shifted * shifted));
            let mut upstream: Vec<f64> = trace
                .output
                .iter()
                .zip(&self.center)
                .map(|(p, c)| 2.0 * dl0 * (p - c))
                .collect();
            self.backprop(&layouts, &trace, &mut upstream, &mut grad);
        }
        Ok((loss, grad))
    }

    fn backprop(
        &self,
        layouts: &[LayerLayout],
        trace: &ForwardTrace,
        upstream: &mut Vec<f64>,
        grad: &mut [f64],
    ) {
        let n_hidden = layouts.len() - 1;
        for l in (0..layouts.len()).rev() {
            let layout = &layouts[l];
            if l < n_hidden {
                // through ReLU and the frozen standardisation
                for ((g, &z), &k) in upstream
                    .iter_mut()
                    .zip(&trace.hidden_pre[l])
                    .zip(&self.norm_scale[l])
                {
                    *g = if z > 0.0 { *g / k } else { 0.0 };
                }
            }
            let input = &trace.inputs[l];
            for (o, &g) in upstream.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let base = layout.w + o * layout.fan_in;
                for (gw, &a) in grad[base..base + layout.fan_in].iter_mut().zip(input) {
                    *gw += g * a;
                }
                if let Some(b) = layout.b {
                    grad[b + o] += g;
                }
            }
            if l > 0 {
                let w = &self.params[layout.w..layout.w + layout.fan_in * layout.fan_out];
                let mut down = vec![0.0; layout.fan_in];
                for (o, &g) in upstream.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    for (d, &wv) in down
                        .iter_mut()
                        .zip(&w[o * layout.fan_in..(o + 1) * layout.fan_in])
                    {
                        *d += g * wv;
                    }
                }
                *upstream = down;
            }
        }
    }

    /// One Adam update (β1 = 0.9, β2 = 0.999, no weight decay).
    pub fn adam_step(&mut self, grad: &[f64], learning_rate: f64) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::Argument(format!(
                "gradient has {} entries, expected {}",
                grad.len(),
                self.params.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient entry at {i}"
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for (((p, m), v), &g) in self
            .params
            .iter_mut()
            .zip(&mut self.adam_m)
            .zip(&mut self.adam_v)
            .zip(grad)
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            state: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(s)?;
        if snap.format != SNAPSHOT_FORMAT || snap.version != SNAPSHOT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported snapshot {} v{}",
                snap.format, snap.version
            )));
        }
        let state = snap.state;
        state.architecture.validate()?;
        if state.params.len() != state.architecture.param_count()
            || state.adam_m.len() != state.params.len()
            || state.adam_v.len() != state.params.len()
            || state.center.len() != state.architecture.embed_dim
        {
            return Err(Error::Validation(
                "snapshot shapes do not match its architecture".into(),
            ));
        }
        Ok(state)
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    state: ScorerState,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Initialises weights from `seed`, measures the hidden-layer
/// standardisation on `warmup_batch`, then fixes the center at the mean
/// embedding of the batch with each coordinate pushed to at least ±0.1.
pub fn init_scorer(
    architecture: Architecture,
    seed: u64,
    warmup_batch: &[Vec<f64>],
) -> Result<ScorerState> {
    architecture.validate()?;
    if warmup_batch.is_empty() {
        return Err(Error::Argument("warm-up batch is empty".into()));
    }
    let n_params = architecture.param_count();
    let mut state = ScorerState {
        params: vec![0.0; n_params],
        norm_shift: architecture
            .hidden_dims
            .iter()
            .map(|&h| vec![0.0; h])
            .collect(),
        norm_scale: architecture
            .hidden_dims
            .iter()
            .map(|&h| vec![1.0; h])
            .collect(),
        center: vec![0.0; architecture.embed_dim],
        epsilon: DEFAULT_EPSILON,
        adam_m: vec![0.0; n_params],
        adam_v: vec![0.0; n_params],
        step_count: 0,
        architecture,
    };
    for row in warmup_batch {
        state.check_dim(row)?;
    }

    let mut rng = seeded(seed, Stream::Init);
    for layout in state.layouts() {
        // He initialisation for ReLU layers
        let normal = Normal::new(0.0, (2.0 / layout.fan_in as f64).sqrt()).expect("positive std");
        for p in &mut state.params[layout.w..layout.w + layout.fan_in * layout.fan_out] {
            *p = normal.sample(&mut rng);
        }
    }

    // Measure standardisation layer by layer, using the already-fixed
    // statistics of earlier layers.
    let layouts = state.layouts();
    let mut acts: Vec<Vec<f64>> = warmup_batch.to_vec();
    let n = acts.len() as f64;
    for (l, layout) in layouts.iter().enumerate().take(layouts.len() - 1) {
        let pre: Vec<Vec<f64>> = acts.iter().map(|a| state.affine(layout, a)).collect();
        for o in 0..layout.fan_out {
            let mean = pre.iter().map(|z| z[o]).sum::<f64>() / n;
            let var = pre.iter().map(|z| (z[o] - mean).powi(2)).sum::<f64>() / n;
            state.norm_shift[l][o] = mean;
            state.norm_scale[l][o] = if var > 1e-12 { var.sqrt() } else { 1.0 };
        }
        acts = pre
            .into_iter()
            .map(|z| {
                z.iter()
                    .zip(&state.norm_shift[l])
                    .zip(&state.norm_scale[l])
                    .map(|((v, s), k)| ((v - s) / k).max(0.0))
                    .collect()
            })
            .collect();
    }

    let mut center = vec![0.0; state.embed_dim()];
    for row in warmup_batch {
        for (c, p) in center.iter_mut().zip(state.forward_trace(row).output) {
            *c += p;
        }
    }
    for c in &mut center {
        *c /= n;
        if c.abs() < CENTER_FLOOR {
            *c = if *c < 0.0 {
                -CENTER_FLOOR
            } else {
                CENTER_FLOOR
            };
        }
    }
    state.center = center;
    Ok(state)
}
