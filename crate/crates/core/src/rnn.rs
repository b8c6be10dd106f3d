//! Single-layer Elman recurrent language model trained with BPTT and Adam.
//!
//! State update and output head:
//!
//! ```text
//! s_0     = h0
//! s_{t+1} = tanh(W s_t + U embed[y_t] + b)
//! q(. | y_<t) = softmax(E s_t)        over Σ ∪ {EOS}
//! ```
//!
//! A string of length `n` is scored in `n + 1` steps, the last predicting EOS.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::automaton::StringRecord;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const INIT_STD: f64 = 0.1;

/// Parameter tensors stored row-major. Also used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// `|Σ| x D`
    pub embed: Vec<f64>,
    /// `D x D` recurrence
    pub w: Vec<f64>,
    /// `D x D` input projection
    pub u: Vec<f64>,
    pub b: Vec<f64>,
    pub h0: Vec<f64>,
    /// `(|Σ|+1) x D` output matrix
    pub e: Vec<f64>,
}

pub const TENSOR_NAMES: [&str; 6] = ["embed", "w", "u", "b", "h0", "e"];

impl Params {
    fn zeros(alphabet_size: usize, hidden: usize) -> Self {
        Params {
            embed: vec![0.0; alphabet_size * hidden],
            w: vec![0.0; hidden * hidden],
            u: vec![0.0; hidden * hidden],
            b: vec![0.0; hidden],
            h0: vec![0.0; hidden],
            e: vec![0.0; (alphabet_size + 1) * hidden],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [&self.embed, &self.w, &self.u, &self.b, &self.h0, &self.e]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.embed,
            &mut self.w,
            &mut self.u,
            &mut self.b,
            &mut self.h0,
            &mut self.e,
        ]
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= c);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnLm {
    alphabet_size: usize,
    hidden: usize,
    pub params: Params,
}

#[inline]
fn matvec(m: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..rows {
        let row = &m[i * cols..(i + 1) * cols];
        out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

#[inline]
fn matvec_add(m: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..rows {
        let row = &m[i * cols..(i + 1) * cols];
        out[i] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += mᵀ x` for `m` of shape `rows x cols`.
#[inline]
fn matvec_t_add(m: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..rows {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        let row = &m[i * cols..(i + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * xi;
        }
    }
}

/// `g += a bᵀ`.
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

fn log_softmax_into(logits: &[f64], out: &mut [f64]) {
    let lse = linalg::log_sum_exp(logits);
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = z - lse;
    }
}

/// Hidden states `s_0 .. s_n` (flattened) for one string.
struct Trace {
    states: Vec<f64>,
}

impl RnnLm {
    pub fn zeros(alphabet_size: usize, hidden: usize) -> Self {
        RnnLm {
            alphabet_size,
            hidden,
            params: Params::zeros(alphabet_size, hidden),
        }
    }

    /// Weights i.i.d. `Normal(0, 0.1²)`, `h0 = 0`.
    pub fn init<R: Rng + ?Sized>(alphabet_size: usize, hidden: usize, rng: &mut R) -> Self {
        let mut lm = Self::zeros(alphabet_size, hidden);
        let normal = Normal::new(0.0, INIT_STD).expect("positive std");
        let p = &mut lm.params;
        for t in [&mut p.embed, &mut p.w, &mut p.u, &mut p.b, &mut p.e] {
            t.iter_mut().for_each(|x| *x = normal.sample(rng));
        }
        lm
    }

    pub fn from_params(alphabet_size: usize, hidden: usize, params: Params) -> Result<Self> {
        let z = Params::zeros(alphabet_size, hidden);
        for ((name, a), b) in TENSOR_NAMES.iter().zip(z.tensors()).zip(params.tensors()) {
            if a.len() != b.len() {
                return Err(Error::Shape(format!(
                    "tensor {name} has {} entries, expected {}",
                    b.len(),
                    a.len()
                )));
            }
        }
        Ok(RnnLm {
            alphabet_size,
            hidden,
            params,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    fn vocab_out(&self) -> usize {
        self.alphabet_size + 1
    }

    fn check_symbols(&self, symbols: &[u32]) -> Result<()> {
        if let Some(&y) = symbols.iter().find(|&&y| y as usize >= self.alphabet_size) {
            return Err(Error::SymbolOutOfRange {
                symbol: y as usize,
                alphabet_size: self.alphabet_size,
            });
        }
        Ok(())
    }

    fn run_states(&self, symbols: &[u32]) -> Result<Trace> {
        let d = self.hidden;
        let p = &self.params;
        let mut states = Vec::with_capacity((symbols.len() + 1) * d);
        states.extend_from_slice(&p.h0);
        let mut pre = vec![0.0; d];
        for (t, &y) in symbols.iter().enumerate() {
            let prev = &states[t * d..(t + 1) * d];
            pre.copy_from_slice(&p.b);
            matvec_add(&p.w, d, d, prev, &mut pre);
            let x = &p.embed[y as usize * d..(y as usize + 1) * d];
            matvec_add(&p.u, d, d, x, &mut pre);
            for v in pre.iter_mut() {
                *v = v.tanh();
            }
            if pre.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation { step: t + 1 });
            }
            states.extend_from_slice(&pre);
        }
        Ok(Trace { states })
    }

    /// Log-probability vectors over Σ ∪ {EOS}, one per step (`|y| + 1` steps).
    pub fn forward(&self, symbols: &[u32]) -> Result<Vec<Vec<f64>>> {
        self.check_symbols(symbols)?;
        let d = self.hidden;
        let v = self.vocab_out();
        let trace = self.run_states(symbols)?;
        let mut logits = vec![0.0; v];
        let mut out = Vec::with_capacity(symbols.len() + 1);
        for t in 0..=symbols.len() {
            matvec(&self.params.e, v, d, &trace.states[t * d..(t + 1) * d], &mut logits);
            let mut lp = vec![0.0; v];
            log_softmax_into(&logits, &mut lp);
            if lp.iter().any(|x| x.is_nan()) {
                return Err(Error::NonFiniteActivation { step: t });
            }
            out.push(lp);
        }
        Ok(out)
    }

    /// Target log-probabilities per step: `|y|` symbol terms, then EOS.
    pub fn token_logprobs(&self, symbols: &[u32]) -> Result<Vec<f64>> {
        let steps = self.forward(symbols)?;
        let eos = self.alphabet_size;
        Ok(steps
            .iter()
            .enumerate()
            .map(|(t, lp)| lp[symbols.get(t).map_or(eos, |&y| y as usize)])
            .collect())
    }

    /// Mean per-token negative log-likelihood in nats (EOS steps included).
    pub fn nll(&self, batch: &[&[u32]]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let mut total = 0.0;
        let mut steps = 0usize;
        for s in batch {
            total -= self.token_logprobs(s)?.iter().sum::<f64>();
            steps += s.len() + 1;
        }
        Ok(total / steps as f64)
    }

    /// Exact gradient of [`RnnLm::nll`] by backpropagation through time.
    /// Returns the gradient and the batch loss.
    pub fn gradients(&self, batch: &[&[u32]]) -> Result<(Params, f64)> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        for s in batch {
            self.check_symbols(s)?;
        }
        let d = self.hidden;
        let v = self.vocab_out();
        let eos = self.alphabet_size;
        let p = &self.params;
        let total_steps: usize = batch.iter().map(|s| s.len() + 1).sum();
        let inv = 1.0 / total_steps as f64;

        let mut g = p.zeros_like();
        let mut loss = 0.0;
        let mut logits = vec![0.0; v];
        let mut lp = vec![0.0; v];
        let mut dz = vec![0.0; v];
        let mut da = vec![0.0; d];

        for s in batch {
            let n = s.len();
            let trace = self.run_states(s)?;
            // ds[t] accumulates dL/ds_t.
            let mut ds = vec![0.0; (n + 1) * d];
            for t in 0..=n {
                let st = &trace.states[t * d..(t + 1) * d];
                matvec(&p.e, v, d, st, &mut logits);
                log_softmax_into(&logits, &mut lp);
                let target = if t < n { s[t] as usize } else { eos };
                loss -= lp[target];
                for k in 0..v {
                    dz[k] = lp[k].exp() * inv;
                }
                dz[target] -= inv;
                outer_add(&mut g.e, &dz, st);
                matvec_t_add(&p.e, v, d, &dz, &mut ds[t * d..(t + 1) * d]);
            }
            for t in (1..=n).rev() {
                let st = &trace.states[t * d..(t + 1) * d];
                for k in 0..d {
                    da[k] = ds[t * d + k] * (1.0 - st[k] * st[k]);
                }
                let prev = &trace.states[(t - 1) * d..t * d];
                let y = s[t - 1] as usize;
                outer_add(&mut g.w, &da, prev);
                outer_add(&mut g.u, &da, &p.embed[y * d..(y + 1) * d]);
                for k in 0..d {
                    g.b[k] += da[k];
                }
                matvec_t_add(&p.u, d, d, &da, &mut g.embed[y * d..(y + 1) * d]);
                matvec_t_add(&p.w, d, d, &da, &mut ds[(t - 1) * d..t * d]);
            }
            for k in 0..d {
                g.h0[k] += ds[k];
            }
        }
        Ok((g, loss * inv))
    }

    pub fn score(&self, strings: &[StringRecord]) -> Result<Vec<ScoredString>> {
        strings
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut per_token = self.token_logprobs(&s.symbols)?;
                if s.truncated {
                    // No EOS term for a truncated prefix.
                    per_token.pop();
                }
                Ok(ScoredString {
                    string_index: i,
                    total_logprob_nats: per_token.iter().sum(),
                    per_token_logprobs_nats: per_token,
                })
            })
            .collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let shapes = [
            vec![self.alphabet_size, self.hidden],
            vec![self.hidden, self.hidden],
            vec![self.hidden, self.hidden],
            vec![self.hidden],
            vec![self.hidden],
            vec![self.alphabet_size + 1, self.hidden],
        ];
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            kind: "elman-rnn-lm".into(),
            alphabet_size: self.alphabet_size,
            hidden: self.hidden,
            tensors: TENSOR_NAMES
                .iter()
                .zip(shapes)
                .zip(self.params.tensors())
                .map(|((name, shape), data)| NamedTensor {
                    name: name.to_string(),
                    shape,
                    data: data.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.format_version != CHECKPOINT_VERSION {
            return Err(Error::Shape(format!("unsupported checkpoint version {}", c.format_version)));
        }
        let mut params = Params::zeros(c.alphabet_size, c.hidden);
        for t in c.tensors {
            let idx = TENSOR_NAMES
                .iter()
                .position(|n| *n == t.name)
                .ok_or_else(|| Error::Shape(format!("unknown tensor {}", t.name)))?;
            let slot = &mut params.tensors_mut()[idx];
            if slot.len() != t.data.len() || t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Shape(format!("tensor {} has wrong size", t.name)));
            }
            **slot = t.data;
        }
        Self::from_params(c.alphabet_size, c.hidden, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())
            .map_err(|e| Error::json("serializing checkpoint", e))?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes())
            .and_then(|_| f.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        Self::from_checkpoint(c)
    }
}

/// JSON checkpoint: every tensor with its shape, row-major data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: String,
    pub alphabet_size: usize,
    pub hidden: usize,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredString {
    pub string_index: usize,
    pub total_logprob_nats: f64,
    pub per_token_logprobs_nats: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2,
            batch_size: 32,
            lr: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.adam_eps];
        if self.epochs == 0 || self.batch_size == 0 || positive.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::Config("epochs, batch_size, lr and adam_eps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config("grad_clip must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Params,
    pub v: Params,
    pub step: u64,
}

impl AdamState {
    pub fn new(lm: &RnnLm) -> Self {
        AdamState {
            m: lm.params.zeros_like(),
            v: lm.params.zeros_like(),
            step: 0,
        }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(lm: &mut RnnLm, state: &mut AdamState, grads: &Params, config: &TrainConfig) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let params = lm.params.tensors_mut();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(grads.tensors()) {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= config.lr * m_hat / (v_hat.sqrt() + config.adam_eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Mean per-token training NLL (nats) over each epoch, measured before
    /// each batch's update.
    pub epoch_losses: Vec<f64>,
}

/// Trains a fresh model of width `hidden` on `train`. Mini-batches are drawn
/// from a seeded shuffle each epoch.
pub fn train(
    train: &[StringRecord],
    alphabet_size: usize,
    hidden: usize,
    config: &TrainConfig,
) -> Result<(RnnLm, TrainTrace)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if hidden == 0 {
        return Err(Error::Config("hidden size must be positive".into()));
    }
    let mut init_rng = rng::stream(config.seed, "rnn-init", hidden as u64);
    let mut lm = RnnLm::init(alphabet_size, hidden, &mut init_rng);
    let mut adam = AdamState::new(&lm);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut shuffle_rng = rng::stream(config.seed, "rnn-shuffle", epoch as u64);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut step_sum = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&[u32]> = chunk.iter().map(|&i| train[i].symbols.as_slice()).collect();
            let steps: usize = batch.iter().map(|s| s.len() + 1).sum();
            let (mut grads, loss) = lm.gradients(&batch).map_err(|e| match e {
                Error::NonFiniteActivation { .. } => Error::Diverged { epoch, batch: batch_idx },
                other => other,
            })?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Diverged { epoch, batch: batch_idx });
            }
            if let Some(max_norm) = config.grad_clip {
                let norm = grads.global_norm();
                if norm > max_norm {
                    grads.scale(max_norm / norm);
                }
            }
            adam_step(&mut lm, &mut adam, &grads, config);
            loss_sum += loss * steps as f64;
            step_sum += steps;
        }
        epoch_losses.push(loss_sum / step_sum as f64);
    }
    if !lm.params.all_finite() {
        return Err(Error::Diverged { epoch: config.epochs, batch: 0 });
    }
    Ok((lm, TrainTrace { epoch_losses }))
}
