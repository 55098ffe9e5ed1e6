//! Two-layer perceptron token policy with analytic gradients.
//!
//! `logits = W2 · tanh(W1 · x + b1) + b2`, followed by a softmax restricted to
//! the grammar-legal tokens of the current slot.

pub mod context;
pub mod io;
pub mod vocab;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};
pub use context::{CropState, DecodingContext, Grammar, Slot, TaskFeatures};
pub use vocab::{Token, Vocabulary};

/// Network shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyDims {
    pub input: usize,
    pub hidden: usize,
    pub vocab: usize,
}

impl PolicyDims {
    pub fn for_grammar(grammar: &Grammar, hidden: usize) -> Self {
        Self {
            input: grammar.feature_dim(),
            hidden,
            vocab: grammar.vocab.len(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.vocab * self.hidden + self.vocab
    }

    fn w1(&self) -> usize {
        0
    }

    fn b1(&self) -> usize {
        self.hidden * self.input
    }

    fn w2(&self) -> usize {
        self.b1() + self.hidden
    }

    fn b2(&self) -> usize {
        self.w2() + self.vocab * self.hidden
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// Flat parameter vector and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub dims: PolicyDims,
    pub theta: Vec<f64>,
    pub adam: AdamState,
}

/// Activations kept for the backward pass.
struct Forward {
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl PolicyParams {
    /// All-zero parameters: a uniform distribution over legal tokens everywhere.
    pub fn zeros(dims: PolicyDims) -> Self {
        let n = dims.param_count();
        Self {
            dims,
            theta: vec![0.0; n],
            adam: AdamState::zeros(n),
        }
    }

    /// Entries drawn from `U(-scale, scale)`.
    pub fn init(dims: PolicyDims, seed: u64, scale: f64) -> Result<Self> {
        Self::init_layered(dims, seed, scale, scale)
    }

    /// Hidden-layer weights from `U(-hidden_scale, hidden_scale)`, output
    /// weights from `U(-output_scale, output_scale)`, biases zero.
    pub fn init_layered(dims: PolicyDims, seed: u64, hidden_scale: f64, output_scale: f64) -> Result<Self> {
        for scale in [hidden_scale, output_scale] {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(LabError::Precondition(format!(
                    "init scale must be positive, got {scale}"
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(dims);
        let (w1, b1, w2, b2) = (dims.w1(), dims.b1(), dims.w2(), dims.b2());
        for w in &mut params.theta[w1..b1] {
            *w = rng.gen_range(-hidden_scale..hidden_scale);
        }
        for w in &mut params.theta[w2..b2] {
            *w = rng.gen_range(-output_scale..output_scale);
        }
        Ok(params)
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    fn forward(&self, features: &[f64]) -> Forward {
        let d = &self.dims;
        debug_assert_eq!(features.len(), d.input);
        let w1 = &self.theta[d.w1()..d.b1()];
        let b1 = &self.theta[d.b1()..d.w2()];
        let w2 = &self.theta[d.w2()..d.b2()];
        let b2 = &self.theta[d.b2()..];
        let nonzero: Vec<(usize, f64)> = features
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, x)| x != 0.0)
            .collect();
        let hidden: Vec<f64> = (0..d.hidden)
            .map(|h| {
                let row = &w1[h * d.input..(h + 1) * d.input];
                let pre = nonzero.iter().fold(b1[h], |acc, &(i, x)| acc + row[i] * x);
                pre.tanh()
            })
            .collect();
        let logits = (0..d.vocab)
            .map(|v| {
                let row = &w2[v * d.hidden..(v + 1) * d.hidden];
                row.iter().zip(&hidden).fold(b2[v], |acc, (w, a)| acc + w * a)
            })
            .collect();
        Forward { hidden, logits }
    }

    /// Unmasked logits.
    pub fn logits(&self, ctx: &DecodingContext) -> Vec<f64> {
        self.forward(&ctx.features).logits
    }

    /// Log-probabilities of the legal tokens, in `ctx.legal` order.
    pub fn legal_logprobs(&self, ctx: &DecodingContext) -> Vec<f64> {
        if ctx.is_forced() {
            return vec![0.0];
        }
        let logits = self.logits(ctx);
        log_softmax(ctx.legal.iter().map(|&t| logits[t]))
    }

    pub fn token_logprob(&self, ctx: &DecodingContext, token: usize) -> Result<f64> {
        let pos = legal_position(ctx, token)?;
        Ok(self.legal_logprobs(ctx)[pos])
    }

    /// Samples from `softmax(logits / temperature)` over the legal tokens.
    pub fn sample_token<R: Rng + ?Sized>(
        &self,
        ctx: &DecodingContext,
        temperature: f64,
        rng: &mut R,
    ) -> usize {
        assert!(temperature > 0.0, "temperature must be positive");
        if ctx.is_forced() {
            return ctx.legal[0];
        }
        let logits = self.logits(ctx);
        let scaled: Vec<f64> = ctx.legal.iter().map(|&t| logits[t] / temperature).collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return ctx.legal[i];
            }
            u -= w;
        }
        // Rounding left `u` past the last bucket.
        *ctx
            .legal
            .iter()
            .zip(&weights)
            .rev()
            .find(|(_, &w)| w > 0.0)
            .map(|(t, _)| t)
            .expect("at least one positive weight")
    }

    /// Highest-logit legal token, ties to the smallest id.
    pub fn greedy_token(&self, ctx: &DecodingContext) -> usize {
        if ctx.is_forced() {
            return ctx.legal[0];
        }
        let logits = self.logits(ctx);
        let mut best = ctx.legal[0];
        for &t in &ctx.legal[1..] {
            if logits[t] > logits[best] {
                best = t;
            }
        }
        best
    }

    /// `∇θ log π(token | ctx)`.
    pub fn logprob_gradient(&self, ctx: &DecodingContext, token: usize) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.len()];
        self.accumulate_logprob_gradient(ctx, token, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// Adds `weight · ∇θ log π(token | ctx)` into `out` and returns the log-probability.
    pub fn accumulate_logprob_gradient(
        &self,
        ctx: &DecodingContext,
        token: usize,
        weight: f64,
        out: &mut [f64],
    ) -> Result<f64> {
        self.accumulate_weighted_gradient(ctx, token, out, |_| weight)
            .map(|(lp, _)| lp)
    }

    /// Like [`Self::accumulate_logprob_gradient`], with the weight computed from
    /// the log-probability. Returns `(log-probability, weight)`.
    pub fn accumulate_weighted_gradient(
        &self,
        ctx: &DecodingContext,
        token: usize,
        out: &mut [f64],
        weight_of: impl FnOnce(f64) -> f64,
    ) -> Result<(f64, f64)> {
        let pos = legal_position(ctx, token)?;
        assert_eq!(out.len(), self.len(), "gradient buffer size");
        if ctx.is_forced() {
            return Ok((0.0, weight_of(0.0)));
        }
        let d = &self.dims;
        let fwd = self.forward(&ctx.features);
        let logprobs = log_softmax(ctx.legal.iter().map(|&t| fwd.logits[t]));
        let weight = weight_of(logprobs[pos]);
        if weight == 0.0 {
            return Ok((logprobs[pos], weight));
        }
        // d log p_k / d z_j = 1[j = k] - p_j over legal j.
        let mut dz = vec![0.0; d.vocab];
        for (i, &t) in ctx.legal.iter().enumerate() {
            dz[t] = -logprobs[i].exp() * weight;
        }
        dz[token] += weight;

        let w2 = d.w2();
        let mut dhidden = vec![0.0; d.hidden];
        for &t in &ctx.legal {
            let g = dz[t];
            if g == 0.0 {
                continue;
            }
            let row = w2 + t * d.hidden;
            for h in 0..d.hidden {
                out[row + h] += g * fwd.hidden[h];
                dhidden[h] += g * self.theta[row + h];
            }
            out[d.b2() + t] += g;
        }
        for h in 0..d.hidden {
            let a = fwd.hidden[h];
            let dpre = dhidden[h] * (1.0 - a * a);
            if dpre == 0.0 {
                continue;
            }
            out[d.b1() + h] += dpre;
            let row = d.w1() + h * d.input;
            for (i, &x) in ctx.features.iter().enumerate() {
                if x != 0.0 {
                    out[row + i] += dpre * x;
                }
            }
        }
        Ok((logprobs[pos], weight))
    }
}

fn legal_position(ctx: &DecodingContext, token: usize) -> Result<usize> {
    ctx.legal
        .binary_search(&token)
        .map_err(|_| LabError::IllegalToken {
            token,
            slot: ctx.slot.name(),
        })
}

fn log_softmax(z: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let max = z.clone().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = z.clone().map(|x| (x - max).exp()).sum::<f64>().ln();
    z.map(|x| (x - max) - log_norm).collect()
}
