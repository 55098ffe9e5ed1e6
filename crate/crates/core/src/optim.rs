//! Clipped token-level surrogate objectives and the AdamW update.
//!
//! Both objectives are maximized. The GRPO objective averages each
//! trajectory's token losses over its own length and then over trajectories.
//! The DTPO objective pools tool tokens and answer tokens across the batch and
//! normalizes each pool by its own token count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advantage::AdvantageSet;
use crate::env::GridSpec;
use crate::error::{LabError, Result};
use crate::policy::{Grammar, PolicyParams};
use crate::rewards::RewardConfig;
use crate::rollout::GroupBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Grpo,
    Dtpo,
}

impl std::str::FromStr for Algorithm {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grpo" => Ok(Algorithm::Grpo),
            "dtpo" => Ok(Algorithm::Dtpo),
            other => Err(LabError::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Grpo => "grpo",
            Algorithm::Dtpo => "dtpo",
        })
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(rename = "G")]
    pub group_size: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub theta: f64,
    pub clip_low: f64,
    pub clip_high: f64,
    pub beta_kl: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs_per_batch: usize,
    pub tasks_per_batch: usize,
    /// Seed of a single run. The harness sets it to each entry of `seeds`.
    pub seed: u64,
    pub algorithm: Algorithm,
    pub fine_fraction: f64,
    pub temperature: f64,
    pub hidden: usize,
    /// Hidden-layer init range.
    pub init_scale: f64,
    /// Output-layer init range.
    pub output_init_scale: f64,
    pub advantage_eps: f64,
    pub balance_penalty: f64,
    pub format_value: f64,
    pub mask_bbox_validity: bool,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "F")]
    pub fine: usize,
    #[serde(rename = "C")]
    pub coarse: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let grid = GridSpec::default();
        Self {
            group_size: 16,
            lambda: 0.3,
            alpha: 2.0,
            theta: 0.2,
            clip_low: 0.20,
            clip_high: 0.24,
            beta_kl: 0.0,
            lr: 1e-2,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs_per_batch: 1,
            tasks_per_batch: 32,
            seed: 0,
            algorithm: Algorithm::Dtpo,
            fine_fraction: 0.5,
            temperature: 1.0,
            hidden: 64,
            init_scale: 1.5,
            output_init_scale: 0.01,
            advantage_eps: crate::advantage::DEFAULT_EPS,
            balance_penalty: 0.1,
            format_value: 0.5,
            mask_bbox_validity: true,
            height: grid.height,
            width: grid.width,
            fine: grid.fine,
            coarse: grid.coarse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Config(msg));
        // Written so that NaN fails both.
        let positive = |v: f64| v > 0.0;
        let non_negative = |v: f64| v >= 0.0;
        if self.group_size < 2 {
            return bad(format!("G must be at least 2, got {}", self.group_size));
        }
        for (name, v) in [("clip_low", self.clip_low), ("clip_high", self.clip_high)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta must lie in (0, 1), got {}", self.theta));
        }
        if ![self.lambda, self.alpha, self.beta_kl].into_iter().all(non_negative) {
            return bad("lambda, alpha and beta_kl must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.fine_fraction) {
            return bad(format!("fine_fraction must lie in [0, 1], got {}", self.fine_fraction));
        }
        if ![self.temperature, self.lr, self.init_scale, self.output_init_scale].into_iter().all(positive) {
            return bad("temperature, lr and init_scale must be positive".into());
        }
        if !positive(self.advantage_eps) {
            return bad("advantage_eps must be positive".into());
        }
        if self.epochs_per_batch == 0 || self.tasks_per_batch == 0 || self.hidden == 0 {
            return bad("epochs_per_batch, tasks_per_batch and hidden must be at least 1".into());
        }
        self.grid().validate()
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            height: self.height,
            width: self.width,
            fine: self.fine,
            coarse: self.coarse,
        }
    }

    pub fn grammar(&self) -> Grammar {
        Grammar::new(self.grid(), self.mask_bbox_validity)
    }

    pub fn rewards(&self) -> RewardConfig {
        RewardConfig {
            theta: self.theta,
            alpha: self.alpha,
            balance_penalty: self.balance_penalty,
            format_value: self.format_value,
        }
    }
}

/// Objective value and its turn decomposition. Values are the objective to be
/// maximized, not a loss to be minimized.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub total_loss: f64,
    pub tool_term: f64,
    pub answer_term: f64,
    pub tool_token_count: usize,
    pub answer_token_count: usize,
    pub grad_norm: f64,
    /// Mean per-token KL estimate; 0 when the penalty is disabled.
    pub kl: f64,
}

/// `min(r·A, clip(r, 1 − clip_low, 1 + clip_high)·A)`.
pub fn token_loss(ratio: f64, advantage: f64, clip_low: f64, clip_high: f64) -> f64 {
    debug_assert!(ratio > 0.0, "ratio must be positive");
    let clipped = ratio.clamp(1.0 - clip_low, 1.0 + clip_high);
    (ratio * advantage).min(clipped * advantage)
}

/// `d token_loss / d log π`: `r·A` while the unclipped branch is selected, else 0.
fn token_loss_slope(ratio: f64, advantage: f64, clip_low: f64, clip_high: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_low, 1.0 + clip_high);
    if ratio * advantage <= clipped * advantage {
        ratio * advantage
    } else {
        0.0
    }
}

/// Per-token KL estimator `ρ − ln ρ − 1` with `ρ = π_ref / π_θ`.
pub fn kl_estimate(logprob: f64, ref_logprob: f64) -> f64 {
    let log_rho = ref_logprob - logprob;
    log_rho.exp() - log_rho - 1.0
}

/// How token losses are weighted into the objective.
#[derive(Debug, Clone, Copy)]
enum Weighting {
    /// `1 / (M · N_i)` with `M` trajectories in the batch.
    PerSequence { trajectories: usize },
    /// `1 / Σ T_i` on tool tokens, `1 / Σ (N_i − T_i)` on answer tokens.
    PerTurn { tool_tokens: usize, answer_tokens: usize },
}

impl Weighting {
    fn weight(&self, seq_len: usize, is_tool_token: bool) -> f64 {
        match *self {
            Weighting::PerSequence { trajectories } => 1.0 / (trajectories as f64 * seq_len as f64),
            Weighting::PerTurn {
                tool_tokens,
                answer_tokens,
            } => {
                let denom = if is_tool_token { tool_tokens } else { answer_tokens };
                // A token exists in this pool, so the count is non-zero.
                1.0 / denom as f64
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Partial {
    tool_term: f64,
    answer_term: f64,
    /// GRPO double mean evaluated directly as `Σ_i (1/N_i) Σ_t L / M`.
    direct_mean: f64,
    kl_sum: f64,
}

fn token_counts(groups: &[GroupBatch]) -> (usize, usize, usize) {
    let mut trajectories = 0;
    let mut tool = 0;
    let mut answer = 0;
    for g in groups {
        for t in &g.trajectories {
            trajectories += 1;
            tool += t.turn_boundary;
            answer += t.len() - t.turn_boundary;
        }
    }
    (trajectories, tool, answer)
}

fn evaluate(
    groups: &[GroupBatch],
    advantages: &[AdvantageSet],
    params: &PolicyParams,
    cfg: &TrainConfig,
    reference: Option<&PolicyParams>,
    weighting: Weighting,
) -> Result<(LossReport, Vec<f64>)> {
    if groups.len() != advantages.len() {
        return Err(LabError::Precondition(format!(
            "{} groups but {} advantage sets",
            groups.len(),
            advantages.len()
        )));
    }
    let use_kl = cfg.beta_kl > 0.0;
    if use_kl && reference.is_none() {
        return Err(LabError::Precondition("KL penalty enabled without reference parameters".into()));
    }
    let grammar = cfg.grammar();
    let (trajectories, tool_tokens, answer_tokens) = token_counts(groups);
    let total_tokens = (tool_tokens + answer_tokens) as f64;

    let per_group: Vec<Result<(Partial, Vec<f64>)>> = groups
        .par_iter()
        .zip(advantages)
        .map(|(group, adv)| {
            let mut grad = vec![0.0; params.len()];
            let mut part = Partial::default();
            if adv.per_token.len() != group.len() {
                return Err(LabError::Precondition("advantage set does not match group size".into()));
            }
            for (traj, token_adv) in group.trajectories.iter().zip(&adv.per_token) {
                if token_adv.len() != traj.len() || traj.old_logprobs.len() != traj.len() {
                    return Err(LabError::Precondition("per-token lengths disagree".into()));
                }
                let contexts = traj.contexts(&grammar, &group.task)?;
                let n = traj.len();
                let mut seq_sum = 0.0;
                for (pos, ctx) in contexts.iter().enumerate() {
                    let token = traj.tokens[pos];
                    let is_tool = pos < traj.turn_boundary;
                    let w = weighting.weight(n, is_tool);
                    let a = token_adv[pos];
                    let old = traj.old_logprobs[pos];
                    let ref_lp = match reference {
                        Some(r) if use_kl => Some(r.token_logprob(ctx, token)?),
                        _ => None,
                    };
                    let mut loss = 0.0;
                    let mut kl = 0.0;
                    params.accumulate_weighted_gradient(ctx, token, &mut grad, |lp| {
                        let ratio = (lp - old).exp();
                        loss = token_loss(ratio, a, cfg.clip_low, cfg.clip_high);
                        let mut slope = w * token_loss_slope(ratio, a, cfg.clip_low, cfg.clip_high);
                        if let Some(ref_lp) = ref_lp {
                            kl = kl_estimate(lp, ref_lp);
                            // d(ρ − ln ρ − 1)/d log π = 1 − ρ.
                            let rho = (ref_lp - lp).exp();
                            slope -= cfg.beta_kl * (1.0 - rho) / total_tokens;
                        }
                        slope
                    })?;
                    if is_tool {
                        part.tool_term += w * loss;
                    } else {
                        part.answer_term += w * loss;
                    }
                    seq_sum += loss;
                    part.kl_sum += kl;
                }
                part.direct_mean += seq_sum / n as f64 / trajectories as f64;
            }
            Ok((part, grad))
        })
        .collect();

    let mut total = Partial::default();
    let mut gradient = vec![0.0; params.len()];
    for item in per_group {
        let (part, grad) = item?;
        total.tool_term += part.tool_term;
        total.answer_term += part.answer_term;
        total.direct_mean += part.direct_mean;
        total.kl_sum += part.kl_sum;
        for (g, x) in gradient.iter_mut().zip(&grad) {
            *g += x;
        }
    }
    let kl = if use_kl && total_tokens > 0.0 {
        total.kl_sum / total_tokens
    } else {
        0.0
    };
    let surrogate = match weighting {
        Weighting::PerSequence { .. } => total.direct_mean,
        Weighting::PerTurn { .. } => total.tool_term + total.answer_term,
    };
    let report = LossReport {
        total_loss: surrogate - cfg.beta_kl * kl,
        tool_term: total.tool_term,
        answer_term: total.answer_term,
        tool_token_count: tool_tokens,
        answer_token_count: answer_tokens,
        grad_norm: l2_norm(&gradient),
        kl,
    };
    Ok((report, gradient))
}

/// GRPO objective and its gradient with respect to the policy parameters.
///
/// `total_loss` is the per-sequence double mean; `tool_term + answer_term`
/// splits the same sum by turn with identical `1/(M·N_i)` weights.
pub fn grpo_objective(
    groups: &[GroupBatch],
    advantages: &[AdvantageSet],
    params: &PolicyParams,
    cfg: &TrainConfig,
    reference: Option<&PolicyParams>,
) -> Result<(LossReport, Vec<f64>)> {
    let (trajectories, _, _) = token_counts(groups);
    evaluate(
        groups,
        advantages,
        params,
        cfg,
        reference,
        Weighting::PerSequence { trajectories },
    )
}

/// DTPO objective: tool and answer token pools normalized separately. An empty
/// pool contributes 0.
pub fn dtpo_objective(
    groups: &[GroupBatch],
    advantages: &[AdvantageSet],
    params: &PolicyParams,
    cfg: &TrainConfig,
    reference: Option<&PolicyParams>,
) -> Result<(LossReport, Vec<f64>)> {
    let (_, tool_tokens, answer_tokens) = token_counts(groups);
    evaluate(
        groups,
        advantages,
        params,
        cfg,
        reference,
        Weighting::PerTurn {
            tool_tokens,
            answer_tokens,
        },
    )
}

pub fn objective(
    algorithm: Algorithm,
    groups: &[GroupBatch],
    advantages: &[AdvantageSet],
    params: &PolicyParams,
    cfg: &TrainConfig,
    reference: Option<&PolicyParams>,
) -> Result<(LossReport, Vec<f64>)> {
    match algorithm {
        Algorithm::Grpo => grpo_objective(groups, advantages, params, cfg, reference),
        Algorithm::Dtpo => dtpo_objective(groups, advantages, params, cfg, reference),
    }
}

/// Mean per-token KL estimate between `params` and `reference` over all groups.
pub fn kl_penalty(params: &PolicyParams, reference: &PolicyParams, groups: &[GroupBatch], grammar: &Grammar) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for group in groups {
        for traj in &group.trajectories {
            for (ctx, &token) in traj.contexts(grammar, &group.task)?.iter().zip(&traj.tokens) {
                sum += kl_estimate(params.token_logprob(ctx, token)?, reference.token_logprob(ctx, token)?);
                count += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One AdamW step ascending the objective whose gradient is `gradient`.
///
/// Runs as descent on the negated objective with decoupled weight decay.
pub fn update_step(params: &mut PolicyParams, gradient: &[f64], cfg: &TrainConfig) -> Result<()> {
    if gradient.len() != params.len() {
        return Err(LabError::Precondition(format!(
            "gradient has {} entries, parameters {}",
            gradient.len(),
            params.len()
        )));
    }
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let state = &mut params.adam;
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let moments = state.m.iter_mut().zip(state.v.iter_mut());
    for ((w, (m, v)), &grad) in params.theta.iter_mut().zip(moments).zip(gradient) {
        let g = -grad;
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *w -= cfg.lr * (m_hat / (v_hat.sqrt() + cfg.adam_eps) + cfg.weight_decay * *w);
    }
    Ok(())
}
