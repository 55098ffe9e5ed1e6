//! Trajectory JSONL records and the audit replay.
//!
//! Each line holds one trajectory together with its task, reward breakdown,
//! advantages and the reward/advantage settings needed to recompute them.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::advantage::{dtpo_advantages, grpo_advantages, AdvantageMode, AdvantageSet};
use crate::env::{TaskInstance, TaskRecord};
use crate::error::{LabError, Result};
use crate::optim::TrainConfig;
use crate::policy::Grammar;
use crate::rewards::{compute_group_rewards, RewardBreakdown, RewardConfig};
use crate::rollout::{parse_structure, GroupBatch, Trajectory};

/// Settings that determine rewards and advantages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringParams {
    pub alpha: f64,
    pub theta: f64,
    pub lambda: f64,
    pub balance_penalty: f64,
    pub format_value: f64,
    pub advantage_eps: f64,
    pub mask_bbox_validity: bool,
}

impl From<&TrainConfig> for ScoringParams {
    fn from(c: &TrainConfig) -> Self {
        Self {
            alpha: c.alpha,
            theta: c.theta,
            lambda: c.lambda,
            balance_penalty: c.balance_penalty,
            format_value: c.format_value,
            advantage_eps: c.advantage_eps,
            mask_bbox_validity: c.mask_bbox_validity,
        }
    }
}

impl ScoringParams {
    fn rewards(&self) -> RewardConfig {
        RewardConfig {
            theta: self.theta,
            alpha: self.alpha,
            balance_penalty: self.balance_penalty,
            format_value: self.format_value,
        }
    }
}

/// Advantages of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryAdvantage {
    pub mode: AdvantageMode,
    pub a_oc: f64,
    pub a_tool: f64,
    pub per_token: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub group: usize,
    #[serde(flatten)]
    pub trajectory: Trajectory,
    pub task: TaskRecord,
    pub reward: RewardBreakdown,
    pub advantage: TrajectoryAdvantage,
    pub scoring: ScoringParams,
}

/// Rewards and advantages for a group under the given settings.
pub fn score_group(
    group: &GroupBatch,
    grammar: &Grammar,
    scoring: &ScoringParams,
    mode: AdvantageMode,
) -> (Vec<RewardBreakdown>, AdvantageSet) {
    let (rewards, _) = compute_group_rewards(group, grammar, &scoring.rewards());
    let advantages = match mode {
        AdvantageMode::Grpo => {
            let totals: Vec<f64> = rewards.iter().map(|r| r.total).collect();
            grpo_advantages(&totals, &group.trajectories, scoring.advantage_eps)
        }
        AdvantageMode::Dtpo => {
            let oc: Vec<f64> = rewards.iter().map(|r| r.oc).collect();
            let tool: Vec<f64> = rewards.iter().map(|r| r.tool).collect();
            dtpo_advantages(&oc, &tool, &group.trajectories, scoring.lambda, scoring.advantage_eps)
        }
    };
    (rewards, advantages)
}

pub fn group_records(
    step: usize,
    group_index: usize,
    group: &GroupBatch,
    rewards: &[RewardBreakdown],
    advantages: &AdvantageSet,
    scoring: ScoringParams,
) -> Vec<TrajectoryRecord> {
    let task = TaskRecord::from(&group.task);
    group
        .trajectories
        .iter()
        .enumerate()
        .map(|(i, traj)| TrajectoryRecord {
            step,
            group: group_index,
            trajectory: traj.clone(),
            task: task.clone(),
            reward: rewards[i],
            advantage: TrajectoryAdvantage {
                mode: advantages.mode,
                a_oc: advantages.a_oc[i],
                a_tool: advantages.a_tool[i],
                per_token: advantages.per_token[i].clone(),
            },
            scoring,
        })
        .collect()
}

pub fn write_records<W: Write>(mut out: W, records: &[TrajectoryRecord]) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| LabError::Format(format!("line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// One field that failed to reproduce.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditMismatch {
    pub step: usize,
    pub group: usize,
    pub member: usize,
    pub field: String,
    pub stored: f64,
    pub recomputed: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditReport {
    pub groups: usize,
    pub trajectories: usize,
    pub mismatches: Vec<AuditMismatch>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Recomputes rewards and advantages for every stored group and compares
/// them bit for bit with the stored values.
pub fn audit_records(records: &[TrajectoryRecord]) -> Result<AuditReport> {
    let mut groups: BTreeMap<(usize, usize), Vec<&TrajectoryRecord>> = BTreeMap::new();
    for rec in records {
        groups.entry((rec.step, rec.group)).or_default().push(rec);
    }
    let mut report = AuditReport::default();
    for ((step, group_index), members) in groups {
        let first = members[0];
        let task = TaskInstance::try_from(first.task.clone())?;
        if members.iter().any(|m| m.scoring != first.scoring || m.advantage.mode != first.advantage.mode) {
            return Err(LabError::Format(format!(
                "step {step} group {group_index}: members disagree on scoring settings"
            )));
        }
        if members.len() < 2 {
            return Err(LabError::Format(format!(
                "step {step} group {group_index}: fewer than two members"
            )));
        }
        let group = GroupBatch {
            task: task.clone(),
            trajectories: members.iter().map(|m| m.trajectory.clone()).collect(),
        };
        let grammar = Grammar::new(*task.spec(), first.scoring.mask_bbox_validity);
        let (rewards, advantages) = score_group(&group, &grammar, &first.scoring, first.advantage.mode);
        for (i, m) in members.iter().enumerate() {
            let mut check = |field: &str, stored: f64, recomputed: f64| {
                if stored.to_bits() != recomputed.to_bits() {
                    report.mismatches.push(AuditMismatch {
                        step,
                        group: group_index,
                        member: i,
                        field: field.to_string(),
                        stored,
                        recomputed,
                    });
                }
            };
            let t = &m.trajectory;
            let derived = parse_structure(&grammar, &task, &t.tokens)
                .map_err(|e| LabError::Format(format!("step {step} group {group_index} member {i}: {e}")))?;
            check("answer", t.answer as f64, derived.answer as f64);
            check("T", t.turn_boundary as f64, derived.turn_boundary as f64);
            check("n_img", t.n_img as f64, derived.n_img as f64);
            if t.bbox != derived.bbox {
                check("bbox", 0.0, 1.0);
            }
            if t.old_logprobs.len() != t.tokens.len() {
                check("old_logprobs.len", t.old_logprobs.len() as f64, t.tokens.len() as f64);
            }
            let (s, r) = (&m.reward, &rewards[i]);
            for (name, a, b) in [
                ("acc", s.acc, r.acc),
                ("form", s.form, r.form),
                ("bal", s.bal, r.bal),
                ("crop", s.crop, r.crop),
                ("area", s.area, r.area),
                ("tool", s.tool, r.tool),
                ("oc", s.oc, r.oc),
                ("total", s.total, r.total),
            ] {
                check(name, a, b);
            }
            check("a_oc", m.advantage.a_oc, advantages.a_oc[i]);
            check("a_tool", m.advantage.a_tool, advantages.a_tool[i]);
            let recomputed = &advantages.per_token[i];
            if recomputed.len() != m.advantage.per_token.len() {
                check("per_token.len", m.advantage.per_token.len() as f64, recomputed.len() as f64);
            } else {
                for (t, (a, b)) in m.advantage.per_token.iter().zip(recomputed).enumerate() {
                    check(&format!("per_token[{t}]"), *a, *b);
                }
            }
        }
        report.groups += 1;
        report.trajectories += members.len();
    }
    Ok(report)
}
