//! Reward terms.
//!
//! `R = R_oc + R_tool` with `R_oc = acc + form + bal` and
//! `R_tool = crop - alpha · area`. The balance and relative-area terms depend
//! on group statistics, so rewards are computed in two phases: per-member
//! judgments first, then the group-dependent terms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{judge_answer, judge_crop, TaskInstance};
use crate::policy::Grammar;
use crate::rollout::{GroupBatch, Trajectory, DIRECT_LEN, TOOL_CALL_LEN, TOOL_TURN_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Threshold on the correct-direct fraction below which correct direct answers are penalized.
    pub theta: f64,
    /// Weight of the relative-area penalty inside the tool reward.
    pub alpha: f64,
    /// Magnitude of each balance penalty.
    pub balance_penalty: f64,
    /// Reward for a fully well-formed response.
    pub format_value: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            theta: 0.2,
            alpha: 2.0,
            balance_penalty: 0.1,
            format_value: 0.5,
        }
    }
}

/// All reward terms for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub acc: f64,
    pub form: f64,
    pub bal: f64,
    pub crop: f64,
    pub area: f64,
    pub tool: f64,
    pub oc: f64,
    pub total: f64,
}

/// Group statistics feeding the balance and area terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub c_direct: usize,
    pub c_tool: usize,
    /// `C_direct / (C_direct + C_tool)`; undefined when nobody answered correctly.
    pub r: Option<f64>,
    /// Mean relative crop area over members with a correct answer and a correct crop.
    pub mu_a: Option<f64>,
    pub group_size: usize,
}

/// True when the trajectory parses as one of the two response shapes and its
/// recorded turn boundary and box agree with its tokens.
pub fn is_well_formed(traj: &Trajectory, grammar: &Grammar, task: &TaskInstance) -> bool {
    if traj.contexts(grammar, task).is_err() {
        return false;
    }
    let v = &grammar.vocab;
    match traj.tokens.len() {
        DIRECT_LEN => traj.turn_boundary == 0 && traj.bbox.is_none(),
        TOOL_CALL_LEN => {
            traj.turn_boundary == TOOL_TURN_LEN
                && traj.tokens[1] == v.tool()
                && traj.bbox.is_some_and(|b| {
                    let coords = [b.x1, b.y1, b.x2, b.y2];
                    coords
                        .iter()
                        .zip(&traj.tokens[2..6])
                        .all(|(&c, &t)| c >= 0 && v.coord(c as usize) == t)
                })
        }
        _ => false,
    }
}

/// `format_value` iff the response is well formed and any emitted box is valid.
pub fn format_reward(traj: &Trajectory, grammar: &Grammar, task: &TaskInstance, format_value: f64) -> f64 {
    let box_ok = traj.bbox.is_none_or(|b| b.is_valid(task.spec()));
    if box_ok && is_well_formed(traj, grammar, task) {
        format_value
    } else {
        0.0
    }
}

/// Correct-answer counts by response type and the direct fraction `r`.
pub fn balance_counts(group: &GroupBatch, acc: &[f64]) -> (usize, usize, Option<f64>) {
    let mut c_direct = 0;
    let mut c_tool = 0;
    for (traj, &a) in group.trajectories.iter().zip(acc) {
        if a == 1.0 {
            if traj.is_tool_call() {
                c_tool += 1;
            } else {
                c_direct += 1;
            }
        }
    }
    let total = c_direct + c_tool;
    let r = (total > 0).then(|| c_direct as f64 / total as f64);
    (c_direct, c_tool, r)
}

/// Balance reward per member.
///
/// Correct tool calls lose `penalty`; correct direct answers lose `penalty`
/// only when the group's correct-direct fraction `r` is below `theta`. With no
/// correct member `r` is undefined and no direct answer is penalized.
pub fn balance_rewards(group: &GroupBatch, acc: &[f64], theta: f64, penalty: f64) -> Vec<f64> {
    assert_eq!(acc.len(), group.len());
    let (_, _, r) = balance_counts(group, acc);
    let low_r = r.is_some_and(|r| r < theta);
    group
        .trajectories
        .iter()
        .zip(acc)
        .map(|(traj, &a)| {
            let correct = a == 1.0;
            if traj.is_tool_call() {
                if correct {
                    -penalty
                } else {
                    0.0
                }
            } else if correct && low_r {
                -penalty
            } else {
                0.0
            }
        })
        .collect()
}

/// Mean relative area over members with `acc = 1` and `crop = 1`.
pub fn correct_crop_mean_area(group: &GroupBatch, acc: &[f64], crop: &[f64]) -> Option<f64> {
    let spec = group.task.spec();
    let areas: Vec<f64> = group
        .trajectories
        .iter()
        .zip(acc.iter().zip(crop))
        .filter(|(t, (&a, &c))| a == 1.0 && c == 1.0 && t.bbox.is_some())
        .map(|(t, _)| t.bbox.unwrap().relative_area(spec))
        .collect();
    (!areas.is_empty()).then(|| areas.iter().sum::<f64>() / areas.len() as f64)
}

/// Relative-area reward: `1(acc=1)·1(crop=1)·clip(r_a/μ_a − 1, 0, 1)` for tool
/// calls, 0 for direct answers and for every member when no correct crop exists.
pub fn area_rewards(group: &GroupBatch, acc: &[f64], crop: &[f64]) -> Vec<f64> {
    let spec = group.task.spec();
    let mu_a = correct_crop_mean_area(group, acc, crop);
    group
        .trajectories
        .iter()
        .zip(acc.iter().zip(crop))
        .map(|(traj, (&a, &c))| match (mu_a, traj.bbox) {
            (Some(mu), Some(bbox)) if a == 1.0 && c == 1.0 => {
                (bbox.relative_area(spec) / mu - 1.0).clamp(0.0, 1.0)
            }
            _ => 0.0,
        })
        .collect()
}

pub fn tool_rewards(crop: &[f64], area: &[f64], alpha: f64) -> Vec<f64> {
    assert_eq!(crop.len(), area.len());
    crop.iter().zip(area).map(|(c, a)| c - alpha * a).collect()
}

/// Full two-phase reward computation for one group.
pub fn compute_group_rewards(
    group: &GroupBatch,
    grammar: &Grammar,
    cfg: &RewardConfig,
) -> (Vec<RewardBreakdown>, GroupStats) {
    let task = &group.task;
    let judged: Vec<(f64, f64, f64)> = group
        .trajectories
        .par_iter()
        .map(|traj| {
            let acc = f64::from(judge_answer(task, traj.answer));
            let form = format_reward(traj, grammar, task, cfg.format_value);
            let crop = match traj.bbox {
                Some(b) if traj.is_tool_call() => f64::from(judge_crop(task, &b)),
                _ => 0.0,
            };
            (acc, form, crop)
        })
        .collect();
    let acc: Vec<f64> = judged.iter().map(|j| j.0).collect();
    let crop: Vec<f64> = judged.iter().map(|j| j.2).collect();

    let bal = balance_rewards(group, &acc, cfg.theta, cfg.balance_penalty);
    let area = area_rewards(group, &acc, &crop);
    let tool = tool_rewards(&crop, &area, cfg.alpha);

    let breakdowns = judged
        .iter()
        .enumerate()
        .map(|(i, &(acc, form, crop))| {
            let oc = acc + form + bal[i];
            RewardBreakdown {
                acc,
                form,
                bal: bal[i],
                crop,
                area: area[i],
                tool: tool[i],
                oc,
                total: oc + tool[i],
            }
        })
        .collect();
    let (c_direct, c_tool, r) = balance_counts(group, &acc);
    let stats = GroupStats {
        c_direct,
        c_tool,
        r,
        mu_a: correct_crop_mean_area(group, &acc, &crop),
        group_size: group.len(),
    };
    (breakdowns, stats)
}
