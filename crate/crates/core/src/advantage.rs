//! Group-relative advantages.
//!
//! GRPO broadcasts one normalized total reward over every token. DTPO
//! normalizes the outcome and tool rewards separately and adds `λ·A_tool` only
//! on tool tokens of tool calls (and on every token of a direct answer).

use serde::{Deserialize, Serialize};

use crate::rollout::Trajectory;

pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdvantageMode {
    Grpo,
    Dtpo,
}

/// Per-trajectory advantages for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageSet {
    pub a_oc: Vec<f64>,
    pub a_tool: Vec<f64>,
    pub per_token: Vec<Vec<f64>>,
    pub mode: AdvantageMode,
}

/// `(v − mean) / std` with the population standard deviation; all zeros when
/// `std < eps`.
pub fn normalize_group(values: &[f64], eps: f64) -> Vec<f64> {
    assert!(values.len() >= 2, "group statistics need at least two members");
    assert!(eps > 0.0, "eps must be positive");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < eps {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

pub fn grpo_advantages(totals: &[f64], trajs: &[Trajectory], eps: f64) -> AdvantageSet {
    assert_eq!(totals.len(), trajs.len());
    let a = normalize_group(totals, eps);
    let per_token = trajs
        .iter()
        .zip(&a)
        .map(|(t, &adv)| vec![adv; t.len()])
        .collect();
    AdvantageSet {
        a_oc: a,
        a_tool: vec![0.0; trajs.len()],
        per_token,
        mode: AdvantageMode::Grpo,
    }
}

pub fn dtpo_advantages(
    oc: &[f64],
    tool: &[f64],
    trajs: &[Trajectory],
    lambda: f64,
    eps: f64,
) -> AdvantageSet {
    assert_eq!(oc.len(), trajs.len());
    assert_eq!(tool.len(), trajs.len());
    assert!(lambda >= 0.0, "lambda must be non-negative");
    let a_oc = normalize_group(oc, eps);
    let a_tool = normalize_group(tool, eps);
    let per_token = trajs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let boosted = a_oc[i] + lambda * a_tool[i];
            if t.is_tool_call() {
                (0..t.len())
                    .map(|pos| if pos < t.turn_boundary { boosted } else { a_oc[i] })
                    .collect()
            } else {
                vec![boosted; t.len()]
            }
        })
        .collect();
    AdvantageSet {
        a_oc,
        a_tool,
        per_token,
        mode: AdvantageMode::Dtpo,
    }
}
