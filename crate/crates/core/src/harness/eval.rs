use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{generate_task_with, judge_answer, Difficulty, TaskInstance};
use crate::optim::TrainConfig;
use crate::policy::{Grammar, PolicyParams};
use crate::rollout::{greedy_trajectory, sample_trajectory, Trajectory};
use crate::seeding::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decoding {
    /// Argmax at every step.
    Greedy,
    Sample { temperature: f64, seed: u64 },
}

/// Aggregate behavior of a policy over a task set.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalSummary {
    pub tasks: usize,
    pub accuracy: f64,
    pub tool_call_ratio: f64,
    pub mean_visual_tokens: f64,
    pub tool_ratio_fine: f64,
    pub tool_ratio_coarse: f64,
    pub accuracy_fine: f64,
    pub accuracy_coarse: f64,
    pub fine_tasks: usize,
    pub coarse_tasks: usize,
}

/// Greedy evaluation on tasks regenerated from seeds.
pub fn evaluate(params: &PolicyParams, task_seeds: &[u64], cfg: &TrainConfig) -> EvalSummary {
    let grid = cfg.grid();
    let tasks: Vec<TaskInstance> = task_seeds
        .iter()
        .map(|&s| generate_task_with(&grid, s, cfg.fine_fraction))
        .collect();
    evaluate_tasks(params, &tasks, &cfg.grammar(), Decoding::Greedy)
}

pub fn evaluate_tasks(
    params: &PolicyParams,
    tasks: &[TaskInstance],
    grammar: &Grammar,
    decoding: Decoding,
) -> EvalSummary {
    let trajectories: Vec<Trajectory> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| match decoding {
            Decoding::Greedy => greedy_trajectory(params, grammar, task),
            Decoding::Sample { temperature, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64]));
                sample_trajectory(params, grammar, task, temperature, &mut rng)
            }
        })
        .collect();
    summarize(tasks, &trajectories)
}

/// Aggregates one trajectory per task.
pub fn summarize(tasks: &[TaskInstance], trajectories: &[Trajectory]) -> EvalSummary {
    assert_eq!(tasks.len(), trajectories.len());
    let n = tasks.len();
    if n == 0 {
        return EvalSummary::default();
    }
    let mut correct = 0usize;
    let mut tools = 0usize;
    let mut tokens = 0usize;
    let mut by = [(0usize, 0usize, 0usize); 2]; // (count, tool calls, correct)
    for (task, traj) in tasks.iter().zip(trajectories) {
        let ok = judge_answer(task, traj.answer) as usize;
        correct += ok;
        tools += traj.is_tool_call() as usize;
        tokens += traj.n_img;
        let slot = &mut by[(task.difficulty == Difficulty::Fine) as usize];
        slot.0 += 1;
        slot.1 += traj.is_tool_call() as usize;
        slot.2 += ok;
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    EvalSummary {
        tasks: n,
        accuracy: ratio(correct, n),
        tool_call_ratio: ratio(tools, n),
        mean_visual_tokens: tokens as f64 / n as f64,
        tool_ratio_fine: ratio(by[1].1, by[1].0),
        tool_ratio_coarse: ratio(by[0].1, by[0].0),
        accuracy_fine: ratio(by[1].2, by[1].0),
        accuracy_coarse: ratio(by[0].2, by[0].0),
        fine_tasks: by[1].0,
        coarse_tasks: by[0].0,
    }
}
