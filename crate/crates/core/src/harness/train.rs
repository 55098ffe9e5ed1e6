use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::eval::{evaluate, EvalSummary};
use super::records::{group_records, score_group, write_records, ScoringParams};
use super::{csv, svg};
use crate::advantage::AdvantageMode;
use crate::env::{generate_task_with, Difficulty};
use crate::error::Result;
use crate::optim::{objective, update_step, Algorithm, LossReport};
use crate::policy::io::save_params;
use crate::policy::{PolicyDims, PolicyParams};
use crate::rollout::{sample_group, GroupBatch};
use crate::seeding::derive_seed;

// Stream tags for seed derivation.
const INIT: u64 = 1;
const TASKS: u64 = 2;
const ROLLOUT: u64 = 3;
const EVAL: u64 = 4;

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub tool_call_ratio: f64,
    pub mean_outcome_reward: f64,
    pub mean_tool_reward: f64,
    pub accuracy: f64,
    pub mean_visual_tokens: f64,
    pub tool_ratio_fine: f64,
    pub tool_ratio_coarse: f64,
    pub loss: f64,
    pub grad_norm: f64,
}

/// Outcome of training one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub metrics: Vec<StepMetrics>,
    pub initial: PolicyParams,
    pub params: PolicyParams,
    pub eval: EvalSummary,
}

pub fn initial_params(cfg: &ExperimentConfig, seed: u64) -> Result<PolicyParams> {
    let t = &cfg.train;
    let dims = PolicyDims::for_grammar(&t.grammar(), t.hidden);
    PolicyParams::init_layered(dims, derive_seed(seed, &[INIT]), t.init_scale, t.output_init_scale)
}

/// Held-out evaluation seeds for a training seed.
pub fn eval_seeds(cfg: &ExperimentConfig, seed: u64) -> Vec<u64> {
    (0..cfg.eval_tasks as u64)
        .map(|i| derive_seed(seed, &[EVAL, i]))
        .collect()
}

/// Samples the batch for `step`. Depends only on the seed, the step and the
/// behavior parameters, so both algorithms see identical step-0 rollouts.
pub fn sample_batch(cfg: &ExperimentConfig, seed: u64, step: usize, params: &PolicyParams) -> Result<Vec<GroupBatch>> {
    let t = &cfg.train;
    let grid = t.grid();
    let grammar = t.grammar();
    (0..t.tasks_per_batch)
        .into_par_iter()
        .map(|j| {
            let task_seed = derive_seed(seed, &[TASKS, step as u64, j as u64]);
            let task = generate_task_with(&grid, task_seed, t.fine_fraction);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[ROLLOUT, step as u64, j as u64]));
            sample_group(params, &grammar, &task, t.group_size, t.temperature, &mut rng)
        })
        .collect()
}

/// Trains one seed. `persist` receives each step's audit records when the
/// step is due for persistence.
pub fn train_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    mut persist: Option<&mut dyn Write>,
) -> Result<SeedRun> {
    cfg.validate()?;
    let t = &cfg.train;
    let grammar = t.grammar();
    let scoring = ScoringParams::from(t);
    let mode = match t.algorithm {
        Algorithm::Grpo => AdvantageMode::Grpo,
        Algorithm::Dtpo => AdvantageMode::Dtpo,
    };
    let initial = initial_params(cfg, seed)?;
    let reference = (t.beta_kl > 0.0).then(|| initial.clone());
    let mut params = initial.clone();
    let mut metrics = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let groups = sample_batch(cfg, seed, step, &params)?;
        let scored: Vec<_> = groups
            .par_iter()
            .map(|g| score_group(g, &grammar, &scoring, mode))
            .collect();
        let advantages: Vec<_> = scored.iter().map(|(_, a)| a.clone()).collect();

        let mut first_report = None;
        for _ in 0..t.epochs_per_batch {
            let (report, gradient) = objective(t.algorithm, &groups, &advantages, &params, t, reference.as_ref())?;
            update_step(&mut params, &gradient, t)?;
            first_report.get_or_insert(report);
        }
        let report = first_report.expect("at least one epoch");
        metrics.push(step_metrics(step, &groups, &scored, &report));

        if step % cfg.eval_every == 0 {
            if let Some(out) = persist.as_deref_mut() {
                let mut records = Vec::new();
                for (gi, (group, (rewards, adv))) in groups.iter().zip(&scored).enumerate() {
                    records.extend(group_records(step, gi, group, rewards, adv, scoring));
                }
                write_records(&mut *out, &records)?;
            }
        }
    }
    let eval = evaluate(&params, &eval_seeds(cfg, seed), t);
    Ok(SeedRun {
        seed,
        algorithm: t.algorithm,
        metrics,
        initial,
        params,
        eval,
    })
}

fn step_metrics(
    step: usize,
    groups: &[GroupBatch],
    scored: &[(Vec<crate::rewards::RewardBreakdown>, crate::advantage::AdvantageSet)],
    report: &LossReport,
) -> StepMetrics {
    let mut n = 0usize;
    let mut tools = 0usize;
    let (mut oc, mut tool, mut acc, mut tokens) = (0.0, 0.0, 0.0, 0usize);
    let mut by = [(0usize, 0usize); 2];
    for (group, (rewards, _)) in groups.iter().zip(scored) {
        let fine = (group.task.difficulty == Difficulty::Fine) as usize;
        for (traj, r) in group.trajectories.iter().zip(rewards) {
            n += 1;
            let called = traj.is_tool_call() as usize;
            tools += called;
            oc += r.oc;
            tool += r.tool;
            acc += r.acc;
            tokens += traj.n_img;
            by[fine].0 += 1;
            by[fine].1 += called;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let nf = n as f64;
    StepMetrics {
        step,
        tool_call_ratio: ratio(tools, n),
        mean_outcome_reward: oc / nf,
        mean_tool_reward: tool / nf,
        accuracy: acc / nf,
        mean_visual_tokens: tokens as f64 / nf,
        tool_ratio_fine: ratio(by[1].1, by[1].0),
        tool_ratio_coarse: ratio(by[0].1, by[0].0),
        loss: report.total_loss,
        grad_norm: report.grad_norm,
    }
}

/// Output directory of one `(algorithm, seed)` run.
pub fn seed_dir(cfg: &ExperimentConfig, algorithm: Algorithm, seed: u64) -> PathBuf {
    cfg.output_dir.join(algorithm.to_string()).join(format!("seed_{seed}"))
}

/// Trains every configured seed. Each seed writes `metrics.csv`,
/// `trajectories.jsonl`, `params.bin` and `eval.json` under its run directory,
/// plus `curves.svg` when enabled.
pub fn run_training(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    cfg.validate()?;
    let runs: Vec<Result<SeedRun>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = cfg.clone();
            cfg.train.seed = seed;
            let dir = seed_dir(&cfg, cfg.train.algorithm, seed);
            fs::create_dir_all(&dir)?;
            let mut traj_out = BufWriter::new(File::create(dir.join("trajectories.jsonl"))?);
            let run = train_seed(&cfg, seed, Some(&mut traj_out))?;
            traj_out.flush()?;
            write_run_outputs(&cfg, &dir, &run)?;
            Ok(run)
        })
        .collect();
    runs.into_iter().collect()
}

fn write_run_outputs(cfg: &ExperimentConfig, dir: &Path, run: &SeedRun) -> Result<()> {
    csv::emit_metrics_csv(&run.metrics, &dir.join("metrics.csv"))?;
    save_params(&dir.join("params.bin"), &run.params)?;
    fs::write(dir.join("eval.json"), serde_json::to_string_pretty(&run.eval)? + "\n")?;
    if cfg.emit_svg {
        let label = format!("{} seed {}", run.algorithm, run.seed);
        svg::emit_curves_svg(&[svg::Series::new(label, &run.metrics)], &dir.join("curves.svg"))?;
    }
    Ok(())
}
