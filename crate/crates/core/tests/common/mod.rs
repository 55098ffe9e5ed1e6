//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dtpo_lab::env::{generate_task, render_low_res, Difficulty, GridSpec, TaskInstance};
use dtpo_lab::policy::{Grammar, PolicyDims, PolicyParams};
use dtpo_lab::rollout::{replay_trajectory, sample_group, GroupBatch, Trajectory};

pub mod criteria;

pub type Q = Ratio<i64>;

pub fn q(n: i64, d: i64) -> Q {
    Ratio::new(n, d)
}

pub fn to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Query cell used by the hand-built scenarios; it sits in block (row 1, col 2).
pub const QUERY_CELL: (usize, usize) = (2, 5);
pub const QUERY_BLOCK: (usize, usize) = (1, 2);

/// A task with a pinned query cell, an unmasked grammar (so invalid boxes are
/// reachable) and zero parameters.
pub struct Scenario {
    pub grammar: Grammar,
    pub params: PolicyParams,
    pub task: TaskInstance,
}

impl Scenario {
    pub fn new(difficulty: Difficulty, seed: u64) -> Self {
        let grammar = Grammar::new(GridSpec::default(), false);
        let params = PolicyParams::zeros(PolicyDims::for_grammar(&grammar, 8));
        let fine = difficulty == Difficulty::Fine;
        let mut task = generate_task(seed, if fine { 1.0 } else { 0.0 });
        task.query_cell = QUERY_CELL;
        let v = grammar.vocab;
        task.ground_truth = if fine {
            v.fine_answer(task.query_glyph())
        } else {
            v.coarse_answer(render_low_res(&task).get(QUERY_BLOCK.0, QUERY_BLOCK.1))
        };
        Self { grammar, params, task }
    }

    /// A same-type answer token that is not the ground truth.
    pub fn wrong_answer(&self) -> usize {
        let v = self.grammar.vocab;
        let first = match self.task.difficulty {
            Difficulty::Fine => v.fine_answer(0),
            Difficulty::Coarse => v.coarse_answer(0),
        };
        if self.task.ground_truth == first {
            first + 1
        } else {
            first
        }
    }

    pub fn tokens(&self, member: &Member) -> Vec<usize> {
        let v = self.grammar.vocab;
        let answer = |ok: bool| if ok { self.task.ground_truth } else { self.wrong_answer() };
        match *member {
            Member::Direct { correct } => vec![v.think(), answer(correct), v.end()],
            Member::Tool { bbox, correct } => {
                let mut t = vec![v.think(), v.tool()];
                t.extend(bbox.iter().map(|&c| v.coord(c)));
                t.extend([v.think(), answer(correct), v.end()]);
                t
            }
        }
    }

    pub fn trajectory(&self, member: &Member) -> Trajectory {
        replay_trajectory(&self.params, &self.grammar, &self.task, &self.tokens(member))
            .expect("scenario tokens are legal")
    }

    pub fn group(&self, members: &[Member]) -> GroupBatch {
        GroupBatch {
            task: self.task.clone(),
            trajectories: members.iter().map(|m| self.trajectory(m)).collect(),
        }
    }
}

/// Response description for a hand-built group member. Boxes are
/// `[x1, y1, x2, y2]` in low-res block units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Member {
    Direct { correct: bool },
    Tool { bbox: [usize; 4], correct: bool },
}

/// Exact reward terms of one member: acc, form, bal, crop, area, tool, oc, total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReward {
    pub acc: Q,
    pub form: Q,
    pub bal: Q,
    pub crop: Q,
    pub area: Q,
    pub tool: Q,
    pub oc: Q,
    pub total: Q,
}

/// Direct evaluation of the reward equations over rationals for a group on
/// a 4×4 block grid with the query in `QUERY_BLOCK`.
pub fn oracle_rewards(members: &[Member], theta: Q, alpha: Q) -> Vec<OracleReward> {
    let (hl, wl) = (4usize, 4usize);
    let valid = |b: [usize; 4]| b[0] < b[2] && b[1] < b[3] && b[2] <= wl && b[3] <= hl;
    let area_of = |b: [usize; 4]| q(((b[2] - b[0]) * (b[3] - b[1])) as i64, (hl * wl) as i64);
    let contains = |b: [usize; 4]| {
        let (r, c) = QUERY_BLOCK;
        b[0] <= c && c < b[2] && b[1] <= r && r < b[3]
    };
    let one = q(1, 1);
    let zero = q(0, 1);

    let acc: Vec<Q> = members
        .iter()
        .map(|m| match *m {
            Member::Direct { correct } | Member::Tool { correct, .. } => if correct { one } else { zero },
        })
        .collect();
    let form: Vec<Q> = members
        .iter()
        .map(|m| match *m {
            Member::Tool { bbox, .. } if !valid(bbox) => zero,
            _ => q(1, 2),
        })
        .collect();
    let crop: Vec<Q> = members
        .iter()
        .map(|m| match *m {
            Member::Tool { bbox, .. } if valid(bbox) && contains(bbox) => one,
            _ => zero,
        })
        .collect();

    // Balance.
    let mut c_direct = 0i64;
    let mut c_tool = 0i64;
    for (m, a) in members.iter().zip(&acc) {
        if *a == one {
            match m {
                Member::Direct { .. } => c_direct += 1,
                Member::Tool { .. } => c_tool += 1,
            }
        }
    }
    let r = (c_direct + c_tool > 0).then(|| q(c_direct, c_direct + c_tool));
    let bal: Vec<Q> = members
        .iter()
        .zip(&acc)
        .map(|(m, a)| {
            let correct = *a == one;
            match m {
                Member::Tool { .. } if correct => q(-1, 10),
                Member::Direct { .. } if correct && r.is_some_and(|r| r < theta) => q(-1, 10),
                _ => zero,
            }
        })
        .collect();

    // Relative area over G(a).
    let ga: Vec<Q> = members
        .iter()
        .enumerate()
        .filter_map(|(i, m)| match *m {
            Member::Tool { bbox, .. } if acc[i] == one && crop[i] == one => Some(area_of(bbox)),
            _ => None,
        })
        .collect();
    let mu = (!ga.is_empty()).then(|| ga.iter().fold(zero, |s, x| s + x) / Q::from_integer(ga.len() as i64));
    let area: Vec<Q> = members
        .iter()
        .enumerate()
        .map(|(i, m)| match (*m, mu) {
            (Member::Tool { bbox, .. }, Some(mu)) if acc[i] == one && crop[i] == one => {
                let x = area_of(bbox) / mu - one;
                x.max(zero).min(one)
            }
            _ => zero,
        })
        .collect();

    (0..members.len())
        .map(|i| {
            let tool = crop[i] - alpha * area[i];
            let oc = acc[i] + form[i] + bal[i];
            OracleReward {
                acc: acc[i],
                form: form[i],
                bal: bal[i],
                crop: crop[i],
                area: area[i],
                tool,
                oc,
                total: oc + tool,
            }
        })
        .collect()
}

/// Population-std normalization, written independently of the library
/// (reverse-order accumulation, explicit variance).
pub fn oracle_normalize(values: &[f64], eps: f64) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().rev().fold(0.0, |s, v| s + v) / n;
    let mut var = 0.0;
    for v in values.iter().rev() {
        var += (v - mean).powi(2);
    }
    let std = (var / n).sqrt();
    if std < eps {
        vec![0.0; values.len()]
    } else {
        values.iter().map(|v| (v - mean) / std).collect()
    }
}

/// A minimal trajectory carrying only the shape used by advantage code.
pub fn shape_only(tool: bool) -> Trajectory {
    let (n, t) = if tool { (9, 6) } else { (3, 0) };
    Trajectory {
        task_ref: 0,
        tokens: vec![0; n],
        turn_boundary: t,
        old_logprobs: vec![0.0; n],
        bbox: None,
        answer: 0,
        n_img: 16,
    }
}

/// Policy parameters with uniform noise of the given scale.
pub fn random_params(grammar: &Grammar, hidden: usize, seed: u64, scale: f64) -> PolicyParams {
    PolicyParams::init(PolicyDims::for_grammar(grammar, hidden), seed, scale).unwrap()
}

/// A batch of sampled groups over random tasks. Old log-probabilities are
/// those of `params`.
pub fn random_batch(
    grammar: &Grammar,
    params: &PolicyParams,
    groups: usize,
    group_size: usize,
    seed: u64,
) -> Vec<GroupBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..groups)
        .map(|_| {
            let task = generate_task(rng.gen(), 0.5);
            sample_group(params, grammar, &task, group_size, 1.0, &mut rng).unwrap()
        })
        .collect()
}

/// Moves every parameter by uniform noise of the given scale.
pub fn perturb(params: &PolicyParams, seed: u64, scale: f64) -> PolicyParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = params.clone();
    for w in &mut out.theta {
        *w += rng.gen_range(-scale..scale);
    }
    out
}

pub const SMALL: [usize; 4] = [2, 1, 3, 2]; // area 1 block, contains the query
pub const DOUBLE: [usize; 4] = [2, 1, 4, 2]; // area 2
pub const TRIPLE: [usize; 4] = [1, 1, 4, 2]; // area 3
pub const QUAD: [usize; 4] = [2, 0, 4, 2]; // area 4
pub const FULL: [usize; 4] = [0, 0, 4, 4]; // area 16
pub const MISS: [usize; 4] = [0, 0, 1, 1]; // valid, misses the query block
pub const FLAT: [usize; 4] = [3, 1, 3, 2]; // invalid: x2 = x1
pub const INVERTED: [usize; 4] = [3, 2, 2, 1]; // invalid: x2 < x1, y2 < y1

fn d(correct: bool) -> Member {
    Member::Direct { correct }
}

fn t(bbox: [usize; 4], correct: bool) -> Member {
    Member::Tool { bbox, correct }
}

/// Hand-built groups covering every branch of the balance, crop, area and
/// tool reward terms.
pub fn reward_scenarios() -> Vec<(&'static str, Difficulty, Vec<Member>)> {
    use Difficulty::{Coarse, Fine};
    vec![
        ("all-correct direct, r = 1 >= theta", Coarse, vec![d(true); 4]),
        ("all-incorrect mixed group, r undefined", Coarse, vec![d(false), d(false), t(SMALL, false), t(FULL, false)]),
        ("r = 1/8 < theta penalizes the correct direct", Fine, {
            let mut g = vec![d(true)];
            g.extend(vec![t(SMALL, true); 7]);
            g
        }),
        ("r = 1/5 = theta exactly, no direct penalty", Fine, vec![d(true), t(SMALL, true), t(SMALL, true), t(SMALL, true), t(SMALL, true)]),
        ("r = 1/2 >= theta", Coarse, vec![d(true), t(SMALL, true)]),
        ("incorrect direct is never penalized at low r", Fine, vec![d(false), t(SMALL, true), t(SMALL, true), t(DOUBLE, true), t(QUAD, true), t(SMALL, true)]),
        ("all tool, equal areas: 2.4 each", Fine, vec![t(SMALL, true); 4]),
        ("area = 2 mu_a clips to 1", Fine, vec![t(SMALL, true), t(SMALL, true), t(QUAD, true)]),
        ("area between mean and 2 mean", Fine, vec![t(SMALL, true), t(TRIPLE, true)]),
        ("area far above mean clips to 1", Fine, vec![t(SMALL, true), t(SMALL, true), t(SMALL, true), t(FULL, true)]),
        ("empty G(a): every tool answer wrong", Fine, vec![t(SMALL, false), t(FULL, false), d(true)]),
        ("empty G(a): correct answers but crops miss", Coarse, vec![t(MISS, true), t(MISS, true), d(false)]),
        ("wrong answer with big box gets no area term", Fine, vec![t(SMALL, true), t(DOUBLE, true), t(FULL, false)]),
        ("missed crop excluded from G(a)", Fine, vec![t(SMALL, true), t(MISS, true), t(DOUBLE, true)]),
        ("invalid box (x2 = x1) with correct answer", Fine, vec![t(FLAT, true), t(SMALL, true), d(false)]),
        ("invalid box (inverted) with wrong answer is all zero", Coarse, vec![t(INVERTED, false), d(true)]),
        ("G = 2: correct direct vs wrong tool call", Coarse, vec![d(true), t(SMALL, false)]),
        ("mixed areas within G(a)", Fine, vec![t(SMALL, true), t(DOUBLE, true), t(TRIPLE, true), t(QUAD, true), d(true), d(false)]),
        ("coarse task, tool calls and directs all correct", Coarse, vec![d(true), d(true), t(DOUBLE, true), t(FULL, true)]),
        ("invalid boxes only, mixed answers", Fine, vec![t(FLAT, true), t(INVERTED, false), t(FLAT, false)]),
    ]
}

/// Clipped surrogate written out case by case.
pub fn oracle_token_loss(ratio: f64, adv: f64, clip_low: f64, clip_high: f64) -> f64 {
    let lo = 1.0 - clip_low;
    let hi = 1.0 + clip_high;
    let clipped = if ratio < lo { lo } else if ratio > hi { hi } else { ratio };
    let a = ratio * adv;
    let b = clipped * adv;
    if a < b { a } else { b }
}

/// Per-token surrogate values `(is_tool_token, seq_len, loss)` of a batch.
fn oracle_token_terms(
    groups: &[GroupBatch],
    advantages: &[dtpo_lab::advantage::AdvantageSet],
    params: &PolicyParams,
    grammar: &Grammar,
    clip: (f64, f64),
) -> Vec<Vec<(bool, f64)>> {
    let mut out = Vec::new();
    for (g, adv) in groups.iter().zip(advantages) {
        for (i, traj) in g.trajectories.iter().enumerate() {
            let ctxs = traj.contexts(grammar, &g.task).unwrap();
            out.push(
                ctxs.iter()
                    .enumerate()
                    .map(|(t, ctx)| {
                        let lp = params.token_logprob(ctx, traj.tokens[t]).unwrap();
                        let ratio = (lp - traj.old_logprobs[t]).exp();
                        (t < traj.turn_boundary, oracle_token_loss(ratio, adv.per_token[i][t], clip.0, clip.1))
                    })
                    .collect(),
            );
        }
    }
    out
}

/// `(objective, tool_term, answer_term)` of the per-sequence GRPO objective.
pub fn oracle_grpo(
    groups: &[GroupBatch],
    advantages: &[dtpo_lab::advantage::AdvantageSet],
    params: &PolicyParams,
    grammar: &Grammar,
    clip: (f64, f64),
) -> (f64, f64, f64) {
    let seqs = oracle_token_terms(groups, advantages, params, grammar, clip);
    let m = seqs.len() as f64;
    let mut obj = 0.0;
    let (mut tool, mut answer) = (0.0, 0.0);
    for s in &seqs {
        let n = s.len() as f64;
        obj += s.iter().map(|x| x.1).sum::<f64>() / n / m;
        for &(is_tool, l) in s {
            if is_tool {
                tool += l / (m * n);
            } else {
                answer += l / (m * n);
            }
        }
    }
    (obj, tool, answer)
}

/// `(objective, tool_term, answer_term)` of the turn-pooled objective.
pub fn oracle_dtpo(
    groups: &[GroupBatch],
    advantages: &[dtpo_lab::advantage::AdvantageSet],
    params: &PolicyParams,
    grammar: &Grammar,
    clip: (f64, f64),
) -> (f64, f64, f64) {
    let seqs = oracle_token_terms(groups, advantages, params, grammar, clip);
    let flat: Vec<(bool, f64)> = seqs.into_iter().flatten().collect();
    let nt = flat.iter().filter(|x| x.0).count();
    let na = flat.len() - nt;
    let tool: f64 = flat.iter().filter(|x| x.0).map(|x| x.1).sum();
    let answer: f64 = flat.iter().filter(|x| !x.0).map(|x| x.1).sum();
    let tool = if nt == 0 { 0.0 } else { tool / nt as f64 };
    let answer = if na == 0 { 0.0 } else { answer / na as f64 };
    (tool + answer, tool, answer)
}

/// Samples a batch under `params` and scores it for `mode`.
pub fn scored_batch(
    cfg: &dtpo_lab::optim::TrainConfig,
    params: &PolicyParams,
    groups: usize,
    group_size: usize,
    seed: u64,
    mode: dtpo_lab::advantage::AdvantageMode,
) -> (Vec<GroupBatch>, Vec<dtpo_lab::advantage::AdvantageSet>) {
    use dtpo_lab::harness::records::{score_group, ScoringParams};
    let grammar = cfg.grammar();
    let batch = random_batch(&grammar, params, groups, group_size, seed);
    let scoring = ScoringParams::from(cfg);
    let advs = batch.iter().map(|g| score_group(g, &grammar, &scoring, mode).1).collect();
    (batch, advs)
}

/// Groups of direct answers only (all of length 3) with random answers.
pub fn direct_only_batch(
    grammar: &Grammar,
    params: &PolicyParams,
    groups: usize,
    group_size: usize,
    seed: u64,
) -> Vec<GroupBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = grammar.vocab;
    (0..groups)
        .map(|_| {
            let task = generate_task(rng.gen(), 0.5);
            let trajectories = (0..group_size)
                .map(|_| {
                    let answer = match task.difficulty {
                        Difficulty::Fine => v.fine_answer(rng.gen_range(0..4) as u8 * 4 + task.query_glyph() % 4),
                        Difficulty::Coarse => v.coarse_answer(rng.gen_range(0..4)),
                    };
                    replay_trajectory(params, grammar, &task, &[v.think(), answer, v.end()]).unwrap()
                })
                .collect();
            GroupBatch { task, trajectories }
        })
        .collect()
}

/// Central finite-difference check of `grad` for `f` at `params`: three
/// random directions, the eight largest components and four random ones.
/// Returns the worst relative error.
pub fn fd_check(
    params: &PolicyParams,
    grad: &[f64],
    f: impl Fn(&PolicyParams) -> f64,
    h: f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.len();
    let mut directions: Vec<Vec<f64>> = Vec::new();
    for _ in 0..3 {
        let mut d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        d.iter_mut().for_each(|x| *x /= norm);
        directions.push(d);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| grad[b].abs().total_cmp(&grad[a].abs()));
    let coords: Vec<usize> = order[..8].iter().copied().chain((0..4).map(|_| rng.gen_range(0..n))).collect();
    for k in coords {
        let mut d = vec![0.0; n];
        d[k] = 1.0;
        directions.push(d);
    }
    let mut worst: f64 = 0.0;
    for d in directions {
        let shifted = |s: f64| {
            let mut p = params.clone();
            for (w, x) in p.theta.iter_mut().zip(&d) {
                *w += s * h * x;
            }
            f(&p)
        };
        let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
        let an: f64 = grad.iter().zip(&d).map(|(g, x)| g * x).sum();
        let scale = fd.abs().max(an.abs());
        // Components with no dependence at all have both sides at rounding level.
        let err = if scale < 1e-9 { 0.0 } else { (fd - an).abs() / scale };
        worst = worst.max(err);
    }
    worst
}

/// A few-second experiment for integration tests.
pub fn small_experiment() -> dtpo_lab::harness::ExperimentConfig {
    let mut cfg = dtpo_lab::harness::ExperimentConfig {
        steps: 4,
        eval_every: 2,
        eval_tasks: 32,
        seeds: vec![0],
        ..Default::default()
    };
    cfg.train.tasks_per_batch = 4;
    cfg.train.group_size = 4;
    cfg.train.hidden = 16;
    cfg
}
