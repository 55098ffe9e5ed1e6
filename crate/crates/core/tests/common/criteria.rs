//! Acceptance checks shared by the unit-style tests and the acceptance
//! report. Each panics with a description on failure and otherwise returns
//! a one-line summary.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use dtpo_lab::advantage::{dtpo_advantages, grpo_advantages, AdvantageMode, DEFAULT_EPS};
use dtpo_lab::env::Difficulty;
use dtpo_lab::harness::{evaluate_tasks, Decoding};
use dtpo_lab::optim::{dtpo_objective, grpo_objective, token_loss, TrainConfig};
use dtpo_lab::rewards::{compute_group_rewards, RewardConfig};
use dtpo_lab::rollout::GroupBatch;

pub fn check_reward_scenario(name: &str, difficulty: Difficulty, members: &[Member]) {
    let sc = Scenario::new(difficulty, 21);
    let group = sc.group(members);
    let (got, stats) = compute_group_rewards(&group, &sc.grammar, &RewardConfig::default());
    let want = oracle_rewards(members, q(1, 5), q(2, 1));
    assert_eq!(stats.group_size, members.len());
    for (i, (g, w)) in got.iter().zip(&want).enumerate() {
        // Indicator-valued terms are exact.
        assert_eq!(g.acc, to_f64(w.acc), "{name}: member {i} acc");
        assert_eq!(g.form, to_f64(w.form), "{name}: member {i} form");
        assert_eq!(g.bal, to_f64(w.bal), "{name}: member {i} bal");
        assert_eq!(g.crop, to_f64(w.crop), "{name}: member {i} crop");
        for (field, a, b) in [
            ("area", g.area, w.area),
            ("tool", g.tool, w.tool),
            ("oc", g.oc, w.oc),
            ("total", g.total, w.total),
        ] {
            assert!((a - to_f64(b)).abs() <= 1e-12, "{name}: member {i} {field}: {a} vs {b}");
        }
    }
}

pub fn reward_table() -> String {
    let start = Instant::now();
    let scenarios = reward_scenarios();
    assert_eq!(scenarios.len(), 20);
    for (name, difficulty, members) in &scenarios {
        check_reward_scenario(name, *difficulty, members);
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 1.0, "took {secs:.3}s");
    format!("20 scenarios match the rational oracle in {secs:.3}s")
}

/// Rewards drawn either from the discrete values real groups produce or
/// from a continuous range; some groups are made degenerate on purpose.
fn random_rewards(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    match rng.gen_range(0..4) {
        0 => vec![rng.gen_range(-1.0..3.0); n],
        1 => (0..n).map(|_| [0.0, 0.5, 1.4, 1.5, 2.4][rng.gen_range(0..5)]).collect(),
        _ => (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect(),
    }
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub fn advantage_sweep() -> String {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let lambda = 0.3;
    let mut degenerate = 0;
    for k in 0..1000 {
        let g = [2, 4, 16][k % 3];
        let trajs: Vec<_> = (0..g).map(|_| shape_only(rng.gen_bool(0.5))).collect();
        let totals = random_rewards(&mut rng, g);
        let oc = random_rewards(&mut rng, g);
        let tool: Vec<f64> = trajs
            .iter()
            .map(|t| if t.is_tool_call() { rng.gen_range(-1.0..1.0) } else { 0.0 })
            .collect();

        let grpo = grpo_advantages(&totals, &trajs, DEFAULT_EPS);
        let want = oracle_normalize(&totals, DEFAULT_EPS);
        assert_eq!(grpo.mode, AdvantageMode::Grpo);
        for (i, t) in trajs.iter().enumerate() {
            assert_eq!(grpo.per_token[i].len(), t.len());
            assert!(grpo.per_token[i].iter().all(|&a| close(a, want[i], 1e-12)), "group {k} member {i}");
        }

        let dtpo = dtpo_advantages(&oc, &tool, &trajs, lambda, DEFAULT_EPS);
        let want_oc = oracle_normalize(&oc, DEFAULT_EPS);
        let want_tool = oracle_normalize(&tool, DEFAULT_EPS);
        for (i, t) in trajs.iter().enumerate() {
            assert!(close(dtpo.a_oc[i], want_oc[i], 1e-12));
            assert!(close(dtpo.a_tool[i], want_tool[i], 1e-12));
            for pos in 0..t.len() {
                let boosted = !t.is_tool_call() || pos < t.turn_boundary;
                let expect = want_oc[i] + if boosted { lambda * want_tool[i] } else { 0.0 };
                assert!(close(dtpo.per_token[i][pos], expect, 1e-12), "group {k} member {i} pos {pos}");
            }
        }

        for v in [&grpo.a_oc, &dtpo.a_oc, &dtpo.a_tool] {
            let (m, s) = mean_std(v);
            assert!(m.abs() <= 1e-12, "group {k}: mean {m}");
            if s == 0.0 {
                degenerate += 1;
                assert!(v.iter().all(|&x| x == 0.0));
            } else {
                assert!((s - 1.0).abs() <= 1e-10, "group {k}: std {s}");
            }
        }
    }
    assert!(degenerate > 0, "the generator must exercise degenerate groups");
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 5.0, "took {secs:.3}s");
    format!("1000 groups match the oracle ({degenerate} degenerate vectors) in {secs:.3}s")
}

pub const CLIP: (f64, f64) = (0.20, 0.24);

fn mixed(groups: &[GroupBatch]) -> bool {
    let all = groups.iter().flat_map(|g| &g.trajectories);
    let tools = all.clone().filter(|t| t.is_tool_call()).count();
    tools > 0 && tools < all.count()
}

pub fn decomposition(batches: usize) -> String {
    let cfg = TrainConfig::default();
    let grammar = cfg.grammar();
    let mut checked = 0;
    let mut seed = 0;
    let mut worst: f64 = 0.0;
    while checked < batches {
        seed += 1;
        let behavior = random_params(&grammar, 16, seed, 0.8);
        let (groups, advs) = scored_batch(&cfg, &behavior, 3, 4, seed, AdvantageMode::Grpo);
        if !mixed(&groups) {
            continue;
        }
        // Evaluate away from the behavior policy so ratios (and clipping) vary.
        let params = perturb(&behavior, seed ^ 0xabc, 0.3);
        let (report, _) = grpo_objective(&groups, &advs, &params, &cfg, None).unwrap();
        let (obj, tool, answer) = oracle_grpo(&groups, &advs, &params, &grammar, CLIP);
        let gap = (report.total_loss - (report.tool_term + report.answer_term)).abs();
        assert!(gap <= 1e-10, "batch {seed}: decomposition gap {gap}");
        assert!((report.total_loss - obj).abs() <= 1e-10, "batch {seed}: {} vs {obj}", report.total_loss);
        assert!((report.tool_term - tool).abs() <= 1e-10);
        assert!((report.answer_term - answer).abs() <= 1e-10);
        worst = worst.max(gap);
        checked += 1;
    }
    format!("{batches} mixed batches, worst |loss − (tool + answer)| = {worst:.1e}")
}

pub fn reduction(batches: u64) -> String {
    let cfg = TrainConfig { lambda: 0.0, ..TrainConfig::default() };
    let grammar = cfg.grammar();
    let (mut worst_loss, mut worst_grad): (f64, f64) = (0.0, 0.0);
    for seed in 0..batches {
        let behavior = random_params(&grammar, 16, seed, 0.8);
        let groups = direct_only_batch(&grammar, &behavior, 4, 6, seed);
        let mut grpo_adv = Vec::new();
        let mut dtpo_adv = Vec::new();
        for g in &groups {
            let (r, _) = compute_group_rewards(g, &grammar, &cfg.rewards());
            let totals: Vec<f64> = r.iter().map(|b| b.total).collect();
            let oc: Vec<f64> = r.iter().map(|b| b.oc).collect();
            let tool: Vec<f64> = r.iter().map(|b| b.tool).collect();
            grpo_adv.push(grpo_advantages(&totals, &g.trajectories, cfg.advantage_eps));
            dtpo_adv.push(dtpo_advantages(&oc, &tool, &g.trajectories, cfg.lambda, cfg.advantage_eps));
        }
        let params = perturb(&behavior, seed + 7, 0.3);
        let (a, ga) = grpo_objective(&groups, &grpo_adv, &params, &cfg, None).unwrap();
        let (b, gb) = dtpo_objective(&groups, &dtpo_adv, &params, &cfg, None).unwrap();
        let gap = (a.total_loss - b.total_loss).abs();
        assert!(gap <= 1e-10, "batch {seed}: loss gap {gap}");
        worst_loss = worst_loss.max(gap);
        for (x, y) in ga.iter().zip(&gb) {
            let scale = x.abs().max(y.abs());
            if scale > 0.0 {
                let rel = (x - y).abs() / scale;
                assert!(rel <= 1e-8, "batch {seed}: gradient {x} vs {y}");
                worst_grad = worst_grad.max(rel);
            }
        }
    }
    format!("{batches} all-direct batches, worst loss gap {worst_loss:.1e}, worst relative gradient gap {worst_grad:.1e}")
}

pub fn gradient_check(points: u64) -> String {
    let cfg = TrainConfig::default();
    let grammar = cfg.grammar();
    let mut worst: f64 = 0.0;
    for point in 0..points {
        let params = random_params(&grammar, 64, 1000 + point, 0.5);
        for mode in [AdvantageMode::Grpo, AdvantageMode::Dtpo] {
            let (groups, advs) = scored_batch(&cfg, &params, 2, 4, point, mode);
            let objective = |p: &PolicyParams| match mode {
                AdvantageMode::Grpo => grpo_objective(&groups, &advs, p, &cfg, None),
                AdvantageMode::Dtpo => dtpo_objective(&groups, &advs, p, &cfg, None),
            }
            .unwrap();
            let (_, grad) = objective(&params);
            let err = fd_check(&params, &grad, |p| objective(p).0.total_loss, 1e-5, point);
            assert!(err < 1e-4, "point {point} {mode:?}: relative error {err}");
            worst = worst.max(err);
        }
    }
    format!("{points} points × 2 objectives, worst relative error {worst:.1e}")
}

pub fn clip_values() -> String {
    let cfg = TrainConfig::default();
    let (lo, hi) = (cfg.clip_low, cfg.clip_high);
    assert_eq!((lo, hi), CLIP);
    let up = token_loss(1.5, 1.0, lo, hi);
    let down = token_loss(0.5, -1.0, lo, hi);
    assert!((up - 1.24).abs() < 1e-15, "ratio 1.5, A = 1 gives {up}");
    assert!((down + 0.8).abs() < 1e-15, "ratio 0.5, A = −1 gives {down}");
    format!("token_loss(1.5, 1) = {up}, token_loss(0.5, −1) = {down}")
}

pub fn always_direct_tokens() -> String {
    let cfg = TrainConfig::default();
    let grammar = cfg.grammar();
    let mut params = random_params(&grammar, 16, 2, 1.0);
    let n = params.len();
    params.theta[n - grammar.vocab.len() + grammar.vocab.tool()] = -1000.0;
    let tasks: Vec<_> = (0..500).map(|s| generate_task(s, 0.5)).collect();
    let full = (grammar.spec.height * grammar.spec.width) as f64;
    let mut visual = 0.0;
    for decoding in [Decoding::Greedy, Decoding::Sample { temperature: 1.0, seed: 3 }] {
        let summary = evaluate_tasks(&params, &tasks, &grammar, decoding);
        assert_eq!(summary.tool_call_ratio, 0.0);
        assert_eq!(summary.mean_visual_tokens / full, 0.25, "{}", summary.mean_visual_tokens);
        visual = summary.mean_visual_tokens;
    }
    format!("mean_visual_tokens = {visual} = 25% of {full}")
}
