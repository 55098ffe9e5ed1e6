//! Scores a hand-built group and prints every reward term, then shows how
//! the balance term flips when most correct answers come through the tool.

use dtpo_lab::env::{generate_task, Difficulty, TaskInstance};
use dtpo_lab::policy::{Grammar, PolicyDims, PolicyParams};
use dtpo_lab::rewards::{compute_group_rewards, RewardConfig};
use dtpo_lab::rollout::{replay_trajectory, GroupBatch};

/// `None` is a direct answer; `Some(box)` a tool call with that box.
fn group(grammar: &Grammar, task: &TaskInstance, members: &[(Option<[usize; 4]>, bool)]) -> GroupBatch {
    let params = PolicyParams::zeros(PolicyDims::for_grammar(grammar, 4));
    let v = grammar.vocab;
    let wrong = v.coarse_answer(((task.ground_truth - v.coarse_answer(0) + 1) % 4) as u8);
    let trajectories = members
        .iter()
        .map(|&(bbox, correct)| {
            let answer = if correct { task.ground_truth } else { wrong };
            let tokens = match bbox {
                None => vec![v.think(), answer, v.end()],
                Some([x1, y1, x2, y2]) => vec![
                    v.think(), v.tool(), v.coord(x1), v.coord(y1), v.coord(x2), v.coord(y2), v.think(), answer, v.end(),
                ],
            };
            replay_trajectory(&params, grammar, task, &tokens).expect("well-formed tokens")
        })
        .collect();
    GroupBatch { task: task.clone(), trajectories }
}

fn show(title: &str, g: &GroupBatch, grammar: &Grammar) {
    let (rewards, stats) = compute_group_rewards(g, grammar, &RewardConfig::default());
    println!("{title}: r = {:?}, mean correct crop area = {:?}", stats.r, stats.mu_a);
    println!("   kind    bbox          acc  form   bal  crop  area   tool    oc  total");
    for (t, r) in g.trajectories.iter().zip(&rewards) {
        println!(
            "   {:<7} {:<13} {:>3} {:>5} {:>5} {:>5} {:>5.2} {:>6.2} {:>5.2} {:>6.2}",
            if t.is_tool_call() { "tool" } else { "direct" },
            t.bbox.map_or("-".to_string(), |b| format!("{:?}", <[i32; 4]>::from(b))),
            r.acc, r.form, r.bal, r.crop, r.area, r.tool, r.oc, r.total
        );
    }
}

fn main() {
    // Unmasked so the invalid box below can be written.
    let grammar = Grammar::new(Default::default(), false);
    let task = (0..).map(|s| generate_task(s, 0.0)).find(|t| t.difficulty == Difficulty::Coarse).unwrap();
    let (br, bc) = task.query_block();
    let tight = [bc, br, bc + 1, br + 1];
    let wide = [0, 0, 4, 4];
    let miss = if bc == 0 { [1, br, 2, br + 1] } else { [0, br, 1, br + 1] };

    show(
        "mixed group",
        &group(&grammar, &task, &[(None, true), (None, false), (Some(tight), true), (Some(wide), true), (Some(miss), true), (Some([2, 1, 2, 3]), false)]),
        &grammar,
    );
    show(
        "tool-heavy group (r < θ)",
        &group(&grammar, &task, &[(None, true), (Some(tight), true), (Some(tight), true), (Some(tight), true), (Some(tight), true), (Some(tight), true)]),
        &grammar,
    );
}
