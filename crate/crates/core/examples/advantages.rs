//! Per-token advantages of one group under GRPO and DTPO. Picks the first
//! Coarse task whose sampled group mixes tool calls with direct answers and
//! has non-constant outcome rewards.

use dtpo_lab::advantage::AdvantageMode;
use dtpo_lab::env::generate_task;
use dtpo_lab::harness::records::{score_group, ScoringParams};
use dtpo_lab::optim::TrainConfig;
use dtpo_lab::policy::{PolicyDims, PolicyParams};
use dtpo_lab::rollout::sample_group;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dtpo_lab::Result<()> {
    let cfg = TrainConfig {
        group_size: 6,
        ..Default::default()
    };
    let grammar = cfg.grammar();
    let dims = PolicyDims::for_grammar(&grammar, cfg.hidden);
    let params = PolicyParams::init_layered(dims, 2, cfg.init_scale, cfg.output_init_scale)?;
    let scoring = ScoringParams::from(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let group = (0..)
        .map(|seed| {
            let task = generate_task(seed, 0.0);
            sample_group(&params, &grammar, &task, cfg.group_size, 1.0, &mut rng)
        })
        .find(|g| {
            let Ok(g) = g else { return true };
            let (_, adv) = score_group(g, &grammar, &scoring, AdvantageMode::Dtpo);
            let tools = g.trajectories.iter().filter(|t| t.is_tool_call()).count();
            tools > 0 && tools < g.len() && adv.a_oc.iter().any(|&a| a != 0.0)
        })
        .expect("unbounded search")?;
    for mode in [AdvantageMode::Grpo, AdvantageMode::Dtpo] {
        let (rewards, adv) = score_group(&group, &grammar, &scoring, mode);
        println!("{mode:?} (λ = {}):", cfg.lambda);
        for (i, t) in group.trajectories.iter().enumerate() {
            let tokens: Vec<String> = adv.per_token[i].iter().map(|a| format!("{a:+.2}")).collect();
            println!(
                "  {:<6} oc {:.2} tool {:+.2} | A_oc {:+.3} A_tool {:+.3} | {}",
                if t.is_tool_call() { "tool" } else { "direct" },
                rewards[i].oc,
                rewards[i].tool,
                adv.a_oc[i],
                adv.a_tool[i],
                tokens.join(" ")
            );
        }
    }
    Ok(())
}
