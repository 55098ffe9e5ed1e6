//! Samples one group of trajectories from an untrained policy and prints
//! each response as tokens.

use dtpo_lab::env::generate_task;
use dtpo_lab::optim::TrainConfig;
use dtpo_lab::policy::{PolicyDims, PolicyParams};
use dtpo_lab::rollout::{partition_turns, sample_group};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dtpo_lab::Result<()> {
    let cfg = TrainConfig::default();
    let grammar = cfg.grammar();
    let dims = PolicyDims::for_grammar(&grammar, cfg.hidden);
    let params = PolicyParams::init_layered(dims, 5, cfg.init_scale, cfg.output_init_scale)?;
    let task = generate_task(11, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let group = sample_group(&params, &grammar, &task, cfg.group_size, cfg.temperature, &mut rng)?;
    println!("{:?} task, ground truth {}", task.difficulty, grammar.vocab.label(task.ground_truth));
    for (i, t) in group.trajectories.iter().enumerate() {
        let words: Vec<String> = t.tokens.iter().map(|&id| grammar.vocab.label(id)).collect();
        let (tool, answer) = partition_turns(t);
        println!(
            "  {i:>2} {:<5} log p {:>7.3}  n_img {:>2}  tool {:?} answer {:?}  {}",
            if t.is_tool_call() { "tool" } else { "direct" },
            t.old_logprobs.iter().sum::<f64>(),
            t.n_img,
            tool,
            answer,
            words.join(" ")
        );
    }
    Ok(())
}
