//! Decodes one episode greedily with a freshly initialized policy, printing
//! the legal set and probabilities at each step, then checks one
//! log-probability gradient against central finite differences.

use dtpo_lab::env::generate_task;
use dtpo_lab::optim::TrainConfig;
use dtpo_lab::policy::{PolicyDims, PolicyParams};
use dtpo_lab::rollout::greedy_trajectory;

fn main() -> dtpo_lab::Result<()> {
    let cfg = TrainConfig::default();
    let grammar = cfg.grammar();
    let dims = PolicyDims::for_grammar(&grammar, cfg.hidden);
    let params = PolicyParams::init_layered(dims, 1, cfg.init_scale, 0.5)?;
    println!("{} parameters ({} features, {} hidden, {} tokens)", params.len(), dims.input, dims.hidden, dims.vocab);

    let task = generate_task(3, 1.0);
    let traj = greedy_trajectory(&params, &grammar, &task);
    let contexts = traj.contexts(&grammar, &task)?;
    for (ctx, &token) in contexts.iter().zip(&traj.tokens) {
        let lp = params.legal_logprobs(ctx);
        let top = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "  {:<8} {:>2} legal  chose {:<8} p = {:.3}  (max p {:.3})",
            ctx.slot.name(),
            ctx.legal.len(),
            grammar.vocab.label(token),
            params.token_logprob(ctx, token)?.exp(),
            top.exp()
        );
    }

    let ctx = &contexts[1];
    let token = ctx.legal[ctx.legal.len() / 2];
    let grad = params.logprob_gradient(ctx, token)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut order: Vec<usize> = (0..grad.len()).collect();
    order.sort_by(|&a, &b| grad[b].abs().total_cmp(&grad[a].abs()));
    for &i in &order[..10] {
        let mut plus = params.clone();
        plus.theta[i] += h;
        let mut minus = params.clone();
        minus.theta[i] -= h;
        let fd = (plus.token_logprob(ctx, token)? - minus.token_logprob(ctx, token)?) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()));
    }
    println!("d log p({}) / dθ: worst relative error over the 10 largest components {worst:.2e}", grammar.vocab.label(token));
    Ok(())
}
