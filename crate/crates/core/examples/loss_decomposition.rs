//! Evaluates both objectives on one sampled batch, shows the tool/answer
//! split, and takes one AdamW step.

use dtpo_lab::advantage::AdvantageMode;
use dtpo_lab::harness::records::{score_group, ScoringParams};
use dtpo_lab::harness::train::{initial_params, sample_batch};
use dtpo_lab::harness::ExperimentConfig;
use dtpo_lab::optim::{objective, update_step, Algorithm};

fn main() -> dtpo_lab::Result<()> {
    let cfg = ExperimentConfig::default();
    let t = &cfg.train;
    let grammar = t.grammar();
    let params = initial_params(&cfg, 0)?;
    let batch = sample_batch(&cfg, 0, 0, &params)?;
    let scoring = ScoringParams::from(t);
    for (alg, mode) in [(Algorithm::Grpo, AdvantageMode::Grpo), (Algorithm::Dtpo, AdvantageMode::Dtpo)] {
        let advs: Vec<_> = batch.iter().map(|g| score_group(g, &grammar, &scoring, mode).1).collect();
        let (report, grad) = objective(alg, &batch, &advs, &params, t, None)?;
        println!(
            "{alg}: objective {:+.6} = tool {:+.6} + answer {:+.6}  ({} tool tokens, {} answer tokens, |grad| {:.4})",
            report.total_loss, report.tool_term, report.answer_term, report.tool_token_count, report.answer_token_count,
            report.grad_norm
        );
        let mut next = params.clone();
        update_step(&mut next, &grad, t)?;
        let (after, _) = objective(alg, &batch, &advs, &next, t, None)?;
        println!("   after one AdamW step: {:+.6}", after.total_loss);
    }
    Ok(())
}
