//! Trains DTPO with the default configuration on a few seeds and prints the
//! final greedy evaluation of each.
//!
//! ```text
//! cargo run --release --example train_dtpo -- [config-file]
//! ```
//!
//! The config file uses the same `key = value` format as the CLI; without
//! one the defaults are used with `algorithm = dtpo`.

use dtpo_lab::harness::{train_seed, ExperimentConfig};
use dtpo_lab::optim::Algorithm;

fn main() -> dtpo_lab::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => {
            let mut cfg = ExperimentConfig::default();
            cfg.train.algorithm = Algorithm::Dtpo;
            cfg
        }
    };
    for &seed in &cfg.seeds {
        let start = std::time::Instant::now();
        let run = train_seed(&cfg, seed, None)?;
        for m in run.metrics.iter().step_by(10).chain(run.metrics.last()) {
            println!(
                "  step {:>3}  tool {:.3} (fine {:.3} coarse {:.3})  acc {:.3}  oc {:.3}  tool_r {:.3}",
                m.step, m.tool_call_ratio, m.tool_ratio_fine, m.tool_ratio_coarse, m.accuracy,
                m.mean_outcome_reward, m.mean_tool_reward
            );
        }
        let e = run.eval;
        println!(
            "{} seed {seed}: accuracy {:.3} (fine {:.3} coarse {:.3})  tool_call_ratio {:.3}  fine {:.3}  coarse {:.3}  visual tokens {:.1}  ({:.1?})",
            cfg.train.algorithm, e.accuracy, e.accuracy_fine, e.accuracy_coarse, e.tool_call_ratio, e.tool_ratio_fine, e.tool_ratio_coarse,
            e.mean_visual_tokens, start.elapsed()
        );
    }
    Ok(())
}
