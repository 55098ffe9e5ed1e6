//! Trains GRPO and DTPO on the same seeds and writes their curves into one
//! SVG, like `dtpo-lab compare`.
//!
//! ```text
//! cargo run --release --example compare -- [out.svg] [seeds, e.g. 0,1]
//! ```

use dtpo_lab::harness::svg::{emit_curves_svg, Series};
use dtpo_lab::harness::{train_seed, ExperimentConfig};
use dtpo_lab::optim::Algorithm;

fn main() -> dtpo_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "compare.svg".into());
    let seeds: Vec<u64> = args
        .next()
        .map_or_else(|| vec![0], |s| s.split(',').map(|x| x.trim().parse().expect("seed")).collect());
    let mut cfg = ExperimentConfig::default();
    let mut series = Vec::new();
    for alg in [Algorithm::Grpo, Algorithm::Dtpo] {
        cfg.train.algorithm = alg;
        for &seed in &seeds {
            let run = train_seed(&cfg, seed, None)?;
            let e = run.eval;
            println!(
                "{alg} seed {seed}: accuracy {:.3}  tool_call_ratio {:.3} (fine {:.3}, coarse {:.3})  visual tokens {:.1}",
                e.accuracy, e.tool_call_ratio, e.tool_ratio_fine, e.tool_ratio_coarse, e.mean_visual_tokens
            );
            series.push(Series::new(format!("{alg} seed {seed}"), &run.metrics));
        }
    }
    emit_curves_svg(&series, out.as_ref())?;
    println!("wrote {out}");
    Ok(())
}
