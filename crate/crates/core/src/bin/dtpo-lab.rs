//! Command-line driver. Exit codes: 0 success, 1 audit mismatch,
//! 2 configuration or input error, 3 I/O error.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dtpo_lab::env::read_tasks_jsonl;
use dtpo_lab::harness::svg::{emit_curves_svg, Series};
use dtpo_lab::harness::{
    audit_records, evaluate_tasks, read_records, run_training, Decoding, ExperimentConfig, SeedRun,
};
use dtpo_lab::optim::Algorithm;
use dtpo_lab::policy::io::load_params;
use dtpo_lab::policy::{Grammar, PolicyDims};
use dtpo_lab::{LabError, Result};

#[derive(Parser)]
#[command(name = "dtpo-lab", version, about = "GRPO/DTPO lab on a coarse-to-fine glyph QA environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write metrics, trajectories and parameters.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        algorithm: Option<Algorithm>,
        /// Train only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (takes precedence over DTPO_LAB_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy evaluation of saved parameters on a JSONL task set.
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        /// Disable the bbox-validity mask (must match training).
        #[arg(long)]
        unmasked: bool,
    },
    /// Train both algorithms on the same seeds and plot them together.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute rewards and advantages of persisted trajectories.
    Audit {
        #[arg(long)]
        trajectories: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: &Path, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply_env();
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Train { config, algorithm, seed, out } => {
            let mut cfg = load_config(&config, out)?;
            if let Some(alg) = algorithm {
                cfg.train.algorithm = alg;
            }
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
                cfg.train.seed = seed;
            }
            let runs = run_training(&cfg)?;
            for run in &runs {
                print_run(run);
            }
            println!("outputs in {}", cfg.output_dir.display());
        }
        Command::Eval { params, tasks, unmasked } => {
            let params = load_params(&params)?;
            let tasks = read_tasks_jsonl(BufReader::new(File::open(&tasks)?))?;
            let Some(first) = tasks.first() else {
                return Err(LabError::Config("task file is empty".into()));
            };
            let spec = *first.spec();
            if tasks.iter().any(|t| *t.spec() != spec) {
                return Err(LabError::Config("tasks use different grid shapes".into()));
            }
            let grammar = Grammar::new(spec, !unmasked);
            let expected = PolicyDims::for_grammar(&grammar, params.dims.hidden);
            if expected != params.dims {
                return Err(LabError::Config(format!(
                    "parameter shape {:?} does not fit the task grid ({:?})",
                    params.dims, expected
                )));
            }
            let summary = evaluate_tasks(&params, &tasks, &grammar, Decoding::Greedy);
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Compare { config, seeds, out } => {
            let mut cfg = load_config(&config, out)?;
            cfg.seeds = seeds;
            let mut series = Vec::new();
            for alg in [Algorithm::Grpo, Algorithm::Dtpo] {
                cfg.train.algorithm = alg;
                for run in run_training(&cfg)? {
                    print_run(&run);
                    series.push(Series::new(format!("{alg} seed {}", run.seed), &run.metrics));
                }
            }
            fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join("compare.svg");
            emit_curves_svg(&series, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Audit { trajectories } => {
            let records = read_records(BufReader::new(File::open(&trajectories)?))?;
            let report = audit_records(&records)?;
            println!(
                "audited {} groups, {} trajectories: {} mismatches",
                report.groups,
                report.trajectories,
                report.mismatches.len()
            );
            for m in report.mismatches.iter().take(20) {
                println!(
                    "  step {} group {} member {} {}: stored {:?} recomputed {:?}",
                    m.step, m.group, m.member, m.field, m.stored, m.recomputed
                );
            }
            if !report.is_clean() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn print_run(run: &SeedRun) {
    let e = &run.eval;
    println!(
        "{} seed {}: accuracy {:.3}  tool_call_ratio {:.3}  fine {:.3}  coarse {:.3}  visual tokens {:.2}",
        run.algorithm,
        run.seed,
        e.accuracy,
        e.tool_call_ratio,
        e.tool_ratio_fine,
        e.tool_ratio_coarse,
        e.mean_visual_tokens
    );
}
