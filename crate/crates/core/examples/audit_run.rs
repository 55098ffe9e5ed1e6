//! Trains a short run while persisting trajectories, audits them, then
//! corrupts one stored reward and audits again.

use dtpo_lab::harness::{audit_records, read_records, train_seed, ExperimentConfig};

fn main() -> dtpo_lab::Result<()> {
    let cfg = ExperimentConfig {
        steps: 10,
        eval_every: 5,
        ..Default::default()
    };
    let mut persisted = Vec::new();
    train_seed(&cfg, 0, Some(&mut persisted))?;
    let mut records = read_records(persisted.as_slice())?;
    let report = audit_records(&records)?;
    println!(
        "{} groups, {} trajectories, {} bytes of JSONL: {} mismatches",
        report.groups,
        report.trajectories,
        persisted.len(),
        report.mismatches.len()
    );

    records[3].reward.oc += 0.1;
    let report = audit_records(&records)?;
    println!("after corrupting one outcome reward: {} mismatches", report.mismatches.len());
    for m in &report.mismatches {
        println!("  step {} group {} member {} {}: stored {} recomputed {}", m.step, m.group, m.member, m.field, m.stored, m.recomputed);
    }
    Ok(())
}
