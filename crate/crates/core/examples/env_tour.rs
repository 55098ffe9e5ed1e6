//! Walks through one task: the full grid, the low-res view the policy starts
//! from, a crop, and the judges. With a path argument it also writes a task
//! set usable with `dtpo-lab eval --tasks`.
//!
//! ```text
//! cargo run --example env_tour -- [tasks.jsonl [count]]
//! ```

use std::fs::File;

use dtpo_lab::env::{
    apply_crop, count_visual_tokens, generate_task, judge_answer, judge_crop, render_low_res, write_tasks_jsonl, BBox,
};

fn main() -> dtpo_lab::Result<()> {
    let task = generate_task(7, 0.5);
    let spec = *task.spec();
    let vocab = spec.vocabulary();
    println!(
        "task seed {}: {:?} question about cell {:?} (block {:?})",
        task.seed,
        task.difficulty,
        task.query_cell,
        task.query_block()
    );
    println!("full grid (fine glyph ids):");
    for r in 0..task.grid.height() {
        let row: Vec<String> = (0..task.grid.width()).map(|c| format!("{:>2}", task.grid.get(r, c))).collect();
        println!("  {}", row.join(" "));
    }

    let view = render_low_res(&task);
    println!("low-res view ({} visual tokens, coarse class per 2x2 block):", view.n_low);
    for r in 0..view.rows {
        let row: Vec<String> = (0..view.cols).map(|c| view.get(r, c).to_string()).collect();
        println!("  {}", row.join(" "));
    }
    println!("ground truth: {}", vocab.label(task.ground_truth));

    let (br, bc) = task.query_block();
    let tight = BBox::new(bc as i32, br as i32, bc as i32 + 1, br as i32 + 1);
    let crop = apply_crop(&task, &tight)?;
    let glyph = crop.glyph_at(task.query_cell.0, task.query_cell.1).expect("crop covers the query");
    println!(
        "crop {:?}: {} cells revealed, query glyph {glyph}; crop judge {}, n_img {}",
        <[i32; 4]>::from(tight),
        crop.n_crop,
        judge_crop(&task, &tight),
        count_visual_tokens(&task, true, Some(&tight))
    );
    println!(
        "answer {} judged {}; answer {} judged {}",
        vocab.label(task.ground_truth),
        judge_answer(&task, task.ground_truth),
        vocab.label(vocab.coarse_answer(0)),
        judge_answer(&task, vocab.coarse_answer(0))
    );
    let invalid = BBox::new(2, 1, 2, 3);
    println!("invalid box {:?}: valid = {}, crop = {:?}", <[i32; 4]>::from(invalid), invalid.is_valid(&spec), apply_crop(&task, &invalid).err());

    let mut args = std::env::args().skip(1);
    if let Some(path) = args.next() {
        let count: u64 = args.next().map_or(Ok(200), |n| n.parse()).expect("count must be an integer");
        let tasks: Vec<_> = (0..count).map(|i| generate_task(1_000_000 + i, 0.5)).collect();
        write_tasks_jsonl(File::create(&path)?, &tasks)?;
        println!("wrote {count} tasks to {path}");
    }
    Ok(())
}
