//! Synthetic coarse-to-fine glyph question answering.
//!
//! A task is a grid of fine glyphs. The agent first sees a 2×2-downsampled
//! view in which each block only carries a coarse class. Coarse questions ask
//! for the class of the queried block and are answerable from that view; fine
//! questions ask for the exact glyph at a cell and need a crop of the full
//! grid. Judges are exact, deterministic functions of the task.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::policy::vocab::Vocabulary;

/// Grid dimensions and glyph alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub height: usize,
    pub width: usize,
    /// Number of fine glyphs.
    pub fine: usize,
    /// Number of coarse classes; fine glyph `g` belongs to class `g / (fine / coarse)`.
    pub coarse: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            height: 8,
            width: 8,
            fine: 16,
            coarse: 4,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < 4 || self.width < 4 || !self.height.is_multiple_of(2) || !self.width.is_multiple_of(2) {
            return Err(LabError::Config(format!(
                "grid must be even and at least 4x4, got {}x{}",
                self.height, self.width
            )));
        }
        if self.coarse == 0 || self.fine == 0 || !self.fine.is_multiple_of(self.coarse) {
            return Err(LabError::Config(format!(
                "fine glyph count {} must be a positive multiple of coarse count {}",
                self.fine, self.coarse
            )));
        }
        if self.fine > u8::MAX as usize + 1 {
            return Err(LabError::Config("at most 256 fine glyphs".into()));
        }
        Ok(())
    }

    pub fn low_height(&self) -> usize {
        self.height / 2
    }

    pub fn low_width(&self) -> usize {
        self.width / 2
    }

    /// `n_low`: one visual token per 2×2 block.
    pub fn low_res_tokens(&self) -> usize {
        self.height * self.width / 4
    }

    pub fn coarse_of(&self, glyph: u8) -> u8 {
        (glyph as usize / (self.fine / self.coarse)) as u8
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(self)
    }
}

/// Full-resolution grid of fine glyph ids, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlyphGrid {
    spec: GridSpec,
    cells: Vec<u8>,
}

impl GlyphGrid {
    pub fn new(spec: GridSpec, cells: Vec<u8>) -> Result<Self> {
        spec.validate()?;
        if cells.len() != spec.height * spec.width {
            return Err(LabError::Format(format!(
                "expected {} cells, got {}",
                spec.height * spec.width,
                cells.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|&&c| c as usize >= spec.fine) {
            return Err(LabError::Format(format!("glyph id {bad} out of range")));
        }
        Ok(Self { spec, cells })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn height(&self) -> usize {
        self.spec.height
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.spec.width + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Coarse,
    Fine,
}

/// One question about one grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskInstance {
    pub grid: GlyphGrid,
    /// `(row, col)` in full-resolution cells.
    pub query_cell: (usize, usize),
    pub difficulty: Difficulty,
    /// Answer token id in the grid's vocabulary.
    pub ground_truth: usize,
    pub seed: u64,
}

impl TaskInstance {
    pub fn spec(&self) -> &GridSpec {
        self.grid.spec()
    }

    /// Low-res block `(block_row, block_col)` holding the query cell.
    pub fn query_block(&self) -> (usize, usize) {
        (self.query_cell.0 / 2, self.query_cell.1 / 2)
    }

    pub fn query_glyph(&self) -> u8 {
        self.grid.get(self.query_cell.0, self.query_cell.1)
    }
}

/// Downsampled view: one coarse class per 2×2 block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowResView {
    pub rows: usize,
    pub cols: usize,
    pub blocks: Vec<u8>,
    pub n_low: usize,
}

impl LowResView {
    pub fn get(&self, block_row: usize, block_col: usize) -> u8 {
        self.blocks[block_row * self.cols + block_col]
    }
}

/// Crop request in low-res block coordinates, `[x1, x2) × [y1, y2)`.
///
/// Any four integers are representable; validity is checked on use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 4]", into = "[i32; 4]")]
pub struct BBox {
    pub x1: i32,
    pub y1: i32,
    pub x2: i32,
    pub y2: i32,
}

impl BBox {
    pub fn new(x1: i32, y1: i32, x2: i32, y2: i32) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn is_valid(&self, spec: &GridSpec) -> bool {
        0 <= self.x1
            && self.x1 < self.x2
            && self.x2 <= spec.low_width() as i32
            && 0 <= self.y1
            && self.y1 < self.y2
            && self.y2 <= spec.low_height() as i32
    }

    /// Area in blocks; only meaningful for valid boxes.
    pub fn block_area(&self) -> i64 {
        (self.x2 - self.x1) as i64 * (self.y2 - self.y1) as i64
    }

    /// Block area over the low-res grid area.
    pub fn relative_area(&self, spec: &GridSpec) -> f64 {
        self.block_area() as f64 / (spec.low_height() * spec.low_width()) as f64
    }

    pub fn contains_block(&self, block_row: usize, block_col: usize) -> bool {
        let (r, c) = (block_row as i32, block_col as i32);
        self.x1 <= c && c < self.x2 && self.y1 <= r && r < self.y2
    }

    fn as_array(&self) -> [i32; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl From<[i32; 4]> for BBox {
    fn from([x1, y1, x2, y2]: [i32; 4]) -> Self {
        Self { x1, y1, x2, y2 }
    }
}

impl From<BBox> for [i32; 4] {
    fn from(b: BBox) -> Self {
        b.as_array()
    }
}

/// Full-resolution cells revealed by a crop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CropView {
    /// Top-left full-resolution cell of the crop.
    pub origin: (usize, usize),
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<u8>,
    pub n_crop: usize,
}

impl CropView {
    /// Glyph at a full-resolution cell if the crop revealed it.
    pub fn glyph_at(&self, row: usize, col: usize) -> Option<u8> {
        let (r0, c0) = self.origin;
        if row >= r0 && row < r0 + self.rows && col >= c0 && col < c0 + self.cols {
            Some(self.cells[(row - r0) * self.cols + (col - c0)])
        } else {
            None
        }
    }
}

/// Generates a task with the default grid.
pub fn generate_task(seed: u64, fine_fraction: f64) -> TaskInstance {
    generate_task_with(&GridSpec::default(), seed, fine_fraction)
}

/// Deterministic task generation: the seed fixes difficulty, cells and query.
pub fn generate_task_with(spec: &GridSpec, seed: u64, fine_fraction: f64) -> TaskInstance {
    assert!(
        (0.0..=1.0).contains(&fine_fraction),
        "fine_fraction must lie in [0, 1]"
    );
    spec.validate().expect("grid spec");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let difficulty = if rng.gen::<f64>() < fine_fraction {
        Difficulty::Fine
    } else {
        Difficulty::Coarse
    };
    let cells: Vec<u8> = (0..spec.height * spec.width)
        .map(|_| rng.gen_range(0..spec.fine) as u8)
        .collect();
    let query_cell = (rng.gen_range(0..spec.height), rng.gen_range(0..spec.width));
    let grid = GlyphGrid { spec: *spec, cells };
    let ground_truth = ground_truth_for(&grid, query_cell, difficulty);
    TaskInstance {
        grid,
        query_cell,
        difficulty,
        ground_truth,
        seed,
    }
}

fn ground_truth_for(grid: &GlyphGrid, query_cell: (usize, usize), difficulty: Difficulty) -> usize {
    let vocab = grid.spec().vocabulary();
    match difficulty {
        Difficulty::Fine => vocab.fine_answer(grid.get(query_cell.0, query_cell.1)),
        Difficulty::Coarse => {
            let class = block_class(grid, query_cell.0 / 2, query_cell.1 / 2);
            vocab.coarse_answer(class)
        }
    }
}

/// Majority coarse class of a 2×2 block, ties to the smallest class id.
fn block_class(grid: &GlyphGrid, block_row: usize, block_col: usize) -> u8 {
    let spec = grid.spec();
    let mut counts = vec![0u8; spec.coarse];
    for dr in 0..2 {
        for dc in 0..2 {
            let glyph = grid.get(block_row * 2 + dr, block_col * 2 + dc);
            counts[spec.coarse_of(glyph) as usize] += 1;
        }
    }
    let mut best = 0;
    for (class, &count) in counts.iter().enumerate() {
        if count > counts[best] {
            best = class;
        }
    }
    best as u8
}

pub fn render_low_res(task: &TaskInstance) -> LowResView {
    let spec = task.spec();
    let (rows, cols) = (spec.low_height(), spec.low_width());
    let mut blocks = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            blocks.push(block_class(&task.grid, r, c));
        }
    }
    LowResView {
        rows,
        cols,
        blocks,
        n_low: spec.low_res_tokens(),
    }
}

pub fn apply_crop(task: &TaskInstance, bbox: &BBox) -> Result<CropView> {
    let spec = task.spec();
    if !bbox.is_valid(spec) {
        return Err(LabError::InvalidBBox(bbox.as_array()));
    }
    let (r0, c0) = (bbox.y1 as usize * 2, bbox.x1 as usize * 2);
    let (r1, c1) = (bbox.y2 as usize * 2, bbox.x2 as usize * 2);
    let mut cells = Vec::with_capacity((r1 - r0) * (c1 - c0));
    for r in r0..r1 {
        for c in c0..c1 {
            cells.push(task.grid.get(r, c));
        }
    }
    Ok(CropView {
        origin: (r0, c0),
        rows: r1 - r0,
        cols: c1 - c0,
        n_crop: cells.len(),
        cells,
    })
}

/// Exact-match answer judge.
pub fn judge_answer(task: &TaskInstance, answer: usize) -> u8 {
    u8::from(answer == task.ground_truth)
}

/// Crop judge: the box is valid and covers the block holding the query cell.
pub fn judge_crop(task: &TaskInstance, bbox: &BBox) -> u8 {
    let (br, bc) = task.query_block();
    u8::from(bbox.is_valid(task.spec()) && bbox.contains_block(br, bc))
}

/// `n_img = n_low + 1_tool · n_crop`; an invalid box reveals nothing.
pub fn count_visual_tokens(task: &TaskInstance, tool_used: bool, bbox: Option<&BBox>) -> usize {
    let spec = task.spec();
    let crop = match (tool_used, bbox) {
        (true, Some(b)) if b.is_valid(spec) => 4 * b.block_area() as usize,
        _ => 0,
    };
    spec.low_res_tokens() + crop
}

/// JSONL line layout for task sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub seed: u64,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "F", default = "default_fine")]
    pub fine: usize,
    #[serde(rename = "C", default = "default_coarse")]
    pub coarse: usize,
    pub cells: Vec<u8>,
    pub query_cell: (usize, usize),
    pub difficulty: Difficulty,
    pub ground_truth: usize,
}

fn default_fine() -> usize {
    GridSpec::default().fine
}

fn default_coarse() -> usize {
    GridSpec::default().coarse
}

impl From<&TaskInstance> for TaskRecord {
    fn from(task: &TaskInstance) -> Self {
        let spec = task.spec();
        Self {
            seed: task.seed,
            height: spec.height,
            width: spec.width,
            fine: spec.fine,
            coarse: spec.coarse,
            cells: task.grid.cells.clone(),
            query_cell: task.query_cell,
            difficulty: task.difficulty,
            ground_truth: task.ground_truth,
        }
    }
}

impl TryFrom<TaskRecord> for TaskInstance {
    type Error = LabError;

    fn try_from(rec: TaskRecord) -> Result<Self> {
        let spec = GridSpec {
            height: rec.height,
            width: rec.width,
            fine: rec.fine,
            coarse: rec.coarse,
        };
        let grid = GlyphGrid::new(spec, rec.cells)?;
        if rec.query_cell.0 >= spec.height || rec.query_cell.1 >= spec.width {
            return Err(LabError::Format(format!(
                "query cell {:?} out of bounds",
                rec.query_cell
            )));
        }
        let expected = ground_truth_for(&grid, rec.query_cell, rec.difficulty);
        if expected != rec.ground_truth {
            return Err(LabError::Format(format!(
                "task {}: ground truth {} disagrees with grid (expected {expected})",
                rec.seed, rec.ground_truth
            )));
        }
        Ok(TaskInstance {
            grid,
            query_cell: rec.query_cell,
            difficulty: rec.difficulty,
            ground_truth: rec.ground_truth,
            seed: rec.seed,
        })
    }
}

pub fn write_tasks_jsonl<W: std::io::Write>(mut out: W, tasks: &[TaskInstance]) -> Result<()> {
    for task in tasks {
        serde_json::to_writer(&mut out, &TaskRecord::from(task))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_tasks_jsonl<R: std::io::BufRead>(input: R) -> Result<Vec<TaskInstance>> {
    let mut tasks = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TaskRecord = serde_json::from_str(&line)?;
        tasks.push(TaskInstance::try_from(rec)?);
    }
    Ok(tasks)
}
