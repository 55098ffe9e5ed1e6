//! Trajectory grammar and decoding-context featurization.

use crate::env::{render_low_res, CropView, Difficulty, GridSpec, TaskInstance};
use crate::policy::vocab::Vocabulary;

/// Value of the one-hot entries that identify the answer (query block class,
/// query glyph). Weighting them above the other features makes the answer
/// mapping dominate the random hidden projection at initialization.
pub const ANSWER_FEATURE_WEIGHT: f64 = 2.0;

/// Grammar position of the next token.
///
/// Direct answer: `Think1 Decision End`.
/// Tool call: `Think1 Decision X1 Y1 X2 Y2 | Think2 Answer End`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Think1,
    Decision,
    X1,
    Y1,
    X2,
    Y2,
    Think2,
    Answer,
    End,
}

impl Slot {
    pub const ALL: [Slot; 9] = [
        Slot::Think1,
        Slot::Decision,
        Slot::X1,
        Slot::Y1,
        Slot::X2,
        Slot::Y2,
        Slot::Think2,
        Slot::Answer,
        Slot::End,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Slot::Think1 => "think1",
            Slot::Decision => "decision",
            Slot::X1 => "x1",
            Slot::Y1 => "y1",
            Slot::X2 => "x2",
            Slot::Y2 => "y2",
            Slot::Think2 => "think2",
            Slot::Answer => "answer",
            Slot::End => "end",
        }
    }
}

/// What the second turn sees of the crop tool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CropState {
    /// No tool result yet (first turn, or a direct answer).
    Pending,
    /// The box was invalid; nothing was revealed.
    Failed,
    Revealed(CropView),
}

/// Features and legal-token mask for one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodingContext {
    pub slot: Slot,
    pub features: Vec<f64>,
    /// Sorted ids of tokens admitted by the grammar at this step.
    pub legal: Vec<usize>,
}

impl DecodingContext {
    pub fn is_legal(&self, token: usize) -> bool {
        self.legal.binary_search(&token).is_ok()
    }

    /// A step with exactly one legal token carries no choice.
    pub fn is_forced(&self) -> bool {
        self.legal.len() == 1
    }
}

/// Grammar and featurization for one grid shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grammar {
    pub spec: GridSpec,
    pub vocab: Vocabulary,
    /// Restrict coordinates so every emitted box is valid.
    pub mask_bbox_validity: bool,
}

impl Grammar {
    pub fn new(spec: GridSpec, mask_bbox_validity: bool) -> Self {
        Self {
            spec,
            vocab: spec.vocabulary(),
            mask_bbox_validity,
        }
    }

    /// Feature layout:
    /// low-res summary `[query block class one-hot (C, weighted) | block class histogram (C)]`,
    /// query `[difficulty (2) | block row (H/2) | block col (W/2)]`,
    /// crop `[revealed glyph histogram (F) | query glyph one-hot (weighted) or sentinel (F+1)]`,
    /// slot one-hot (9), turn index (1).
    pub fn feature_dim(&self) -> usize {
        let s = &self.spec;
        2 * s.coarse + 2 + s.low_height() + s.low_width() + 2 * s.fine + 1 + Slot::ALL.len() + 1
    }

    /// Tokens admitted at `slot`; `x1`/`y1` are the already emitted corner.
    /// Legal tokens at `slot`. Answers are typed by the question: fine
    /// glyphs for Fine tasks, coarse classes for Coarse tasks.
    pub fn legal_tokens(
        &self,
        slot: Slot,
        difficulty: Difficulty,
        x1: Option<u8>,
        y1: Option<u8>,
    ) -> Vec<usize> {
        let v = &self.vocab;
        let all_coords = || (0..v.coord_count()).map(|c| v.coord(c)).collect::<Vec<_>>();
        match slot {
            Slot::Think1 | Slot::Think2 => vec![v.think()],
            Slot::End => vec![v.end()],
            Slot::Decision => std::iter::once(v.tool()).chain(self.answers(difficulty)).collect(),
            Slot::Answer => self.answers(difficulty).collect(),
            Slot::X1 | Slot::Y1 if self.mask_bbox_validity => {
                let extent = self.extent(slot);
                (0..extent).map(|c| v.coord(c)).collect()
            }
            Slot::X2 | Slot::Y2 if self.mask_bbox_validity => {
                let extent = self.extent(slot);
                let lo = match slot {
                    Slot::X2 => x1.map_or(0, |x| x as usize + 1),
                    _ => y1.map_or(0, |y| y as usize + 1),
                };
                (lo..=extent).map(|c| v.coord(c)).collect()
            }
            Slot::X1 | Slot::Y1 | Slot::X2 | Slot::Y2 => all_coords(),
        }
    }

    fn answers(&self, difficulty: Difficulty) -> std::ops::Range<usize> {
        let v = &self.vocab;
        match difficulty {
            Difficulty::Fine => v.fine_answer(0)..v.fine_answer(0) + self.spec.fine,
            Difficulty::Coarse => v.coarse_answer(0)..v.coarse_answer(0) + self.spec.coarse,
        }
    }

    fn extent(&self, slot: Slot) -> usize {
        match slot {
            Slot::X1 | Slot::X2 => self.spec.low_width(),
            _ => self.spec.low_height(),
        }
    }

    /// Slot-independent part of the features for a task.
    pub fn task_features(&self, task: &TaskInstance) -> TaskFeatures {
        let s = &self.spec;
        let view = render_low_res(task);
        let mut base = Vec::with_capacity(2 * s.coarse + 2 + s.low_height() + s.low_width());
        let (br, bc) = task.query_block();
        let mut query_class = vec![0.0; s.coarse];
        query_class[view.get(br, bc) as usize] = ANSWER_FEATURE_WEIGHT;
        base.extend(query_class);
        let mut hist = vec![0.0; s.coarse];
        for &b in &view.blocks {
            hist[b as usize] += 1.0;
        }
        let total = view.blocks.len() as f64;
        base.extend(hist.into_iter().map(|h| h / total));
        base.push(f64::from(u8::from(task.difficulty == Difficulty::Coarse)));
        base.push(f64::from(u8::from(task.difficulty == Difficulty::Fine)));
        base.extend((0..s.low_height()).map(|r| f64::from(u8::from(r == br))));
        base.extend((0..s.low_width()).map(|c| f64::from(u8::from(c == bc))));
        TaskFeatures {
            base,
            query_cell: task.query_cell,
            difficulty: task.difficulty,
        }
    }

    pub fn context(
        &self,
        task: &TaskFeatures,
        slot: Slot,
        crop: &CropState,
        x1: Option<u8>,
        y1: Option<u8>,
    ) -> DecodingContext {
        let s = &self.spec;
        let mut features = Vec::with_capacity(self.feature_dim());
        features.extend_from_slice(&task.base);
        let crop_start = features.len();
        features.resize(crop_start + 2 * s.fine + 1, 0.0);
        if let CropState::Revealed(view) = crop {
            let n = view.cells.len() as f64;
            for &g in &view.cells {
                features[crop_start + g as usize] += 1.0 / n;
            }
            let glyph_start = crop_start + s.fine;
            match view.glyph_at(task.query_cell.0, task.query_cell.1) {
                Some(g) => features[glyph_start + g as usize] = ANSWER_FEATURE_WEIGHT,
                None => features[glyph_start + s.fine] = 1.0,
            }
        }
        features.extend(Slot::ALL.iter().map(|&sl| f64::from(u8::from(sl == slot))));
        let turn = matches!(crop, CropState::Failed | CropState::Revealed(_));
        features.push(f64::from(u8::from(turn)));
        debug_assert_eq!(features.len(), self.feature_dim());
        DecodingContext {
            slot,
            features,
            legal: self.legal_tokens(slot, task.difficulty, x1, y1),
        }
    }
}

/// Per-task features shared by every decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskFeatures {
    base: Vec<f64>,
    query_cell: (usize, usize),
    difficulty: Difficulty,
}

impl TaskFeatures {
    pub fn difficulty(&self) -> Difficulty {
        self.difficulty
    }
}
