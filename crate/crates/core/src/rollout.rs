//! Trajectory sampling under the behavior policy.
//!
//! A trajectory is either a direct answer `[THINK, ANSWER, END]` or a tool call
//! `[THINK, TOOL, x1, y1, x2, y2, THINK, ANSWER, END]`. The crop is applied
//! between the two turns and feeds the second turn's context.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{apply_crop, count_visual_tokens, BBox, TaskInstance};
use crate::error::{LabError, Result};
use crate::policy::{CropState, DecodingContext, Grammar, PolicyParams, Slot, TaskFeatures, Token};
use crate::seeding::derive_seed;

/// Length of the first turn of a tool call.
pub const TOOL_TURN_LEN: usize = 6;
pub const DIRECT_LEN: usize = 3;
pub const TOOL_CALL_LEN: usize = 9;

/// One sampled response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    #[serde(rename = "task_seed")]
    pub task_ref: u64,
    pub tokens: Vec<usize>,
    /// Number of first-turn (tool) tokens; 0 for a direct answer.
    #[serde(rename = "T")]
    pub turn_boundary: usize,
    pub old_logprobs: Vec<f64>,
    pub bbox: Option<BBox>,
    pub answer: usize,
    pub n_img: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_tool_call(&self) -> bool {
        self.turn_boundary > 0
    }

    /// Decoding contexts of every position, rebuilt from the task and tokens.
    pub fn contexts(&self, grammar: &Grammar, task: &TaskInstance) -> Result<Vec<DecodingContext>> {
        let mut episode = Episode::new(grammar, task);
        let mut out = Vec::with_capacity(self.tokens.len());
        for &t in &self.tokens {
            let ctx = episode
                .context()
                .ok_or_else(|| LabError::Format("trajectory continues past END".into()))?;
            episode.push(t)?;
            out.push(ctx);
        }
        if !episode.is_done() {
            return Err(LabError::Format("trajectory ends before END".into()));
        }
        Ok(out)
    }
}

/// `G` trajectories sampled for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupBatch {
    pub task: TaskInstance,
    pub trajectories: Vec<Trajectory>,
}

impl GroupBatch {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Grammar-driven decoding state for one episode.
pub struct Episode<'a> {
    grammar: &'a Grammar,
    task: &'a TaskInstance,
    features: TaskFeatures,
    slot: Option<Slot>,
    tokens: Vec<usize>,
    coords: Vec<u8>,
    crop: CropState,
    bbox: Option<BBox>,
    answer: Option<usize>,
}

impl<'a> Episode<'a> {
    pub fn new(grammar: &'a Grammar, task: &'a TaskInstance) -> Self {
        Self {
            grammar,
            task,
            features: grammar.task_features(task),
            slot: Some(Slot::Think1),
            tokens: Vec::with_capacity(TOOL_CALL_LEN),
            coords: Vec::with_capacity(4),
            crop: CropState::Pending,
            bbox: None,
            answer: None,
        }
    }

    pub fn is_done(&self) -> bool {
        self.slot.is_none()
    }

    /// Context for the next token, or `None` once END has been emitted.
    pub fn context(&self) -> Option<DecodingContext> {
        let slot = self.slot?;
        let x1 = self.coords.first().copied();
        let y1 = self.coords.get(1).copied();
        Some(self.grammar.context(&self.features, slot, &self.crop, x1, y1))
    }

    pub fn push(&mut self, token: usize) -> Result<()> {
        let slot = self
            .slot
            .ok_or_else(|| LabError::Format("token after END".into()))?;
        let x1 = self.coords.first().copied();
        let y1 = self.coords.get(1).copied();
        if !self.grammar.legal_tokens(slot, self.features.difficulty(), x1, y1).contains(&token) {
            return Err(LabError::IllegalToken {
                token,
                slot: slot.name(),
            });
        }
        self.tokens.push(token);
        let vocab = &self.grammar.vocab;
        self.slot = match slot {
            Slot::Think1 => Some(Slot::Decision),
            Slot::Decision if token == vocab.tool() => Some(Slot::X1),
            Slot::Decision | Slot::Answer => {
                self.answer = Some(token);
                Some(Slot::End)
            }
            Slot::X1 | Slot::Y1 | Slot::X2 | Slot::Y2 => {
                let Some(Token::Coord(c)) = vocab.decode(token) else {
                    unreachable!("grammar admits only coordinates here")
                };
                self.coords.push(c);
                if slot == Slot::Y2 {
                    let [x1, y1, x2, y2] = [0, 1, 2, 3].map(|i| self.coords[i] as i32);
                    let bbox = BBox::new(x1, y1, x2, y2);
                    self.crop = match apply_crop(self.task, &bbox) {
                        Ok(view) => CropState::Revealed(view),
                        Err(_) => CropState::Failed,
                    };
                    self.bbox = Some(bbox);
                    Some(Slot::Think2)
                } else {
                    Some(Slot::ALL[slot.index() + 1])
                }
            }
            Slot::Think2 => Some(Slot::Answer),
            Slot::End => None,
        };
        Ok(())
    }

    /// Runs the episode to completion, choosing each token with `choose` and
    /// recording its log-probability under `params`.
    fn run(
        mut self,
        params: &PolicyParams,
        mut choose: impl FnMut(&DecodingContext) -> Result<usize>,
    ) -> Result<Trajectory> {
        let mut logprobs = Vec::with_capacity(TOOL_CALL_LEN);
        while let Some(ctx) = self.context() {
            let token = choose(&ctx)?;
            logprobs.push(params.token_logprob(&ctx, token)?);
            self.push(token)?;
        }
        let turn_boundary = if self.bbox.is_some() { TOOL_TURN_LEN } else { 0 };
        let n_img = count_visual_tokens(self.task, self.bbox.is_some(), self.bbox.as_ref());
        Ok(Trajectory {
            task_ref: self.task.seed,
            tokens: self.tokens,
            turn_boundary,
            old_logprobs: logprobs,
            bbox: self.bbox,
            answer: self.answer.expect("finished episode has an answer"),
            n_img,
        })
    }
}

/// Samples one trajectory at `temperature`.
pub fn sample_trajectory<R: Rng + ?Sized>(
    params: &PolicyParams,
    grammar: &Grammar,
    task: &TaskInstance,
    temperature: f64,
    rng: &mut R,
) -> Trajectory {
    Episode::new(grammar, task)
        .run(params, |ctx| Ok(params.sample_token(ctx, temperature, rng)))
        .expect("sampled tokens are grammar-legal")
}

/// Argmax decoding.
pub fn greedy_trajectory(params: &PolicyParams, grammar: &Grammar, task: &TaskInstance) -> Trajectory {
    Episode::new(grammar, task)
        .run(params, |ctx| Ok(params.greedy_token(ctx)))
        .expect("greedy tokens are grammar-legal")
}

/// Scores a given token sequence under `params` (teacher forcing).
pub fn replay_trajectory(
    params: &PolicyParams,
    grammar: &Grammar,
    task: &TaskInstance,
    tokens: &[usize],
) -> Result<Trajectory> {
    let mut it = tokens.iter().copied();
    let traj = Episode::new(grammar, task).run(params, |_| {
        it.next()
            .ok_or_else(|| LabError::Format("token sequence ends before END".into()))
    })?;
    if it.next().is_some() {
        return Err(LabError::Format("tokens after END".into()));
    }
    Ok(traj)
}

/// What a token sequence implies under the grammar, independent of any policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Structure {
    pub turn_boundary: usize,
    pub bbox: Option<BBox>,
    pub answer: usize,
    pub n_img: usize,
}

/// Parses a complete token sequence; errors on illegal or incomplete input.
pub fn parse_structure(grammar: &Grammar, task: &TaskInstance, tokens: &[usize]) -> Result<Structure> {
    let mut episode = Episode::new(grammar, task);
    for &token in tokens {
        episode.push(token)?;
    }
    if !episode.is_done() {
        return Err(LabError::Format("token sequence ends before END".into()));
    }
    let tool = episode.bbox.is_some();
    Ok(Structure {
        turn_boundary: if tool { TOOL_TURN_LEN } else { 0 },
        bbox: episode.bbox,
        answer: episode.answer.expect("finished episode has an answer"),
        n_img: count_visual_tokens(task, tool, episode.bbox.as_ref()),
    })
}

/// Samples `group_size` trajectories; member `i` draws from its own stream
/// derived from one value taken from `rng`.
pub fn sample_group<R: Rng + ?Sized>(
    params: &PolicyParams,
    grammar: &Grammar,
    task: &TaskInstance,
    group_size: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<GroupBatch> {
    if group_size < 2 {
        return Err(LabError::Precondition(format!(
            "group size must be at least 2, got {group_size}"
        )));
    }
    let base = rng.gen::<u64>();
    let trajectories = (0..group_size)
        .into_par_iter()
        .map(|i| {
            let mut member_rng = ChaCha8Rng::seed_from_u64(derive_seed(base, &[i as u64]));
            sample_trajectory(params, grammar, task, temperature, &mut member_rng)
        })
        .collect();
    Ok(GroupBatch {
        task: task.clone(),
        trajectories,
    })
}

/// Zero-based token ranges `(tool, answer)` covering `0..N`.
pub fn partition_turns(traj: &Trajectory) -> (Range<usize>, Range<usize>) {
    let t = traj.turn_boundary;
    (0..t, t..traj.tokens.len())
}
