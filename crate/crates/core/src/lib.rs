//! Turn-decoupled group-relative policy optimization lab.
//!
//! A small token policy learns, on a synthetic glyph question-answering task,
//! when to answer from a downsampled view and when to request a crop of the
//! full-resolution grid. Two trainers are provided: vanilla GRPO and DTPO,
//! which normalizes tool-turn and answer-turn tokens separately and gives tool
//! tokens their own advantage.
//!
//! Modules, bottom up:
//!
//! - [`env`]: tasks, low-res rendering, the crop tool and the judges.
//! - [`policy`]: vocabulary, grammar, featurization and the perceptron policy.
//! - [`rollout`]: trajectory and group sampling.
//! - [`rewards`]: outcome, balance, crop and relative-area rewards.
//! - [`advantage`]: GRPO and DTPO advantages.
//! - [`optim`]: clipped surrogate objectives, KL estimate, AdamW.
//! - [`harness`]: training loop, evaluation, CSV/SVG/JSONL outputs and audit.

pub mod advantage;
pub mod env;
pub mod error;
pub mod harness;
pub mod optim;
pub mod policy;
pub mod rewards;
pub mod rollout;
pub mod seeding;

pub use error::{LabError, Result};
