//! Budgeted active data selection for driving-log corpora.
//!
//! The crate picks which clips of a large unlabeled corpus to annotate
//! under a fixed budget. A first round stratifies the corpus by scene
//! condition and ego dynamics; later rounds rank the remaining clips by how
//! much the current model's features drift from frame to frame, then trim
//! each chosen clip to the frames around a nearby agent.
//!
//! ```
//! use sead::synth::{synthesize, SynthConfig, SyntheticLearner};
//! use sead::active::{run_active_loop, LoopConfig};
//!
//! let corpus = synthesize(&SynthConfig { num_clips: 40, frames_per_clip: 10, ..Default::default() }).unwrap();
//! let learner = SyntheticLearner { corpus: &corpus };
//! let cfg = LoopConfig { total_budget_clips: 9, per_iter_clips: 3, ..Default::default() };
//! let outcome = run_active_loop(&corpus.index, &learner, &cfg).unwrap();
//! assert_eq!(outcome.log.iterations.len(), 3);
//! ```

pub mod active;
pub mod config;
pub mod corpus;
pub mod keyframe;
pub mod partition;
pub mod pipeline;
pub mod shift;
pub mod synth;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/partition.md")]
    mod partition {}
    #[doc = include_str!("../../../book/src/shift.md")]
    mod shift {}
    #[doc = include_str!("../../../book/src/keyframes.md")]
    mod keyframes {}
    #[doc = include_str!("../../../book/src/loop.md")]
    mod selection_loop {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
}
