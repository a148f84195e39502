//! Prompt-guided visual token pruning for training-free video LLMs.
//!
//! A video arrives as a dense tensor of visual tokens (`T` frames, each an
//! `H x W` grid of `D`-dimensional embeddings) together with a prompt
//! embedding living in the same space. Pruning runs in two decoupled stages:
//!
//! 1. **Temporal**: every frame is global-average-pooled and scored against
//!    the prompt by cosine similarity; the best frames survive
//!    ([`temporal`]).
//! 2. **Spatial**: inside each surviving frame the top-K tokens most similar
//!    to the prompt vote for a centroid, and a box covering `alpha` of the
//!    frame area is cropped around it ([`spatial`]).
//!
//! [`pipeline::run_pipeline`] composes both stages, [`cost`] turns token
//! counts into transformer FLOP estimates and [`synth`] plants
//! prompt-correlated content into synthetic videos to check that the sampler
//! finds it.

pub mod cost;
pub mod error;
pub mod format;
pub mod pipeline;
pub mod similarity;
pub mod spatial;
pub mod synth;
pub mod temporal;
pub mod tensor;

pub use error::{Error, Result};
pub use pipeline::{run_pipeline, PipelineConfig, Preset, SamplePlan, SampledTokens};
pub use spatial::{RoiBox, RoiConfig};
pub use temporal::{FrameSelection, TemporalStrategy};
pub use tensor::{FrameVector, GridShape, PromptEmbedding, VideoFeatures};
