//! Emotion-vector extraction and residual-stream steering for GPT-2 class
//! models.
//!
//! The crate bundles a small hook-capable GPT-2 engine ([`model`]), a
//! byte-level BPE tokenizer, a stimulus corpus format, mean-difference
//! emotion vectors, steering sweeps with dose-response annotations, and
//! the separation statistics used to compare extraction methods.

pub mod analysis;
pub mod error;
pub mod extraction;
pub mod model;
pub mod stats;
pub mod steering;
pub mod stimuli;
pub mod tokenizer;

pub use error::{Error, Result};
pub use extraction::{EmotionVector, EmotionVectorSet, ExtractionConfig, Method};
pub use model::{ActivationTrace, Gpt2Config, InterventionSpec, LayerSelection, ModelHandle};
pub use steering::{Scenario, SteeringConfig, SweepOutcome, SweepPoint};
pub use stimuli::StimulusCorpus;
pub use tokenizer::Tokenizer;
