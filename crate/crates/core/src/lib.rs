//! Multimodal emotional support conversation: corpus tooling, audio-visual
//! cue extraction, the sequential reasoning pipeline, a small seq2seq
//! transformer and the evaluation harness.

pub mod canonical;
pub mod corpus;
pub mod cues;
pub mod eval;
pub mod model;
pub mod reasoning;
pub mod scalar;

pub use scalar::Scalar;

pub type Transformer32 = model::Transformer<f32>;
pub type Transformer64 = model::Transformer<f64>;
pub type ParamStore32 = model::ParamStore<f32>;
pub type ParamStore64 = model::ParamStore<f64>;
