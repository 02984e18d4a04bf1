pub mod generate;
pub mod history;
pub mod linearize;
pub mod schema;
pub mod session;

pub use generate::{
    constrained_label, sequential_generate, sequential_generate_traced, DecodeConfig, DecodeStrategy,
    GenerateError, PipelineOutput, StageScores, StageTrace, DEFAULT_MAX_RESPONSE_LEN,
};
pub use history::{
    compose_for_schema, dialogue_examples, DialogueExample, Gold, History, HistoryEntry, HistoryError,
    ResponseRecord,
};
pub use linearize::{encode_history, linearize, parse_target_spans, LinearizeError, ModelInputs, TrainingSequence, RSP_WORD};
pub use schema::{apply_ablation, AblationVariant, LossPolicy, Role, SchemaError, SegmentSchema};
pub use session::{Conversation, CueFailurePolicy, SessionConfig, SessionError, TurnRequest};
