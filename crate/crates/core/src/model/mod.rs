pub mod adapter;
pub mod checkpoint;
pub mod config;
pub mod generator;
pub mod gradcheck;
pub mod loss;
pub mod ops;
pub mod optim;
pub mod train;
pub mod transformer;
pub mod vocab;

pub use adapter::{
    from_checkpoint, generator_adapter, ExternalGenerator, ExternalGeneratorConfig, GeneratorHandle, GeneratorSource, Precision,
    RandomGenerator,
    ScriptedGenerator, UniformGenerator,
};
pub use checkpoint::{Checkpoint, CheckpointError, TrainingMeta, CHECKPOINT_VERSION};
pub use config::{ConfigError, ModelConfig};
pub use generator::{Generator, GeneratorError};
pub use gradcheck::{gradient_check, relative_error, GradCheckError, GradCheckReport};
pub use loss::{nll_loss, LossError, NllLoss};
pub use optim::{Adam, AdamConfig};
pub use train::{
    build_vocab, example_inputs, loss_curve_csv, prepare_examples, teacher_forced_label_accuracy, train, TrainError,
    TrainOptions, TrainOutcome,
};
pub use transformer::{Dropout, ForwardCache, ForwardError, ParamStore, Tensor, Transformer};
pub use vocab::{TokenId, Vocab, VocabError};
