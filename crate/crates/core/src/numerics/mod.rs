//! Minimal reverse-mode differentiation with the recurrent layers, dropout
//! and optimizer the lemmatizers need.

mod gradcheck;
mod graph;
mod layers;
mod optim;
mod tensor;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use graph::{log_softmax, sigmoid, softmax, Graph, Var};
pub use layers::{
    bidirectional_rnn, dropout_values, gru_cell, gru_sequence, softmax_cross_entropy, BiGruParams,
    BiRnnOutput, Dropout, DropoutMode, GruParams,
};
pub use optim::{
    adam_step, non_improving_streak, plateau_lr_schedule, AdamConfig, OptimizerState,
    ScheduleVariant,
};
pub use tensor::{Gradients, ParamId, ParameterSet, Tensor, CHECKPOINT_MAGIC};
