//! Networks, decoders, the cross-slot penalty and training loops.

pub mod checkpoint;
pub mod decoder;
pub mod gradcheck;
pub mod network;
pub mod optim;
pub mod penalty;
pub mod readout;
pub mod tape;
pub mod train;

pub use checkpoint::Checkpoint;
pub use decoder::{table_indices, Decoder, InteractionTable, SlotwiseDecoder};
pub use gradcheck::gradient_relative_error;
pub use network::{Activation, Network, NetworkEval};
pub use optim::{cosine_lr, Adam, AdamConfig};
pub use penalty::{hessian_penalty, hessian_penalty_tape, PenaltyConfig, PenaltyMode, PenaltyNorm};
pub use readout::{train_shared_readout, ReadoutConfig, SharedReadout};
pub use tape::{Gradients, Tape, Var};
pub use train::{
    batch_indices, gather_rows, reconstruction_mse, train_autoencoder, train_regressor, LossEntry, LossLog, TrainConfig,
};
