//! Configuration and orchestration of end-to-end runs comparing inference
//! strategies on shared data.

pub mod config;
pub mod run;

pub use config::{
    Arm, AutoencoderConfig, DataConfig, DecoderConfig, EncoderConfig, ExperimentConfig, GeneratorConfig, GridConfig,
    RunSeeds, StageSeeds, TheorySummaryConfig,
};
pub use run::{
    build_dense_decoder, build_encoder, build_slotwise_decoder, encode_inferred, prepare_data, replay_encoder,
    run_experiment, run_seed, score_inferred, search_inferred, train_best_autoencoder, train_supervised_encoder,
    write_experiment, ArmOutcome, ArmStatus, ArmSummary, ExperimentOutput, ExperimentReport, Inferred, RunData,
    SearchSummary, SeedArtifacts, TheorySummary, TrainedAutoencoder,
};
