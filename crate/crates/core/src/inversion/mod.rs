//! Out-of-domain inversion of a trained decoder: per-point latent search and
//! encoder retraining on recombined in-domain slots.

pub mod replay;
pub mod search;

pub use replay::{replay_loss, replay_train, RecombinationSampler, ReplayConfig, ReplayLog};
pub use search::{residuals, search_invert, SearchConfig, SearchResult};
