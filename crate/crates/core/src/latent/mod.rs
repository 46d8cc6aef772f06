//! Shared latent space between skeleton features and joint configurations.
//!
//! Each domain has an autoencoder whose latent distribution is pushed
//! towards a standard normal prior by an adversarial discriminator. The two
//! latent spaces are glued with a consensus loss on paired data, and an
//! NT-Xent term pulls a relaxed skeleton and its projected, feasible
//! counterpart onto the same latent direction.

mod checkpoint;
pub mod losses;
mod mlp;
mod network;
mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use mlp::{Dense, Mlp, Trace};
pub use network::{
    Architecture, Domain, LatentVector, NetId, NetworkGrads, NetworkSet, WaeTerms,
};
pub use train::{
    initial_networks, train, train_dataset, LossWeights, MixupMode, Optimizer, StepLosses,
    TrainConfig, TrainingData,
};
