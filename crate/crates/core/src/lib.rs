//! Shared-latent motion retargeting.
//!
//! The pipeline has four stages:
//!
//! 1. [`robot`]: kinematic model, forward kinematics, skeleton features and
//!    feasibility predicates (joint limits, capsule self-collision).
//! 2. [`projection`] and [`sampling`]: relaxed configurations are sampled from
//!    widened joint ranges and projected onto the feasible set, which yields
//!    paired (relaxed skeleton, feasible skeleton, relaxed config, feasible
//!    config) tuples from the kinematic model alone.
//! 3. [`latent`]: per-domain Wasserstein autoencoders glued by a latent
//!    consensus loss, plus an NT-Xent contrastive term that makes the skeleton
//!    encoder invariant to projection.
//! 4. [`retarget`]: skeletons are encoded and matched against a database of
//!    feasible configurations by exact nearest-neighbour search, so every
//!    output is feasible by construction.
//!
//! [`synthetic`] reproduces the 2-D toy problem used to sanity-check the
//! contrastive term.

pub mod error;
pub mod formats;
pub mod latent;
pub mod projection;
pub mod retarget;
pub mod robot;
pub mod rng;
pub mod sampling;
pub mod synthetic;

pub use error::{Error, Result};
pub use robot::{JointConfig, Landmark, RobotModel, SkeletonFeature};
