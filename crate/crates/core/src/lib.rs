//! Graph Koopman autoencoder for multi-UAV trajectory prediction, and uniform
//! transmit-power planning for a ground ad-hoc network that must stay below a
//! received-power detection threshold at the predicted UAV positions.
//!
//! The crate is organised bottom-up:
//!
//! - [`dynamics`]: coupled fixed-wing swarm simulator under constant wind.
//! - [`channel`]: terrestrial SNR / link sets and air-ground received power.
//! - [`swarmgraph`]: trajectories turned into normalized graph snapshots.
//! - [`model`]: SAGE graph encoder, latent Koopman autoencoder and rollout.
//! - [`train`]: reconstruction/prediction losses, exact gradients, Adam.
//! - [`lpd`]: closed-form uniform power plan, brute-force oracle, connectivity.

pub mod channel;
pub mod dynamics;
pub mod error;
pub mod lpd;
pub mod model;
pub mod swarmgraph;
pub mod train;

pub use error::{Error, Result};
