//! Shapley payoff allocation for peer-to-peer energy sharing games.
//!
//! Prosumers with rooftop PV and home batteries pool their meters. A
//! coalition's cost is the cheapest bill it can reach by scheduling its
//! members' batteries jointly ([`energy`], solved with [`lp`]); its value is
//! the saving over everyone acting alone. [`shapley`] divides the grand
//! coalition's saving exactly or by sampling, and [`experiment`] wires
//! scenarios, runs and reports together.

pub mod cache;
pub mod clock;
pub mod coalition;
pub mod energy;
pub mod experiment;
pub mod error;
pub mod fixtures;
pub mod game;
pub mod lp;
mod par;
pub mod shapley;

pub use coalition::{Coalition, PlayerId};
pub use energy::EnergyGame;
pub use error::{Error, Result};
pub use game::CoalitionGame;
pub use shapley::{Mode, SampleBudget, ShapleyResult};
