//! Simulation toolkit for a principal who learns agents' utilities through
//! payments and then steers no-regret agents toward an optimal correlated
//! equilibrium with payments.

pub mod agents;
pub mod audit;
pub mod config;
pub mod equilibrium;
pub mod error;
pub mod experiment;
pub mod game;
pub mod lp;
pub mod parallel;
pub mod principal;
pub mod protocol;
pub mod rng;
pub mod steering;
pub mod transcript;

pub use error::{Error, Result};
pub use game::{ActionProfile, GameShape, LearnedUtilities, NormalFormGame};
