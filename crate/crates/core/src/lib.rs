//! Quantum extensions of zero-temperature Glauber dynamics on a periodic
//! Ising chain: local Kraus channels, exact and trajectory evolution,
//! observables, and finite-size scaling analysis.

pub mod channels;
pub mod config;
pub mod error;
pub mod exact;
pub mod io;
pub mod observables;
pub mod scaling;
pub mod site;
pub mod traj;

pub use channels::{LocalChannel, Variant};
pub use config::{ChainGeometry, SpinConfig};
pub use error::{Error, Result};
pub use exact::{DensityMatrix, Mode, Schedule};
