//! Lattice random walks killed on leaving a convex cone: exact layer
//! propagation, Monte Carlo, Brownian references, and numerical checks of
//! local limit asymptotics.

pub mod brownian;
pub mod cli;
pub mod cone;
pub mod error;
pub mod exact;
pub mod frame;
pub mod mc;
pub mod par;
pub mod reduite;
pub mod special;
pub mod verify;
pub mod walk_model;

pub use cone::ConeSpec;
pub use error::{Error, Result};
pub use frame::Frame;
pub use walk_model::StepDistribution;
