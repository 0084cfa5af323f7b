pub mod balance;
pub mod dft;
pub mod domain;
pub mod electrostatics;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod neighbor;
pub mod potential;
pub mod simnet;
pub mod system;
pub mod validation;

pub use error::{Error, Result};
pub use geometry::{SimulationBox, Vec3};
