//! Finite symbolic models of sampled control systems with output feedback:
//! grid abstractions, refinement relations, fixed-point synthesis, knowledge
//! games, observers and detectors.

pub mod abstraction;
pub mod compose;
pub mod detector;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod knowledge;
pub mod observer;
pub mod output;
pub mod refinement;
pub mod synthesis;
pub mod system;

pub use error::{Error, Result};
pub use system::{FiniteSystem, StateSet, SystemBuilder};
