//! Topological quantification of indentation-patterned surface textures.
//!
//! Surfaces are grayscale depth maps ([`ScalarGrid`]). Strike depth is scored
//! from sublevel 0-dimensional persistence, strike roundness from 1-dimensional
//! persistence of distance-transformed threshold images, and both are compared
//! against closed-form nominal distributions with the 1D earth mover's distance.

pub mod dtx;
pub mod error;
pub mod grid;
pub mod nominal;
pub mod persistence;
pub mod pipeline;
pub mod reference;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{BinaryGrid, GridFormat, ScalarGrid};
pub use nominal::NominalModel;
pub use persistence::{Connectivity, Diagram, PersistencePair};
pub use scoring::{LifetimeDistribution, RoundnessCurve, ScoreReport};
pub use synth::ProcessParams;
