//! Mesh-based stability and robustness analysis for cyclic walking systems.
//!
//! The pipeline discretizes the reachable Poincaré-section state space of a
//! walker under a feedback policy and a finite set of push disturbances,
//! assembles the induced stochastic transition matrix, and reports
//! metastability metrics: mean first-passage time, metastable distribution,
//! failure-step statistics, disturbance sensitivities, and the dimensionality
//! of the reachable manifold.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod markov;
pub mod meshing;
pub mod geometry;

pub use error::{Error, Result};
