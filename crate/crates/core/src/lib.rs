//! Simulation of Izhikevich spiking networks and reconstruction of every
//! neuron's cell parameters `(a, b, c, d, u0)` and the full synaptic weight
//! matrix from recorded membrane potentials alone.
//!
//! The pieces:
//!
//! - [`model`]: discrete-time (Euler) network dynamics and recovery-variable
//!   reconstruction from a measured trace.
//! - [`network`]: seeded random network generation.
//! - [`solver`]: per-neuron least squares for incoming weights, solved via
//!   the normal equations.
//! - [`ga`]: rank-based genetic algorithm over Gray-coded 16-bit genomes.
//! - [`pipeline`]: GA + least squares per neuron, error surfaces and model
//!   comparison.
//! - [`io`]: trace CSV, model/config JSON and figure-data writers.

pub mod error;
pub mod ga;
pub mod io;
pub mod model;
pub mod network;
pub mod pipeline;
pub mod solver;

pub use error::{Error, Result};
pub use model::{NeuronParameters, NeuronState, SimulationConfig, TraceMatrix, WeightMatrix};
