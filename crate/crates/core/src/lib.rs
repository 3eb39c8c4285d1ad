//! Feedforward network training with exemplar parallelism.
//!
//! Workers train private copies of the network on disjoint example batches,
//! and a coordinator merges their weight deltas into the master network in
//! synchronous rounds.
//!
//! - [`mathcore`]: activations, elastic-net penalty, quadratic loss
//! - [`connectome`]: flat-array network state, forward and backward passes
//! - [`trainer`]: shuffling, worker batches, delta merging, evaluation
//! - [`dataio`]: MNIST loaders (IDX, gzip IDX, CSV)
//! - [`bench`]: epoch timing sweeps and speedup reporting
//! - [`cli`]: command-line driver and binary model files

pub mod bench;
pub mod cli;
pub mod connectome;
pub mod dataio;
pub mod error;
pub mod mathcore;
pub mod trainer;

pub use connectome::{Connectome, LayerTrace, WeightDelta};
pub use dataio::{Dataset, Example};
pub use error::{Error, Result};
pub use trainer::{Execution, MergeMode, TrainerConfig};
