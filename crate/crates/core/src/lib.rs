//! Surrogate-assisted particle swarm search over variable-length dense blocks.
//!
//! The crate evolves the per-layer growth rates of a densely connected
//! convolutional block with a global-best particle swarm. Most candidate
//! blocks are never trained in full: a pairwise-comparison SVM, fitted on the
//! training history accumulated so far, predicts whether a particle's new
//! position would beat its personal best and skips the expensive evaluation
//! when it would not. Training itself runs against a reduced-cost dataset
//! descriptor and a pluggable trainer; a deterministic synthetic trainer with
//! a known ground-truth quality function ships with the crate so the whole
//! pipeline can be exercised and measured without a GPU.
//!
//! All numeric kernels are generic over the scalar type via [`Scalar`]
//! (`f32` or `f64`); the aliases at the crate root pin the common `f64`
//! instantiations.

pub mod analysis;
pub mod blockmodel;
pub mod dataset;
pub mod encoding;
pub mod evaluator;
pub mod history;
pub mod oracle;
pub mod plugin;
pub mod pso;
pub mod search;
pub mod surrogate;
pub mod svm;

mod hashing;
mod scalar;

pub use scalar::Scalar;

/// Position vector over `f64`, the default scalar for runs.
pub type Position = encoding::PositionVector<f64>;
/// Swarm state over `f64`.
pub type Swarm = pso::Swarm<f64>;
/// Training record over `f64`.
pub type Record = history::TrainingRecord<f64>;
/// History store over `f64`.
pub type Store = history::HistoryStore<f64>;
/// Search configuration over `f64`.
pub type Config = search::SearchConfig<f64>;
/// Run log over `f64`.
pub type Log = search::RunLog<f64>;
