//! Deterministic simulator for group-fair federated learning.
//!
//! The crate trains small multilayer perceptrons over data that is split
//! across simulated clients, where every sample additionally belongs to a
//! demographic group. Besides the classic FedAvg baseline it implements a
//! family of minimax procedures that reweight groups (or clients) on the
//! fly so that the worst-off group's risk is driven down:
//!
//! * [`algorithms::fedminmax_run`] — federated minimax over group weights,
//! * [`algorithms::centralized_minmax_run`] — the same saddle-point update
//!   computed on pooled data,
//! * [`algorithms::localfedminmax_run`] — minimax over per-(group, client)
//!   cells,
//! * [`algorithms::afl_run`] — agnostic federated learning over client
//!   weights,
//! * [`algorithms::fedavg_run`] — standard federated averaging.
//!
//! Everything is seeded and single-threaded: the same configuration always
//! reproduces the same parameter trajectory, metric files included.
//!
//! The numeric kernels are generic over the floating-point type through
//! [`scalar::Scalar`]; the aliases below fix the default `f64` instantiation
//! used by the command-line front end.

pub mod algorithms;
pub mod analysis;
pub mod data;
pub mod error;
pub mod model;
pub mod optim;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar type used by the command-line tools.
pub type Real = f64;

/// Flat parameter vector over the default scalar.
pub type RealParams = model::ParamVector<Real>;

/// Grouped dataset over the default scalar.
pub type RealDataset = data::GroupedDataset<Real>;

/// Client shard over the default scalar.
pub type RealShard = data::ClientShard<Real>;

/// Simplex weight vector over the default scalar.
pub type RealWeights = optim::SimplexWeights<Real>;

/// Training trace over the default scalar.
pub type RealTrace = algorithms::TrainingTrace<Real>;
