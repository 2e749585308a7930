//! Simulation laboratory for online facility location and two of its variants:
//! weighted requests and congestion.
//!
//! The crate provides
//!
//! - metric spaces (explicit matrices, weighted trees, lines, Euclidean point
//!   sets) with axiom validation and fast distance queries ([`metric`]),
//! - request-stream instances, adversarial lower-bound generators, random
//!   workloads and secretarial shuffling, with a JSON file format ([`instance`]),
//! - the online algorithms RFL, WRFL and MRFL plus trivial baselines, run as
//!   explicit step functions over a facility state with a three-way cost
//!   ledger and a replayable event trace ([`online`]),
//! - exact and bounded offline optima: brute-force facility-set search,
//!   congestion-aware assignment via min-cost flow, a line-metric DP, and
//!   certified lower bounds ([`offline`]),
//! - the Selection Process over random permutations: exact enumeration,
//!   Monte Carlo, the coin-matrix reformulation, record statistics and the
//!   square-root block counterexample ([`selection`]),
//! - a seeded, reproducible experiment runner emitting CSV/JSON result
//!   tables ([`experiment`]).
//!
//! Everything randomized is driven by explicit `u64` seeds; identical seeds
//! reproduce ledgers, traces and result tables byte for byte.

// Validation code uses `!(x > 0.0)` on purpose: the negation rejects NaN
// along with non-positive values. Matrix axiom checks index by row/column.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod experiment;
pub mod instance;
pub mod metric;
pub mod offline;
pub mod online;
pub mod rng;
pub mod selection;
pub mod stats;

mod flow;

pub use error::Error;
pub use instance::{CongestionFn, Instance, InstanceMetadata, Request};
pub use metric::{Distances, MetricSpace, PointRef};
pub use offline::{Exactness, OfflineSolution};
pub use online::{AlgorithmSpec, CostLedger, FacilityRecord, RunTrace, TraceEvent};

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
