//! Differentially private spatial histograms for trajectory range queries.
//!
//! A [`SpatialHistogram`] stores, for every grid cell, how many trajectories
//! pass through it, and for every pair of neighbouring cells, how many cross
//! the shared edge. Range counts of distinct trajectories are then a
//! face-minus-edge sum over the rectangle.
//!
//! [`publish_dqam`] releases a private estimate in two stages: a noisy
//! quadtree groups cells of similar density, then a multiplicative-weights
//! loop fits the estimate to a query workload, repairing consistency
//! between faces and edges with an L1-optimal projection.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consistency;
pub mod dp;
pub mod error;
pub mod eval;
pub mod grid;
pub mod partition;
pub mod pipeline;
pub mod simplex;
pub mod synth;
pub mod trajectory;

pub use consistency::{consistent_inference, greedy_repair, is_consistent, Repair};
pub use dp::{split_budget, BudgetAccountant, NoiseSource, PrivacyBudget};
pub use error::{Error, Result};
pub use eval::{avg_l1_error, gen_queries, kld, run_experiment, EvalReport, ExperimentConfig, Mechanism, QuerySet};
pub use grid::{CellIndex, Edge, PrefixSums, RangeQuery, SpatialHistogram, CONSISTENCY_TOL};
pub use partition::{partition, PartitionSet, Region};
pub use pipeline::{publish_dqam, DqamConfig, DqamRun};
pub use synth::{synthesize, RepairMode, SynthesisConfig, SynthesisTrace};
pub use trajectory::{ingest, parse_csv, rasterize, GridSpec, RawTrajectory};
