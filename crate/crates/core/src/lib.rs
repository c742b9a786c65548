//! Potential-destination discovery for low-predictability travelers.
//!
//! The crate turns individual origin-destination trip records into a trip
//! knowledge graph, learns a TransH-style embedding of that graph with a
//! positive-only hinge objective, ranks each traveler's unobserved zones by
//! core-triple distance and evaluates the rankings against held-out trips.
//!
//! Module map:
//!
//! - [`trip_data`]: trip parsing, temporal categories, observation/future
//!   split, per-individual statistics and target selection.
//! - [`tkg`]: entity/relation registries and the deduplicated triple set.
//! - [`embedding`]: the embedding model, losses with analytic gradients and
//!   the trainer.
//! - [`ranking`]: embedding, hotness and combined rankings.
//! - [`evaluation`]: rank distributions `U`/`H` and the metric suite.
//! - [`baselines`]: random, matrix decomposition, collaborative filtering and
//!   jump-size (EPR/PEPR) reference rankers.
//! - [`synth`]: planted-structure synthetic populations.
//! - [`pipeline`]: staged, manifest-tracked orchestration used by the CLI.

// Negated float comparisons are the NaN-rejecting form of range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod config;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod ranking;
pub mod synth;
pub mod tkg;
pub mod trip_data;
mod util;

pub use error::{Error, ErrorCategory, Result};
pub use trip_data::{VehicleId, ZoneId};
