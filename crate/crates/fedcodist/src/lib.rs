//! Deterministic desk-scale simulator for heterogeneous federated learning
//! with bidirectional server-side codistillation.
//!
//! A small model trains with FedAvg on the full client pool while a large
//! model trains on a high-capacity sub-pool; the two exchange knowledge
//! through unlabeled distillation data held on the server, either as a
//! periodic standalone phase (`PeriodicCodist`) or by merging a norm-rescaled
//! distillation gradient into every round's server update (`MergedCodist`).
//!
//! Everything is seeded: a run is a pure function of its config, down to the
//! bytes of the metrics CSV.
//!
//! Module map:
//! - [`numerics`]: dense MLP forward/backward, temperature softmax, KL loss,
//!   mixup.
//! - [`optim`]: SGD, bias-corrected Adam, linear LR decay, moment reset.
//! - [`fedcore`]: client pools, sampling, local training, aggregation,
//!   FedAvg rounds.
//! - [`codist`]: target construction, distillation, gradient merging, and
//!   the two codistillation strategies.
//! - [`data`]: synthetic tasks, Dirichlet partitioning, pool splits,
//!   distillation sets, dataset export/import.
//! - [`harness`]: config files, experiment execution, metrics CSV, sweeps.

// Validation uses `!(x > 0.0)` on purpose: unlike `x <= 0.0` it also
// rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codist;
pub mod data;
pub mod error;
pub mod fedcore;
pub mod harness;
pub mod numerics;
pub mod optim;
pub mod rng;

pub use error::{Error, Result};
