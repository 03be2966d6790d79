//! Demographic coherence auditing.
//!
//! Runs the randomized split-and-compare experiment against a data release
//! pipeline (curator followed by learner), estimates its incoherence
//! probability `β`, and evaluates the closed-form bounds that turn
//! differential privacy and max-information budgets into coherence
//! guarantees.

pub mod bounds;
pub mod cli;
pub mod concentration;
pub mod data;
pub mod error;
pub mod experiment;
pub mod mechanisms;
pub mod metric;
pub mod numeric;
pub mod stats;

pub use data::{
    Collection, Conjunction, Dataset, EmpiricalDistribution, Lens, Predictor, Record, Schema, Split, Subpopulation,
    Value,
};
pub use error::{Error, Result};
pub use experiment::{AuditConfig, AuditReport, BetaEstimate, TrialOutcome, Verdict};
pub use mechanisms::{Curator, Learner, Report};
