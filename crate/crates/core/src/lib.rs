//! Selection hyper-heuristics on LeadingOnes.
//!
//! RLS_m operators, the Simple Random / Permutation / Greedy / Random
//! Gradient mechanisms, Generalised Random Gradient with a fixed learning
//! period, and Adaptive Random Gradient, which adapts the learning period
//! with a success-based rule. [`theory`] computes the best-possible
//! expected runtimes these mechanisms are measured against, and
//! [`harness`] runs seeded, reproducible batches of trials.

pub mod error;
pub mod fitness;
pub mod harness;
pub mod mechanisms;
pub mod operators;
pub mod theory;

pub use error::{Error, Result};
pub use fitness::BitString;
pub use harness::{
    run_batch, run_trial, sweep, BatchReport, BatchSummary, Engine, ExperimentConfig, MechanismSpec, SigmaSchedule,
    SweepVariant, TauSpec, TrialResult,
};
pub use mechanisms::{Mechanism, MechanismState, PhaseEvent, Selection};
pub use operators::{improvement_probability, mutate, optimal_operator, OperatorId, Portfolio};
