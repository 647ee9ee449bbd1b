//! Simulation lab for interactive classification with a noisy labeling
//! oracle and a noisy pairwise-comparison oracle.
//!
//! The crate is organised around the learners and the machinery they need:
//!
//! * [`oracle`] simulates instance distributions and the two oracles under
//!   every supported noise model, with exact query accounting.
//! * [`adgac`] labels a pool by ranking it with comparisons and then binary
//!   searching the sign change over groups with small label batches.
//! * [`hypothesis`] holds finite hypothesis classes, version spaces and the
//!   disagreement region.
//! * [`a2`] is the disagreement-based learner that uses [`adgac`] to label.
//! * [`margin`] is the margin-based halfspace learner built on hinge-loss
//!   minimisation inside a shrinking ball.
//! * [`theory`] numerically checks the minimax comparison-noise results.
//! * [`experiment`] runs seeded trial batteries, the label-only baselines,
//!   and writes CSV reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod a2;
pub mod constants;
pub mod adgac;
pub mod error;
pub mod experiment;
pub mod hypothesis;
pub mod label;
pub mod margin;
pub mod oracle;
pub mod theory;
pub mod vector;

pub use error::{Error, Result};
pub use label::Label;
pub use oracle::{
    ComparisonNoise, ComparisonOracle, Distribution, GroundTruth, LabelNoise, LabelOracle,
    QueryCounters, Scenario, ScenarioSpec, SimOracle,
};
