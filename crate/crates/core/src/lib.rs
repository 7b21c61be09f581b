//! Learn security groups from flow logs and derive group-to-group firewall
//! rules.
//!
//! The flow runs ingest → features → embedding → grouping → rules, with
//! [`metrics`] scoring groups against known labels and [`synth`] producing
//! labeled scenarios. [`pipeline`] ties the stages together.

pub mod embedding;
pub mod error;
pub mod features;
pub mod grouping;
pub mod ingest;
mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod rules;
pub mod synth;

pub use error::{Error, Result};
