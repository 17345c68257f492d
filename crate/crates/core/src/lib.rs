//! Expected job completion time of MDS-coded distributed jobs executed in
//! batch generations, and the batch size / code rate that minimize it.
//!
//! A job of `J` computing units (CUs) is split into `k` equal tasks, encoded
//! onto `n` workers, and executed in `G = s / b` generations of `b` CUs each.
//! A generation finishes when the `k`-th fastest worker finishes its batch.
//!
//! Three estimators are provided: Monte Carlo ([`simulator`]), exact
//! finite-`n` quadrature / enumeration, and the large-`n` closed form
//! ([`analytic`]). [`optimizer`] searches the feasible policies and
//! [`experiments`] drives configs, presets and CSV/JSON output.

pub mod analytic;
pub mod error;
pub mod experiments;
pub mod optimizer;
pub mod service;
pub mod simulator;
pub mod special;

pub use error::{Error, Result};
pub use service::{BatchTaskLaw, ServiceModel};
pub use simulator::{CompletionEstimate, Method, Policy, SystemSpec};
