//! Early detection of conflicting changes across concurrently active pull
//! requests.
//!
//! The crate is organized around the detection pipeline:
//!
//! - [`config`] and [`event`] define settings and the ingestion unit,
//! - [`filters`] holds the eligibility rules,
//! - [`overlap`] and [`rce`] compute the two heuristics,
//! - [`detector`] selects and ranks candidate PR pairs,
//! - [`service`] maintains per-repository state, persistence and the HTTP API,
//! - [`analysis`] measures how concurrent edits relate to later bug fixes.

pub mod analysis;
pub mod config;
pub mod detector;
pub mod event;
pub mod filters;
pub mod model;
pub mod overlap;
pub mod rce;
pub mod service;

pub use config::{parse_config, RepoConfig};
pub use detector::{evaluate, DetectionResult};
pub use event::{validate_event, PullRequestEvent};
pub use model::{ActivePullRequest, Candidate};
