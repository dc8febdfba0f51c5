//! Source credibility and groundedness metrics for web-search chat assistant
//! transcripts.
//!
//! The pipeline runs in four stages, each usable on its own:
//!
//! - [`corpus`]: claims, prompt templates and the job grid.
//! - [`transcript`]: archived conversations normalized into canonical
//!   transcripts with segment-to-citation links.
//! - [`credibility`]: domain ratings, CR/NCR with Agresti–Coull intervals,
//!   citation statistics.
//! - [`evidence`] and [`groundedness`]: cited-document retrieval, unit
//!   judging, and GS/CG/NCG/HS.
//!
//! [`backend`] holds every network client; [`report`] implements the CLI
//! commands.

pub mod backend;
pub mod corpus;
pub mod credibility;
pub mod evidence;
pub mod groundedness;
pub mod report;
pub mod transcript;

pub use report::{CliError, RunConfig};
