//! Element-centric, event-sourced QA digital twin for construction.
//!
//! Records flow through [`ingest`] into the [`engine`], which keeps per-element
//! QA state, gates work on the [`domain::ElementGraph`], and logs every state
//! change to an append-only audit trail. [`maturity`] and [`rules`] supply the
//! evidence evaluations; [`learning`] closes the loop between predicted and
//! measured strength; [`simulator`] generates deterministic synthetic projects.

pub mod domain;
pub mod ingest;
pub mod maturity;
pub mod rules;
pub mod engine;
pub mod learning;
pub mod simulator;
