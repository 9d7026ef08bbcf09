//! Certification pipeline for generated multiple-choice assessment items.
//!
//! Items pass through an independent taxonomy verifier, a rationale
//! checker, and a governance screen; the certifier combines the results
//! into a Green / Yellow / Red label and a certification record, and every
//! step is written to a hash-chained audit ledger.

pub mod api;
pub mod canonical;
pub mod certifier;
pub mod clock;
pub mod codec;
pub mod config;
pub mod connectors;
pub mod governance;
pub mod ledger;
pub mod model;
pub mod pipeline;
pub mod rationale;
pub mod report;
pub mod store;
pub mod taxonomy;
