//! Classification and comparison of labeled mobile app traffic captures.
//!
//! The pipeline reads classic pcap files ([`ingest`]), resolves each packet's
//! application protocol with per-flow state ([`classify`]), correlates TLS
//! flows with NSS key logs ([`keylog`]), handles the labeled dataset layout
//! ([`dataset`]) and aggregates statistics ([`analytics`]). [`synth`] builds
//! deterministic fixture captures and [`cli`] wraps it all in a command-line
//! tool.

pub mod analytics;
pub mod classify;
pub mod cli;
pub mod dataset;
pub mod ingest;
pub mod keylog;
pub mod report;
pub mod synth;
