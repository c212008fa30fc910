//! Toolkit for cascaded speech-to-text translation experiments.
//!
//! The crate covers the whole harness around an ASR → restoration → MT
//! cascade: text degradation, corpus filtering, a native statistical
//! punctuation/segmentation restorer, pluggable pipeline stages,
//! scenario runs with full stage traces, scoring kernels, inter-rater
//! agreement and report tables.
//!
//! See the `examples/` directory of this crate for one runnable program
//! per capability.

pub mod adapters;
pub mod agreement;
pub mod corpus;
pub mod fsutil;
pub mod metrics;
pub mod report;
pub mod restore;
pub mod scenarios;
pub mod textcore;

pub use textcore::{normalize, DegradeMode, NormalizedText, PunctClass};
