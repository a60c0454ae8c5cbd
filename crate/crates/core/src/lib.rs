//! Uncertainty-aware score distribution learning for action quality assessment.
//!
//! A scalar quality label is turned into a discretized, truncated soft
//! distribution over a bounded score axis ([`distgen`]). A small MLP head runs
//! over per-segment clip features, pools over time and emits a softmax
//! distribution trained with KL divergence ([`nethead`]). The multi-path
//! variant trains one head per rank-sorted judge and fuses the decoded judge
//! scores with the sport's rule, e.g. trimmed sum times difficulty degree
//! ([`multipath`]). Evaluation uses Spearman's rank correlation, Fisher-z
//! averaging and cumulative score curves ([`metrics`]).
//!
//! [`dataio`] covers the on-disk formats and a synthetic judged-dataset
//! generator; [`cli`] wires everything into reproducible `train` / `eval` /
//! `infer` / `plot-data` runs.

#![forbid(unsafe_code)]

pub mod cli;
pub mod dataio;
pub mod distgen;
pub mod error;
pub mod metrics;
pub mod multipath;
pub mod nethead;
mod textio;

pub use error::{Error, Result};
