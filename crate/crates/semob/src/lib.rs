//! Event-conditioned spatiotemporal mobility forecasting at desk scale.
//!
//! The crate has three layers:
//!
//! - an agent pipeline that distills per-event text context from a
//!   calendar record and a tweet corpus through a pluggable completion
//!   backend (a deterministic mock ships; an HTTP chat backend is
//!   available behind `SEMOB_API_KEY`),
//! - a progressive text/time-series fusion model that conditions
//!   sensor-flow forecasts on that context, built on an in-crate
//!   reverse-mode tape,
//! - an evaluation harness with spatiotemporal slicing, ablation
//!   variants, reference baselines, and inference timing.
//!
//! Start with the runnable programs in `examples/`; each one covers a
//! major capability end to end. The thin `semob` binary wires the same
//! library calls into `synth | agents | train | eval | ablate | timing
//! | report` subcommands.

pub mod error;
pub mod fusion;
pub mod agents;
pub mod datamodel;
pub mod numerics;
pub mod textctx;

pub use error::{Error, Result};
