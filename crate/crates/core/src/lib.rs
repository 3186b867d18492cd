//! Speedup model and tick-accurate simulator for early-exit self-speculative
//! decoding.
//!
//! Three decoding regimes are covered:
//!
//! - autoregressive decoding through a layer pipeline,
//! - draft-then-verify decoding (EESD), where the first `E` layers draft `γ`
//!   tokens and the full model verifies them in one batched pass,
//! - pipeline-parallel verify-while-draft decoding (PPSD), where the exit stage
//!   keeps drafting while the remaining stages verify earlier positions.
//!
//! [`analytic`] holds the closed-form throughput model, [`speccore`] the
//! speculative sampling primitives, [`toylm`] a deterministic layered toy model
//! producing real draft/target distributions, [`pipesim`] the simulator, and
//! [`harness`] configuration, sweeps and CSV persistence.

pub mod analytic;
pub mod error;
pub mod harness;
pub mod pipesim;
pub mod speccore;
pub mod toylm;

pub use error::{Error, Result};
