//! Tick-accurate simulation of autoregressive, draft-then-verify and
//! verify-while-draft decoding over a layer pipeline.
//!
//! Runs are driven either by a Bernoulli acceptance coin, for checking the
//! throughput laws, or by the [`ToyLm`], for checking that the committed
//! tokens are exactly what the full model would have produced.

mod config;
mod eesd;
mod engine;
mod metrics;
mod model;
mod trace;

pub use config::PipelineConfig;
pub use engine::StageMessage;
pub use metrics::RunMetrics;
pub use model::{DecodeMode, Draft};
pub use trace::{EventTrace, MessageKind, TraceRecord, Verdict, TRACE_HEADER};

use crate::analytic::check_alpha;
use crate::error::{Error, Result};
use crate::speccore::{sample_token, RngStream, TokenId};
use crate::toylm::{ToyLm, GOLD_PREFIX_LEN};
use engine::{EngineRun, Schedule};
use model::{BernoulliModel, ToyModel};

pub(crate) const DRAFT_STREAM: u64 = 1;
pub(crate) const VERIFY_STREAM: u64 = 2;
const ORACLE_STREAM: u64 = 3;
const PROMPT_STREAM: u64 = 4;

/// Source of accept/reject decisions during a simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum AcceptanceOracle {
    /// Each verified draft is accepted independently with probability `alpha`.
    Bernoulli { alpha: f64 },
    /// Sampled drafts checked with the stochastic acceptance test.
    ToyLmSampling(ToyLm),
    /// Argmax drafts checked by argmax agreement.
    ToyLmGreedy(ToyLm),
}

impl AcceptanceOracle {
    fn validate(&self, cfg: &PipelineConfig) -> Result<()> {
        match self {
            AcceptanceOracle::Bernoulli { alpha } => check_alpha(*alpha),
            AcceptanceOracle::ToyLmSampling(lm) | AcceptanceOracle::ToyLmGreedy(lm) => check_lm(lm, cfg),
        }
    }
}

fn check_lm(lm: &ToyLm, cfg: &PipelineConfig) -> Result<()> {
    if lm.n_layers() != cfg.n_layers() {
        return Err(Error::Config(format!(
            "toy model has {} layers but the pipeline partitions {}",
            lm.n_layers(),
            cfg.n_layers()
        )));
    }
    Ok(())
}

fn check_horizon(horizon: u64) -> Result<()> {
    if horizon < 1 {
        return Err(Error::param("horizon", "must be >= 1"));
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Regime {
    Autoregressive,
    Eesd(u32),
    Ppsd,
}

fn dispatch(
    cfg: &PipelineConfig,
    oracle: &AcceptanceOracle,
    regime: Regime,
    horizon: u64,
    rng: &RngStream,
    record_trace: bool,
) -> Result<EngineRun> {
    check_horizon(horizon)?;
    oracle.validate(cfg)?;
    fn go<M: model::StageModel>(
        cfg: &PipelineConfig,
        m: &mut M,
        regime: Regime,
        prompt: &[TokenId],
        horizon: u64,
        record_trace: bool,
    ) -> Result<EngineRun> {
        match regime {
            Regime::Autoregressive => engine::run(cfg, m, Schedule::Autoregressive, prompt, horizon, record_trace),
            Regime::Ppsd => engine::run(cfg, m, Schedule::VerifyWhileDraft, prompt, horizon, record_trace),
            Regime::Eesd(gamma) => eesd::run(cfg, m, gamma, prompt, horizon, record_trace),
        }
    }
    match oracle {
        AcceptanceOracle::Bernoulli { alpha } => {
            let mut m = BernoulliModel::new(*alpha, rng.derive(ORACLE_STREAM));
            go(cfg, &mut m, regime, &[], horizon, record_trace)
        }
        AcceptanceOracle::ToyLmSampling(lm) | AcceptanceOracle::ToyLmGreedy(lm) => {
            let mode = if matches!(oracle, AcceptanceOracle::ToyLmGreedy(_)) {
                DecodeMode::Greedy
            } else {
                DecodeMode::Sampling
            };
            let prompt = lm.random_prefix(GOLD_PREFIX_LEN, &mut rng.derive(PROMPT_STREAM));
            let mut m = ToyModel::new(lm, mode, false, rng);
            go(cfg, &mut m, regime, &prompt, horizon, record_trace)
        }
    }
}

/// Baseline: each token runs all `S` stages before the next can start.
pub fn simulate_autoregressive(cfg: &PipelineConfig, horizon: u64) -> Result<RunMetrics> {
    Ok(trace_autoregressive(cfg, horizon)?.0)
}

pub fn trace_autoregressive(cfg: &PipelineConfig, horizon: u64) -> Result<(RunMetrics, EventTrace)> {
    let run = dispatch(
        cfg,
        &AcceptanceOracle::Bernoulli { alpha: 0.0 },
        Regime::Autoregressive,
        horizon,
        &RngStream::new(0),
        true,
    )?;
    Ok((run.metrics, run.trace.unwrap_or_default()))
}

/// Draft-then-verify: `γ` sequential drafts, then one batched verification
/// through all stages (or only the post-exit stages with `cache_reuse`).
/// Runs whole rounds until at least `horizon` tokens are committed.
pub fn simulate_eesd(
    cfg: &PipelineConfig,
    gamma: u32,
    oracle: &AcceptanceOracle,
    horizon: u64,
    rng: &RngStream,
) -> Result<RunMetrics> {
    Ok(dispatch(cfg, oracle, Regime::Eesd(gamma), horizon, rng, false)?.metrics)
}

pub fn trace_eesd(
    cfg: &PipelineConfig,
    gamma: u32,
    oracle: &AcceptanceOracle,
    horizon: u64,
    rng: &RngStream,
) -> Result<(RunMetrics, EventTrace)> {
    let run = dispatch(cfg, oracle, Regime::Eesd(gamma), horizon, rng, true)?;
    Ok((run.metrics, run.trace.unwrap_or_default()))
}

/// Verify-while-draft: the exit stage drafts one position per tick on top of
/// unverified drafts while later stages verify; a rejection commits the
/// corrected token, flushes everything speculated after it and refills.
pub fn simulate_ppsd(
    cfg: &PipelineConfig,
    oracle: &AcceptanceOracle,
    horizon: u64,
    rng: &RngStream,
) -> Result<RunMetrics> {
    Ok(dispatch(cfg, oracle, Regime::Ppsd, horizon, rng, false)?.metrics)
}

pub fn trace_ppsd(
    cfg: &PipelineConfig,
    oracle: &AcceptanceOracle,
    horizon: u64,
    rng: &RngStream,
) -> Result<(RunMetrics, EventTrace)> {
    let run = dispatch(cfg, oracle, Regime::Ppsd, horizon, rng, true)?;
    Ok((run.metrics, run.trace.unwrap_or_default()))
}

/// Expected verify-while-draft speedup when the draft exits after stage `k`:
/// `N / (α·kE + (1 − α)·S·E)`. Derived for the simulator's general exit
/// point; with `k = 1` it is the closed form in [`crate::analytic::ppsd_speedup`].
pub fn reference_ppsd_speedup(cfg: &PipelineConfig, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let e = cfg.exit_depth() as f64;
    let k = cfg.exit_stage().unwrap_or(cfg.n_stages()) as f64;
    let s = cfg.n_stages() as f64;
    Ok(cfg.n_layers() as f64 / (alpha * k * e + (1.0 - alpha) * s * e))
}

#[derive(Debug, Clone, Default)]
pub struct DecodeOptions {
    /// Reject every draft regardless of the distributions.
    pub force_reject: bool,
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub tokens: Vec<TokenId>,
    pub metrics: RunMetrics,
    pub trace: EventTrace,
}

/// End-to-end verify-while-draft decoding over the toy model.
pub fn decode_ppsd(
    lm: &ToyLm,
    cfg: &PipelineConfig,
    prompt: &[TokenId],
    max_tokens: u64,
    mode: DecodeMode,
    rng: &RngStream,
) -> Result<DecodeOutput> {
    decode_ppsd_with(lm, cfg, prompt, max_tokens, mode, rng, &DecodeOptions::default())
}

pub fn decode_ppsd_with(
    lm: &ToyLm,
    cfg: &PipelineConfig,
    prompt: &[TokenId],
    max_tokens: u64,
    mode: DecodeMode,
    rng: &RngStream,
    options: &DecodeOptions,
) -> Result<DecodeOutput> {
    check_lm(lm, cfg)?;
    check_prompt(lm, prompt)?;
    if max_tokens == 0 {
        return Ok(DecodeOutput {
            tokens: Vec::new(),
            metrics: Default::default(),
            trace: EventTrace::new(),
        });
    }
    let mut m = ToyModel::new(lm, mode, options.force_reject, rng);
    let run = engine::run(cfg, &mut m, Schedule::VerifyWhileDraft, prompt, max_tokens, true)?;
    Ok(DecodeOutput {
        tokens: run.tokens,
        metrics: run.metrics,
        trace: run.trace.unwrap_or_default(),
    })
}

/// End-to-end draft-then-verify decoding over the toy model.
pub fn decode_eesd(
    lm: &ToyLm,
    cfg: &PipelineConfig,
    gamma: u32,
    prompt: &[TokenId],
    max_tokens: u64,
    mode: DecodeMode,
    rng: &RngStream,
) -> Result<DecodeOutput> {
    check_lm(lm, cfg)?;
    check_prompt(lm, prompt)?;
    if max_tokens == 0 {
        return Ok(DecodeOutput {
            tokens: Vec::new(),
            metrics: Default::default(),
            trace: EventTrace::new(),
        });
    }
    let mut m = ToyModel::new(lm, mode, false, rng);
    let mut run = eesd::run(cfg, &mut m, gamma, prompt, max_tokens, true)?;
    run.tokens.truncate(max_tokens as usize);
    Ok(DecodeOutput {
        tokens: run.tokens,
        metrics: run.metrics,
        trace: run.trace.unwrap_or_default(),
    })
}

fn check_prompt(lm: &ToyLm, prompt: &[TokenId]) -> Result<()> {
    if prompt.is_empty() {
        return Err(Error::param("prompt", "must be non-empty"));
    }
    if let Some(t) = prompt.iter().find(|t| **t as usize >= lm.vocab()) {
        return Err(Error::param(
            "prompt",
            format!("token {t} outside vocab {}", lm.vocab()),
        ));
    }
    Ok(())
}

/// Reference decoder: one full-model forward per token, no pipeline.
pub fn decode_autoregressive(
    lm: &ToyLm,
    prompt: &[TokenId],
    max_tokens: u64,
    mode: DecodeMode,
    rng: &mut RngStream,
) -> Result<Vec<TokenId>> {
    check_prompt(lm, prompt)?;
    let mut seq = prompt.to_vec();
    for _ in 0..max_tokens {
        let q = lm.target_dist(&seq)?;
        seq.push(match mode {
            DecodeMode::Greedy => q.argmax(),
            DecodeMode::Sampling => sample_token(&q, rng),
        });
    }
    Ok(seq.split_off(prompt.len()))
}

#[cfg(test)]
mod tests;
