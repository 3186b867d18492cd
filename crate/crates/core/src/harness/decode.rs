use super::config::{ExperimentConfig, OracleKind, Regime};
use crate::error::{Error, Result};
use crate::pipesim::{self, DecodeMode, DecodeOptions, EventTrace, RunMetrics};
use crate::speccore::TokenId;
use crate::toylm::GOLD_PREFIX_LEN;

const PROMPT_STREAM: u64 = 0x9e;
const REFERENCE_STREAM: u64 = 0x9f;

#[derive(Debug, Clone)]
pub struct DecodeReport {
    pub prompt: Vec<TokenId>,
    pub tokens: Vec<TokenId>,
    /// Plain full-model decoding of the same prompt.
    pub reference: Vec<TokenId>,
    pub metrics: RunMetrics,
    pub trace: EventTrace,
}

impl DecodeReport {
    pub fn matches_reference(&self) -> bool {
        self.tokens == self.reference
    }
}

/// Decode `horizon` tokens with the toy model under the configured regime.
/// Without an explicit prompt a random gold prefix is drawn from the seed.
pub fn decode(config: &ExperimentConfig, prompt: Option<&[TokenId]>, force_reject: bool) -> Result<DecodeReport> {
    config.validate()?;
    let mode = match config.oracle {
        OracleKind::ToylmGreedy => DecodeMode::Greedy,
        OracleKind::ToylmSampling => DecodeMode::Sampling,
        OracleKind::Bernoulli => return Err(Error::param("oracle", "decoding needs a toylm oracle")),
    };
    if force_reject && config.regime != Regime::Ppsd {
        return Err(Error::param("force_reject", "only supported for the ppsd regime"));
    }
    let lm = config.toy_lm()?;
    let pipeline = config.pipeline()?;
    let rng = config.sim_rng();
    let prompt = match prompt {
        Some(p) => p.to_vec(),
        None => lm.random_prefix(GOLD_PREFIX_LEN, &mut rng.derive(PROMPT_STREAM)),
    };
    let horizon = config.horizon;
    let reference = pipesim::decode_autoregressive(&lm, &prompt, horizon, mode, &mut rng.derive(REFERENCE_STREAM))?;
    let out = match config.regime {
        Regime::Ppsd => pipesim::decode_ppsd_with(
            &lm,
            &pipeline,
            &prompt,
            horizon,
            mode,
            &rng,
            &DecodeOptions { force_reject },
        )?,
        Regime::Eesd => pipesim::decode_eesd(&lm, &pipeline, config.gamma.unwrap_or(1), &prompt, horizon, mode, &rng)?,
        Regime::Autoregressive => {
            let (metrics, trace) = pipesim::trace_autoregressive(&pipeline, horizon)?;
            pipesim::DecodeOutput {
                tokens: reference.clone(),
                metrics,
                trace,
            }
        }
    };
    Ok(DecodeReport {
        prompt,
        tokens: out.tokens,
        reference,
        metrics: out.metrics,
        trace: out.trace,
    })
}
