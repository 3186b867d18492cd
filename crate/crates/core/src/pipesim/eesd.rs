//! Draft-then-verify rounds without overlap between drafting and
//! verification.
//!
//! A round drafts `γ` tokens one after another, each draft running the
//! stages up to the exit, then verifies all of them in a single batched
//! forward through the stages. The accepted prefix plus one full-model token
//! is committed.

use super::config::PipelineConfig;
use super::engine::EngineRun;
use super::metrics::Counters;
use super::model::StageModel;
use super::trace::{EventTrace, MessageKind, TraceRecord, Verdict};
use crate::error::{Error, Result};
use crate::speccore::TokenId;

pub(crate) fn run<M: StageModel>(
    cfg: &PipelineConfig,
    model: &mut M,
    gamma: u32,
    prompt: &[TokenId],
    horizon: u64,
    record_trace: bool,
) -> Result<EngineRun> {
    if gamma < 1 {
        return Err(Error::param("gamma", "must be >= 1"));
    }
    if horizon < 1 {
        return Err(Error::param("horizon", "must be >= 1"));
    }
    let n_stages = cfg.n_stages();
    // A single-stage model drafts with the whole stack.
    let exit_stages = cfg.exit_stage().unwrap_or(1);
    let first_verify_stage = if cfg.cache_reuse && exit_stages < n_stages {
        exit_stages
    } else {
        0
    };
    let hop = cfg.hop_latency;

    let prompt_len = prompt.len();
    let mut tokens = prompt.to_vec();
    let mut trace = record_trace.then(EventTrace::new);
    let mut c = Counters::default();
    let mut tick = 0u64;
    let mut note = |tick, stage: usize, kind, position, token, verdict| {
        if let Some(t) = trace.as_mut() {
            t.push(TraceRecord {
                tick,
                stage: stage + 1,
                kind,
                position,
                token,
                verdict,
            });
        }
    };

    while c.committed < horizon {
        let base = c.committed;

        let mut drafts = Vec::with_capacity(gamma as usize);
        for h in 0..gamma as u64 {
            let pos = base + h;
            let mut state = model.embed(&tokens[..prompt_len + pos as usize])?;
            for stage in 0..exit_stages {
                state = model.advance(state, cfg.layer_end(stage))?;
                if stage + 1 < exit_stages {
                    note(tick, stage, MessageKind::Activation, pos, None, Verdict::None);
                    tick += 1 + hop;
                }
            }
            let draft = model.draft(&state)?;
            note(
                tick,
                exit_stages - 1,
                MessageKind::DraftToken,
                pos,
                Some(draft.token),
                Verdict::None,
            );
            tick += 1;
            tokens.push(draft.token);
            drafts.push(draft);
            c.drafted += 1;
        }

        // Batched verification of positions base..=base+γ: every stage runs
        // once for the whole batch.
        for stage in first_verify_stage..n_stages - 1 {
            note(tick, stage, MessageKind::Activation, base, None, Verdict::None);
            tick += 1 + hop;
        }
        let last_tick = tick;
        tick += 1;

        let mut all_accepted = true;
        for (h, draft) in drafts.iter().enumerate() {
            let pos = base + h as u64;
            let embedded = model.embed(&tokens[..prompt_len + pos as usize])?;
            let top = model.advance(embedded, cfg.n_layers())?;
            let outcome = model.verify(&top, draft)?;
            c.committed += 1;
            if outcome.accepted {
                c.accepts += 1;
                note(
                    last_tick,
                    n_stages - 1,
                    MessageKind::CheckToken,
                    pos,
                    Some(outcome.token),
                    Verdict::Accept,
                );
            } else {
                c.rejects += 1;
                note(
                    last_tick,
                    n_stages - 1,
                    MessageKind::CheckToken,
                    pos,
                    Some(outcome.token),
                    Verdict::Reject,
                );
                tokens.truncate(prompt_len + pos as usize);
                tokens.push(outcome.token);
                c.flushed += gamma as u64 - h as u64 - 1;
                all_accepted = false;
                break;
            }
        }
        if all_accepted {
            let pos = base + gamma as u64;
            let embedded = model.embed(&tokens[..prompt_len + pos as usize])?;
            let top = model.advance(embedded, cfg.n_layers())?;
            let token = model.emit(&top)?;
            note(
                last_tick,
                n_stages - 1,
                MessageKind::FinalToken,
                pos,
                Some(token),
                Verdict::Commit,
            );
            tokens.push(token);
            c.committed += 1;
            c.bonus += 1;
        }
        // Round trip of the verdict back to the drafting stage.
        if n_stages > 1 {
            tick += hop;
        }
    }
    c.ticks = tick;

    tokens.drain(..prompt_len);
    Ok(EngineRun {
        tokens,
        metrics: c.finish(n_stages, cfg.steady_state),
        trace,
    })
}
