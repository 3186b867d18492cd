//! Tick-by-tick pipeline engine shared by autoregressive and verify-while-draft
//! decoding.
//!
//! Stage workers are state machines stepped once per tick; each takes at most
//! one activation from its inbox, runs its layers, and emits messages that
//! become visible `1 + hop_latency` ticks later (messages to the driver from
//! the first stage, which hosts the driver, skip the hop). The driver owns the
//! committed sequence and the speculative tail, launches positions into stage
//! 1, and rolls back on a rejecting check token.

use std::collections::VecDeque;

use super::config::PipelineConfig;
use super::metrics::{Counters, RunMetrics};
use super::model::{Draft, StageModel};
use super::trace::{EventTrace, MessageKind, TraceRecord, Verdict};
use crate::error::{Error, Result};
use crate::speccore::TokenId;

/// A message on the pipeline wire.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMessage<S> {
    pub kind: MessageKind,
    /// Generated-token index this message is about.
    pub position: u64,
    pub token: Option<TokenId>,
    /// Activation payload (`ACTIVATION` only).
    pub payload: Option<S>,
}

struct InFlight<S> {
    msg: StageMessage<S>,
    /// Rollback generation the message was produced in.
    epoch: u64,
    ready_tick: u64,
    /// Tick at the end of which the message was produced.
    sent_tick: u64,
    /// Draft riding along with the activation once the exit stage has run.
    draft: Option<Draft>,
    accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Schedule {
    /// Next position launches only after the previous one commits.
    Autoregressive,
    /// Exit stage drafts ahead; last stage checks drafts.
    VerifyWhileDraft,
}

pub(crate) struct EngineRun {
    pub tokens: Vec<TokenId>,
    pub metrics: RunMetrics,
    pub trace: Option<EventTrace>,
}

pub(crate) fn run<M: StageModel>(
    cfg: &PipelineConfig,
    model: &mut M,
    schedule: Schedule,
    prompt: &[TokenId],
    horizon: u64,
    record_trace: bool,
) -> Result<EngineRun> {
    if horizon < 1 {
        return Err(Error::param("horizon", "must be >= 1"));
    }
    let n_stages = cfg.n_stages();
    let last = n_stages - 1;
    let exit = match schedule {
        Schedule::Autoregressive => None,
        Schedule::VerifyWhileDraft => cfg.exit_stage().map(|k| k - 1),
    };
    let hop = cfg.hop_latency;
    let stall_limit = horizon
        .saturating_mul(n_stages as u64)
        .saturating_mul(2 * (1 + hop))
        .saturating_add(64 + 4 * n_stages as u64 * (1 + hop));

    let prompt_len = prompt.len();
    let mut tokens: Vec<TokenId> = prompt.to_vec();
    let mut inboxes: Vec<VecDeque<InFlight<M::State>>> = (0..n_stages).map(|_| VecDeque::new()).collect();
    let mut to_driver: VecDeque<InFlight<M::State>> = VecDeque::new();
    let mut trace = record_trace.then(EventTrace::new);
    let mut c = Counters::default();
    let mut epoch = 0u64;
    let mut next_launch = 0u64;
    let mut tick = 0u64;

    let note = |trace: &mut Option<EventTrace>, tick, stage, kind, position, token, verdict| {
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

    'ticks: loop {
        if tick > stall_limit {
            return Err(Error::Config(format!(
                "pipeline made no progress within {stall_limit} ticks"
            )));
        }

        // Driver: consume token messages that have arrived.
        while to_driver.front().is_some_and(|m| m.ready_tick <= tick) {
            let m = to_driver.pop_front().expect("front checked");
            if m.epoch != epoch {
                if m.msg.kind == MessageKind::DraftToken {
                    c.flushed += 1;
                }
                continue;
            }
            let pos = m.msg.position;
            let token = m.msg.token.expect("token messages carry a token");
            let speculative_len = (tokens.len() - prompt_len) as u64;
            match m.msg.kind {
                MessageKind::DraftToken => {
                    debug_assert_eq!(pos, speculative_len, "drafts arrive in position order");
                    tokens.push(token);
                }
                MessageKind::CheckToken => {
                    debug_assert_eq!(pos, c.committed);
                    c.drafted += 1;
                    if m.accepted {
                        debug_assert_eq!(tokens[prompt_len + pos as usize], token);
                        c.accepts += 1;
                    } else {
                        c.rejects += 1;
                        // Roll back: the corrected token replaces the draft at
                        // `pos`; everything speculated after it is void.
                        let dropped = speculative_len - pos;
                        c.flushed += dropped.saturating_sub(1);
                        tokens.truncate(prompt_len + pos as usize);
                        tokens.push(token);
                        epoch += 1;
                        next_launch = pos + 1;
                    }
                    c.committed += 1;
                }
                MessageKind::FinalToken => {
                    debug_assert_eq!(pos, speculative_len);
                    tokens.push(token);
                    c.committed += 1;
                }
                MessageKind::Activation => unreachable!("activations never reach the driver"),
            }
            if c.committed == horizon {
                c.ticks = m.sent_tick + 1;
                break 'ticks;
            }
        }

        // Driver: launch the next position into stage 1 once its input token
        // (committed or drafted) is known.
        let known = (tokens.len() - prompt_len) as u64;
        if next_launch < horizon && next_launch <= known && inboxes[0].is_empty() {
            let state = model.embed(&tokens[..prompt_len + next_launch as usize])?;
            inboxes[0].push_back(InFlight {
                msg: StageMessage {
                    kind: MessageKind::Activation,
                    position: next_launch,
                    token: None,
                    payload: Some(state),
                },
                epoch,
                ready_tick: tick,
                sent_tick: tick,
                draft: None,
                accepted: false,
            });
            next_launch += 1;
        }

        // Stage workers: one forward each at most.
        for stage in 0..n_stages {
            while inboxes[stage]
                .front()
                .is_some_and(|m| m.epoch != epoch && m.ready_tick <= tick)
            {
                let stale = inboxes[stage].pop_front().expect("front checked");
                note(
                    &mut trace,
                    tick,
                    stage,
                    MessageKind::Activation,
                    stale.msg.position,
                    None,
                    Verdict::Flushed,
                );
            }
            if !inboxes[stage].front().is_some_and(|m| m.ready_tick <= tick) {
                continue;
            }
            let mut work = inboxes[stage].pop_front().expect("front checked");
            let pos = work.msg.position;
            let state = model.advance(
                work.msg.payload.take().expect("activations carry a payload"),
                cfg.layer_end(stage),
            )?;
            let back_hop = if stage == 0 { 0 } else { hop };

            if exit == Some(stage) {
                let draft = model.draft(&state)?;
                note(
                    &mut trace,
                    tick,
                    stage,
                    MessageKind::DraftToken,
                    pos,
                    Some(draft.token),
                    Verdict::None,
                );
                to_driver.push_back(InFlight {
                    msg: StageMessage {
                        kind: MessageKind::DraftToken,
                        position: pos,
                        token: Some(draft.token),
                        payload: None,
                    },
                    epoch: work.epoch,
                    ready_tick: tick + 1 + back_hop,
                    sent_tick: tick,
                    draft: None,
                    accepted: false,
                });
                work.draft = Some(draft);
            }

            if stage == last {
                let (kind, token, accepted, verdict) = match &work.draft {
                    Some(draft) => {
                        let outcome = model.verify(&state, draft)?;
                        let verdict = if outcome.accepted {
                            Verdict::Accept
                        } else {
                            Verdict::Reject
                        };
                        (MessageKind::CheckToken, outcome.token, outcome.accepted, verdict)
                    }
                    None => (MessageKind::FinalToken, model.emit(&state)?, false, Verdict::Commit),
                };
                note(&mut trace, tick, stage, kind, pos, Some(token), verdict);
                to_driver.push_back(InFlight {
                    msg: StageMessage {
                        kind,
                        position: pos,
                        token: Some(token),
                        payload: None,
                    },
                    epoch: work.epoch,
                    ready_tick: tick + 1 + back_hop,
                    sent_tick: tick,
                    draft: None,
                    accepted,
                });
            } else {
                note(
                    &mut trace,
                    tick,
                    stage,
                    MessageKind::Activation,
                    pos,
                    None,
                    Verdict::None,
                );
                work.msg.payload = Some(state);
                work.ready_tick = tick + 1 + hop;
                work.sent_tick = tick;
                inboxes[stage + 1].push_back(work);
            }
        }
        // Keep the driver queue ordered by arrival; hops differ per sender.
        to_driver.make_contiguous().sort_by_key(|m| (m.ready_tick, m.sent_tick));
        tick += 1;
    }

    tokens.drain(..prompt_len);
    Ok(EngineRun {
        tokens,
        metrics: c.finish(n_stages, cfg.steady_state),
        trace,
    })
}
