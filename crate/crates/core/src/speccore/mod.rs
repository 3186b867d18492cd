//! Speculative sampling primitives: draft sampling, the stochastic acceptance
//! test, residual resampling on rejection, and a greedy verification mode.

mod dist;
mod rng;

pub use dist::{ProbVec, TokenId, SUM_TOLERANCE};
pub use rng::{mix2, mix64, unit_open_closed, RngStream};

use crate::error::{Error, Result};
use dist::ensure_same_dim;

/// Inverse-CDF sampling with one uniform draw from `rng`.
pub fn sample_token(dist: &ProbVec, rng: &mut RngStream) -> TokenId {
    sample_with_uniform(dist, rng.next_uniform())
}

/// Smallest index whose cumulative probability reaches `u ∈ (0, 1]`.
pub fn sample_with_uniform(dist: &ProbVec, u: f64) -> TokenId {
    let mut cdf = 0.0;
    let mut last_positive = 0;
    for (i, p) in dist.probs().iter().enumerate() {
        if *p > 0.0 {
            last_positive = i;
            cdf += p;
            if u <= cdf {
                return i as TokenId;
            }
        }
    }
    // Rounding left the total just below u.
    last_positive as TokenId
}

/// Acceptance test `r ≤ min(1, q/p)` with one uniform draw.
pub fn accept_draft(p_at_token: f64, q_at_token: f64, rng: &mut RngStream) -> Result<bool> {
    accept_with_uniform(p_at_token, q_at_token, rng.next_uniform())
}

pub fn accept_with_uniform(p_at_token: f64, q_at_token: f64, r: f64) -> Result<bool> {
    if !(p_at_token > 0.0 && p_at_token <= 1.0) {
        return Err(Error::param(
            "p_at_token",
            format!("drafted token must have draft probability in (0, 1], got {p_at_token}"),
        ));
    }
    if !(0.0..=1.0).contains(&q_at_token) {
        return Err(Error::param(
            "q_at_token",
            format!("must lie in [0, 1], got {q_at_token}"),
        ));
    }
    Ok(r <= (q_at_token / p_at_token).min(1.0))
}

/// `normalize(max(0, q − p))`, the law a rejected position is resampled from.
pub fn residual_distribution(p: &ProbVec, q: &ProbVec) -> Result<ProbVec> {
    ensure_same_dim(p, q)?;
    let weights: Vec<f64> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(pi, qi)| (qi - pi).max(0.0))
        .collect();
    // Below this mass the residual is rounding noise; q and p coincide.
    if weights.iter().sum::<f64>() <= 1e-12 {
        return Err(Error::DegenerateResidual);
    }
    ProbVec::normalized(weights)
}

/// Greedy verification: accept iff both argmaxes agree; the emitted token is
/// always the target argmax.
pub fn greedy_match(p: &ProbVec, q: &ProbVec) -> Result<(bool, TokenId)> {
    ensure_same_dim(p, q)?;
    let target = q.argmax();
    Ok((p.argmax() == target, target))
}

/// Outcome of speculatively sampling one position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecOutcome {
    pub token: TokenId,
    pub accepted: bool,
}

/// Verify `draft` (drawn from `p`) against `q`, resampling from the residual
/// on rejection. The emitted token is distributed exactly as `q`.
pub fn verify_sampled(draft: TokenId, p: &ProbVec, q: &ProbVec, rng: &mut RngStream) -> Result<SpecOutcome> {
    ensure_same_dim(p, q)?;
    if accept_draft(p.prob(draft), q.prob(draft), rng)? {
        return Ok(SpecOutcome {
            token: draft,
            accepted: true,
        });
    }
    let residual = residual_distribution(p, q)?;
    Ok(SpecOutcome {
        token: sample_token(&residual, rng),
        accepted: false,
    })
}
