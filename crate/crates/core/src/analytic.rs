//! Closed-form throughput model for early-exit self-speculative decoding.
//!
//! Every function is total on the closed interval `α ∈ [0, 1]`: the `α = 1`
//! endpoints use the analytic limits instead of substituting into expressions
//! that become `0/0`.

use crate::error::{Error, Result};

/// Per-forward costs of the target and draft models.
///
/// Verification is batch-flat: verifying `γ` tokens costs the same as one
/// target forward, so there is no `γ` dependence here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    /// Time of one full-model forward over one token.
    pub t_target: f64,
    /// Time of one draft-model forward.
    pub t_draft: f64,
}

impl CostModel {
    pub fn new(t_target: f64, t_draft: f64) -> Result<Self> {
        let cost = CostModel { t_target, t_draft };
        cost.validate()?;
        Ok(cost)
    }

    /// The early-exit cost model: a draft forward runs `E` of `N` layers.
    pub fn early_exit(n_layers: usize, exit_depth: usize) -> Result<Self> {
        check_layers(n_layers, exit_depth)?;
        Self::new(1.0, exit_depth as f64 / n_layers as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_target.is_finite() && self.t_target > 0.0) {
            return Err(Error::param("t_target", format!("must be > 0, got {}", self.t_target)));
        }
        // A zero draft cost is accepted: it is the free-drafting limit.
        if !(self.t_draft.is_finite() && self.t_draft >= 0.0) {
            return Err(Error::param("t_draft", format!("must be >= 0, got {}", self.t_draft)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupParams {
    /// Single-token acceptance rate measured from gold prefixes.
    pub alpha: f64,
    /// Draft length per draft-then-verify round.
    pub gamma: u32,
    /// Total transformer layers `N`.
    pub n_layers: usize,
    /// Early-exit depth `E`; also the number of layers per pipeline stage.
    pub exit_depth: usize,
}

impl SpeedupParams {
    pub fn new(alpha: f64, gamma: u32, n_layers: usize, exit_depth: usize) -> Result<Self> {
        let p = SpeedupParams {
            alpha,
            gamma,
            n_layers,
            exit_depth,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        check_gamma(self.gamma)?;
        check_layers(self.n_layers, self.exit_depth)
    }

    /// Pipeline stage count `⌈N/E⌉`.
    pub fn n_stages(&self) -> usize {
        self.n_layers.div_ceil(self.exit_depth)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("must lie in [0, 1], got {alpha}")))
    }
}

pub(crate) fn check_gamma(gamma: u32) -> Result<()> {
    if gamma >= 1 {
        Ok(())
    } else {
        Err(Error::param("gamma", "must be >= 1"))
    }
}

pub(crate) fn check_layers(n_layers: usize, exit_depth: usize) -> Result<()> {
    if n_layers < 1 {
        return Err(Error::param("n_layers", "must be >= 1"));
    }
    if exit_depth < 1 || exit_depth > n_layers {
        return Err(Error::param(
            "exit_depth",
            format!("must lie in [1, n_layers={n_layers}], got {exit_depth}"),
        ));
    }
    Ok(())
}

/// `1 + α + … + α^(k-1)`, i.e. `(1 − α^k)/(1 − α)` with the `α = 1` limit `k`.
fn geometric_sum(alpha: f64, terms: u32) -> f64 {
    if alpha == 1.0 {
        terms as f64
    } else {
        (1.0 - alpha.powi(terms as i32)) / (1.0 - alpha)
    }
}

/// Expected number of accepted drafts when `γ` tokens are drafted and each is
/// accepted independently with probability `α` until the first rejection.
pub fn expected_accept_len(alpha: f64, gamma: u32) -> Result<f64> {
    check_alpha(alpha)?;
    check_gamma(gamma)?;
    Ok(alpha * geometric_sum(alpha, gamma))
}

/// Accepted drafts divided by drafted tokens, `E(γ)/γ`.
pub fn overall_acceptance(alpha: f64, gamma: u32) -> Result<f64> {
    Ok(expected_accept_len(alpha, gamma)? / gamma as f64)
}

/// Generic speculative-decoding gain for arbitrary draft/target costs.
pub fn sd_gain(cost: &CostModel, alpha: f64, gamma: u32) -> Result<f64> {
    cost.validate()?;
    let accepted = expected_accept_len(alpha, gamma)?;
    let round_time = gamma as f64 * cost.t_draft + cost.t_target;
    Ok(cost.t_target / round_time * (accepted + 1.0))
}

/// Draft-then-verify speedup where verification charges all `N` layers.
pub fn eesd_speedup(p: &SpeedupParams) -> Result<f64> {
    p.validate()?;
    let (n, e, g) = (p.n_layers as f64, p.exit_depth as f64, p.gamma as f64);
    Ok(geometric_sum(p.alpha, p.gamma + 1) * n / (g * e + n))
}

/// Draft-then-verify speedup where verification reuses the drafted prefix
/// activations and only runs the remaining `N − E` layers.
pub fn eesd_speedup_cache_reuse(p: &SpeedupParams) -> Result<f64> {
    p.validate()?;
    let (n, e, g) = (p.n_layers as f64, p.exit_depth as f64, p.gamma as f64);
    Ok(geometric_sum(p.alpha, p.gamma + 1) * n / (g * e + n - e))
}

/// Pipeline-parallel verify-while-draft speedup, draft exiting after the
/// first stage: `N / (αE + (1 − α)⌈N/E⌉E)`.
///
/// Lies in `[1, N/E]` when `E` divides `N`; otherwise the padded remainder
/// stage can push the `α = 0` value slightly below 1.
pub fn ppsd_speedup(alpha: f64, n_layers: usize, exit_depth: usize) -> Result<f64> {
    check_alpha(alpha)?;
    check_layers(n_layers, exit_depth)?;
    Ok(n_layers as f64 / ppsd_cost_per_token(alpha, n_layers, exit_depth))
}

/// Expected layer-time per committed token under PPSD: `αE + (1 − α)⌈N/E⌉E`.
fn ppsd_cost_per_token(alpha: f64, n_layers: usize, exit_depth: usize) -> f64 {
    let e = exit_depth as f64;
    let stages = n_layers.div_ceil(exit_depth) as f64;
    alpha * e + (1.0 - alpha) * stages * e
}

/// Gain of PPSD over draft-then-verify, evaluated from its own closed form
/// rather than as a quotient of the two speedups.
///
/// At `α = 1` the closed form is `0/0`; the limit `(γE + N)/((γ + 1)E)` is
/// returned.
pub fn ppsd_over_eesd_lambda(p: &SpeedupParams) -> Result<f64> {
    p.validate()?;
    let (n, e, g) = (p.n_layers as f64, p.exit_depth as f64, p.gamma as f64);
    let ppsd_cost = ppsd_cost_per_token(p.alpha, p.n_layers, p.exit_depth);
    if p.alpha == 1.0 {
        return Ok((g * e + n) / ((g + 1.0) * e));
    }
    let numer = (1.0 - p.alpha) * (g * e + n);
    let denom = ppsd_cost * (1.0 - p.alpha.powi(p.gamma as i32 + 1));
    Ok(numer / denom)
}

/// All six closed-form quantities for one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticSummary {
    pub expected_accept_len: f64,
    pub overall_acceptance: f64,
    /// Generic gain with the early-exit cost model `t_draft = E/N`.
    pub sd_gain: f64,
    pub eesd_speedup: f64,
    pub ppsd_speedup: f64,
    pub lambda: f64,
}

pub fn summarize(p: &SpeedupParams) -> Result<AnalyticSummary> {
    p.validate()?;
    Ok(AnalyticSummary {
        expected_accept_len: expected_accept_len(p.alpha, p.gamma)?,
        overall_acceptance: overall_acceptance(p.alpha, p.gamma)?,
        sd_gain: sd_gain(&CostModel::early_exit(p.n_layers, p.exit_depth)?, p.alpha, p.gamma)?,
        eesd_speedup: eesd_speedup(p)?,
        ppsd_speedup: ppsd_speedup(p.alpha, p.n_layers, p.exit_depth)?,
        lambda: ppsd_over_eesd_lambda(p)?,
    })
}
