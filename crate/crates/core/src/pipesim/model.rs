//! What the stage workers compute: either a Bernoulli acceptance coin or
//! real draft/target distributions from the toy model.

use crate::error::{Error, Result};
use crate::speccore::{greedy_match, sample_token, verify_sampled, ProbVec, RngStream, SpecOutcome, TokenId};
use crate::toylm::{PrefixState, ToyLm};

#[derive(Debug, Clone, PartialEq)]
pub struct Draft {
    pub token: TokenId,
    /// Draft distribution, kept for the sampling-mode acceptance test.
    pub dist: Option<ProbVec>,
}

pub(crate) trait StageModel {
    type State: Clone;

    fn embed(&mut self, prefix: &[TokenId]) -> Result<Self::State>;
    fn advance(&mut self, state: Self::State, to_layer: usize) -> Result<Self::State>;
    /// Early-exit head at the exit stage.
    fn draft(&mut self, at_exit: &Self::State) -> Result<Draft>;
    /// Full-model verdict on a draft at the last stage.
    fn verify(&mut self, top: &Self::State, draft: &Draft) -> Result<SpecOutcome>;
    /// Full-model token when nothing was drafted.
    fn emit(&mut self, top: &Self::State) -> Result<TokenId>;
}

/// Accepts each verified draft with probability `alpha`, one uniform draw per
/// verification. Tokens are placeholders.
pub(crate) struct BernoulliModel {
    alpha: f64,
    rng: RngStream,
}

impl BernoulliModel {
    pub fn new(alpha: f64, rng: RngStream) -> Self {
        BernoulliModel { alpha, rng }
    }
}

impl StageModel for BernoulliModel {
    type State = ();

    fn embed(&mut self, _prefix: &[TokenId]) -> Result<()> {
        Ok(())
    }

    fn advance(&mut self, _state: (), _to_layer: usize) -> Result<()> {
        Ok(())
    }

    fn draft(&mut self, _at_exit: &()) -> Result<Draft> {
        Ok(Draft { token: 0, dist: None })
    }

    fn verify(&mut self, _top: &(), _draft: &Draft) -> Result<SpecOutcome> {
        Ok(SpecOutcome {
            token: 0,
            accepted: self.rng.next_uniform() <= self.alpha,
        })
    }

    fn emit(&mut self, _top: &()) -> Result<TokenId> {
        Ok(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sampling,
}

pub(crate) struct ToyModel<'a> {
    lm: &'a ToyLm,
    mode: DecodeMode,
    force_reject: bool,
    draft_rng: RngStream,
    verify_rng: RngStream,
}

impl<'a> ToyModel<'a> {
    pub fn new(lm: &'a ToyLm, mode: DecodeMode, force_reject: bool, root: &RngStream) -> Self {
        ToyModel {
            lm,
            mode,
            force_reject,
            draft_rng: root.derive(super::DRAFT_STREAM),
            verify_rng: root.derive(super::VERIFY_STREAM),
        }
    }

    fn choose(&mut self, dist: &ProbVec) -> TokenId {
        match self.mode {
            DecodeMode::Greedy => dist.argmax(),
            DecodeMode::Sampling => sample_token(dist, &mut self.verify_rng),
        }
    }
}

impl StageModel for ToyModel<'_> {
    type State = PrefixState;

    fn embed(&mut self, prefix: &[TokenId]) -> Result<PrefixState> {
        Ok(self.lm.embed(prefix))
    }

    fn advance(&mut self, state: PrefixState, to_layer: usize) -> Result<PrefixState> {
        self.lm.advance(state, to_layer)
    }

    fn draft(&mut self, at_exit: &PrefixState) -> Result<Draft> {
        let p = self.lm.exit_from_state(*at_exit)?;
        let token = match self.mode {
            DecodeMode::Greedy => p.argmax(),
            DecodeMode::Sampling => sample_token(&p, &mut self.draft_rng),
        };
        Ok(Draft { token, dist: Some(p) })
    }

    fn verify(&mut self, top: &PrefixState, draft: &Draft) -> Result<SpecOutcome> {
        let q = self.lm.target_from_state(*top)?;
        if self.force_reject {
            return Ok(SpecOutcome {
                token: self.choose(&q),
                accepted: false,
            });
        }
        let p = draft
            .dist
            .as_ref()
            .ok_or_else(|| Error::Config("draft reached verification without its distribution".into()))?;
        match self.mode {
            DecodeMode::Greedy => {
                let (accepted, token) = greedy_match(p, &q)?;
                Ok(SpecOutcome { token, accepted })
            }
            DecodeMode::Sampling => verify_sampled(draft.token, p, &q, &mut self.verify_rng),
        }
    }

    fn emit(&mut self, top: &PrefixState) -> Result<TokenId> {
        let q = self.lm.target_from_state(*top)?;
        Ok(self.choose(&q))
    }
}
