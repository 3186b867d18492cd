/// Outcome of one simulated decoding run.
///
/// One tick is one stage-forward, i.e. `E/N` of a full-model forward, so
/// autoregressive decoding commits `1/S` tokens per tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub committed_tokens: u64,
    pub ticks: u64,
    /// Committed positions whose draft passed verification.
    pub accepts: u64,
    /// Committed positions whose draft failed and was replaced by the
    /// full-model token.
    pub rejects: u64,
    /// Extra full-model token a draft-then-verify round emits after all of
    /// its drafts are accepted. Always 0 for pipelined decoding.
    pub bonus: u64,
    /// Drafts submitted for verification.
    pub drafted: u64,
    /// Speculative drafts discarded by a rollback before being verified.
    pub flushed: u64,
    /// `accepts / drafted`; `None` when nothing was drafted.
    pub alpha_all_measured: Option<f64>,
    /// `committed_tokens / ticks`.
    pub throughput: f64,
    /// `throughput × S`.
    pub speedup_vs_ar: f64,
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Counters {
    pub committed: u64,
    pub ticks: u64,
    pub accepts: u64,
    pub rejects: u64,
    pub bonus: u64,
    pub drafted: u64,
    pub flushed: u64,
}

impl Counters {
    /// With `steady_state`, the first `S` ticks and the first committed
    /// token (the pipeline fill) are excluded from the rates.
    pub fn finish(self, n_stages: usize, steady_state: bool) -> RunMetrics {
        let (mut committed, mut ticks) = (self.committed, self.ticks);
        if steady_state && committed > 1 && ticks > n_stages as u64 {
            committed -= 1;
            ticks -= n_stages as u64;
        }
        let throughput = if ticks == 0 {
            0.0
        } else {
            committed as f64 / ticks as f64
        };
        RunMetrics {
            committed_tokens: self.committed,
            ticks: self.ticks,
            accepts: self.accepts,
            rejects: self.rejects,
            bonus: self.bonus,
            drafted: self.drafted,
            flushed: self.flushed,
            alpha_all_measured: (self.drafted > 0).then(|| self.accepts as f64 / self.drafted as f64),
            throughput,
            speedup_vs_ar: throughput * n_stages as f64,
        }
    }
}
