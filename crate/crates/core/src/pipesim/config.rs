use crate::analytic::check_layers;
use crate::error::{Error, Result};

/// Layer-to-stage partition of the model plus time-model knobs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    n_layers: usize,
    exit_depth: usize,
    stage_layers: Vec<usize>,
    exit_stage: Option<usize>,
    /// Extra ticks a message spends between two different stages.
    pub hop_latency: u64,
    /// Draft-then-verify verification skips the layers already run while drafting.
    pub cache_reuse: bool,
    /// Exclude the pipeline fill (first `S` ticks and first token) from metrics.
    pub steady_state: bool,
}

impl PipelineConfig {
    /// `⌈N/E⌉` stages of `E` layers; a remainder becomes its own final stage.
    /// The draft exits after stage 1 whenever there are at least two stages.
    pub fn new(n_layers: usize, exit_depth: usize) -> Result<Self> {
        check_layers(n_layers, exit_depth)?;
        let n_stages = n_layers.div_ceil(exit_depth);
        let mut stage_layers = vec![exit_depth; n_stages];
        stage_layers[n_stages - 1] = n_layers - (n_stages - 1) * exit_depth;
        Ok(PipelineConfig {
            n_layers,
            exit_depth,
            stage_layers,
            exit_stage: (n_stages > 1).then_some(1),
            hop_latency: 0,
            cache_reuse: false,
            steady_state: false,
        })
    }

    /// Move the exit point to the end of stage `stage` (1-based, `< S`).
    pub fn with_exit_stage(mut self, stage: usize) -> Result<Self> {
        if stage < 1 || stage >= self.n_stages() {
            return Err(Error::param(
                "exit_stage",
                format!("must lie in [1, {}], got {stage}", self.n_stages().saturating_sub(1)),
            ));
        }
        self.exit_stage = Some(stage);
        Ok(self)
    }

    pub fn with_hop_latency(mut self, ticks: u64) -> Self {
        self.hop_latency = ticks;
        self
    }

    pub fn with_cache_reuse(mut self, on: bool) -> Self {
        self.cache_reuse = on;
        self
    }

    pub fn with_steady_state(mut self, on: bool) -> Self {
        self.steady_state = on;
        self
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn exit_depth(&self) -> usize {
        self.exit_depth
    }

    pub fn n_stages(&self) -> usize {
        self.stage_layers.len()
    }

    pub fn stage_layers(&self) -> &[usize] {
        &self.stage_layers
    }

    /// 1-based stage after which the draft head runs; `None` for a
    /// single-stage pipeline, which has no early exit.
    pub fn exit_stage(&self) -> Option<usize> {
        self.exit_stage
    }

    /// Layer depth reached at the end of 0-based stage `stage`.
    pub(crate) fn layer_end(&self, stage: usize) -> usize {
        self.stage_layers[..=stage].iter().sum()
    }

    pub fn exit_layer(&self) -> Option<usize> {
        self.exit_stage.map(|k| self.layer_end(k - 1))
    }
}
