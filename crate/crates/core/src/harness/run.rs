use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, OracleKind, Regime};
use crate::analytic::{self, SpeedupParams};
use crate::error::Result;
use crate::pipesim::{self, EventTrace, PipelineConfig, RunMetrics};

/// Gold prefixes used to measure the toy model's acceptance rate for the
/// analytic reference column.
pub const ALPHA_PROBE_PREFIXES: usize = 1000;

pub const RESULT_HEADER: [&str; 16] = [
    "regime",
    "n_layers",
    "exit_depth",
    "gamma",
    "alpha",
    "beta",
    "seed",
    "horizon",
    "committed",
    "ticks",
    "accepts",
    "rejects",
    "alpha_all",
    "throughput",
    "speedup",
    "analytic_speedup",
];

/// One line of a result CSV; `None` serializes as an empty field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub regime: &'static str,
    pub n_layers: usize,
    pub exit_depth: usize,
    pub gamma: Option<u32>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub seed: u64,
    pub horizon: u64,
    pub committed: u64,
    pub ticks: u64,
    pub accepts: u64,
    pub rejects: u64,
    pub alpha_all: Option<f64>,
    pub throughput: f64,
    pub speedup: f64,
    pub analytic_speedup: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub row: ResultRow,
    pub metrics: RunMetrics,
    pub trace: Option<EventTrace>,
}

/// Acceptance rate fed into the closed forms: the configured Bernoulli rate,
/// or the toy model's measured single-token rate.
fn reference_alpha(config: &ExperimentConfig, pipeline: &PipelineConfig) -> Result<Option<f64>> {
    Ok(match config.oracle {
        OracleKind::Bernoulli => config.alpha,
        OracleKind::ToylmGreedy | OracleKind::ToylmSampling => {
            // A single-stage pipeline drafts with its only stage.
            let layer = pipeline.exit_layer().unwrap_or(pipeline.stage_layers()[0]);
            Some(config.toy_lm()?.empirical_alpha(layer, ALPHA_PROBE_PREFIXES)?)
        }
    })
}

/// Closed-form speedup matching the configuration, when one exists.
pub fn analytic_speedup(config: &ExperimentConfig) -> Result<Option<f64>> {
    let pipeline = config.pipeline()?;
    if config.regime == Regime::Autoregressive {
        return Ok(Some(1.0));
    }
    let Some(alpha) = reference_alpha(config, &pipeline)? else {
        return Ok(Some(1.0));
    };
    Ok(Some(match config.regime {
        Regime::Autoregressive => unreachable!(),
        Regime::Eesd => {
            let p = SpeedupParams::new(alpha, config.gamma.unwrap_or(1), config.n_layers, config.exit_depth)?;
            if config.cache_reuse {
                analytic::eesd_speedup_cache_reuse(&p)?
            } else {
                analytic::eesd_speedup(&p)?
            }
        }
        Regime::Ppsd => pipesim::reference_ppsd_speedup(&pipeline, alpha)?,
    }))
}

/// Execute one configured simulation.
pub fn run(config: &ExperimentConfig, with_trace: bool) -> Result<RunOutcome> {
    config.validate()?;
    let pipeline = config.pipeline()?;
    let oracle = config.acceptance_oracle()?;
    let rng = config.sim_rng();
    let horizon = config.horizon;
    let (metrics, trace) = match (config.regime, with_trace) {
        (Regime::Autoregressive, false) => (pipesim::simulate_autoregressive(&pipeline, horizon)?, None),
        (Regime::Autoregressive, true) => {
            let (m, t) = pipesim::trace_autoregressive(&pipeline, horizon)?;
            (m, Some(t))
        }
        (Regime::Eesd, false) => {
            let gamma = config.gamma.unwrap_or(1);
            (pipesim::simulate_eesd(&pipeline, gamma, &oracle, horizon, &rng)?, None)
        }
        (Regime::Eesd, true) => {
            let (m, t) = pipesim::trace_eesd(&pipeline, config.gamma.unwrap_or(1), &oracle, horizon, &rng)?;
            (m, Some(t))
        }
        (Regime::Ppsd, false) => (pipesim::simulate_ppsd(&pipeline, &oracle, horizon, &rng)?, None),
        (Regime::Ppsd, true) => {
            let (m, t) = pipesim::trace_ppsd(&pipeline, &oracle, horizon, &rng)?;
            (m, Some(t))
        }
    };
    let row = ResultRow {
        regime: config.regime.as_str(),
        n_layers: config.n_layers,
        exit_depth: config.exit_depth,
        gamma: config.gamma,
        alpha: config.alpha,
        beta: config.beta,
        seed: config.seed,
        horizon,
        committed: metrics.committed_tokens,
        ticks: metrics.ticks,
        accepts: metrics.accepts,
        rejects: metrics.rejects,
        alpha_all: metrics.alpha_all_measured,
        throughput: metrics.throughput,
        speedup: metrics.speedup_vs_ar,
        analytic_speedup: analytic_speedup(config)?,
    };
    Ok(RunOutcome { row, metrics, trace })
}

/// Run and persist the result row and trace to the paths named in the config.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutcome> {
    let outcome = run(config, config.trace.is_some())?;
    if let Some(path) = &config.output {
        write_rows_to_path(path, std::slice::from_ref(&outcome.row))?;
    }
    if let (Some(path), Some(trace)) = (&config.trace, &outcome.trace) {
        create_parent(path)?;
        trace.write_csv(File::create(path)?)?;
    }
    Ok(outcome)
}

pub fn write_rows<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_rows_to_path<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    create_parent(path)?;
    write_rows(File::create(path)?, rows)
}

pub(crate) fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}
