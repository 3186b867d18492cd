use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OracleKind, Regime};
use super::run::{run, ResultRow};
use crate::analytic::{self, SpeedupParams};
use crate::error::{Error, Result};

/// Largest number of cells a sweep may expand to.
pub const MAX_SWEEP_CELLS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Alpha,
    Gamma,
    Beta,
    NLayers,
    ExitDepth,
    ExitStage,
    Horizon,
    Seed,
    HopLatency,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.replace('-', "_").as_str() {
            "alpha" => SweepParam::Alpha,
            "gamma" => SweepParam::Gamma,
            "beta" => SweepParam::Beta,
            "n_layers" => SweepParam::NLayers,
            "exit_depth" => SweepParam::ExitDepth,
            "exit_stage" => SweepParam::ExitStage,
            "horizon" => SweepParam::Horizon,
            "seed" => SweepParam::Seed,
            "hop_latency" => SweepParam::HopLatency,
            other => return Err(Error::param("sweep", format!("unknown parameter `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl SweepAxis {
    /// Parses `name=v1,v2,…` where each item may also be an inclusive
    /// integer range `lo..hi`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, list) = spec
            .split_once('=')
            .ok_or_else(|| Error::param("sweep", format!("expected name=values, got `{spec}`")))?;
        let mut values = Vec::new();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if let Some((lo, hi)) = item.split_once("..") {
                let lo: i64 = lo.trim().parse().map_err(|_| bad_value(item))?;
                let hi: i64 = hi.trim().parse().map_err(|_| bad_value(item))?;
                values.extend((lo..=hi).map(|v| v as f64));
            } else {
                values.push(item.parse().map_err(|_| bad_value(item))?);
            }
        }
        Ok(SweepAxis {
            param: name.trim().parse()?,
            values,
        })
    }
}

fn bad_value(item: &str) -> Error {
    Error::param("sweep", format!("cannot parse `{item}`"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    pub axes: Vec<SweepAxis>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::param(
                "axes",
                format!("expected one or two swept parameters, got {}", self.axes.len()),
            ));
        }
        if let Some(axis) = self.axes.iter().find(|a| a.values.is_empty()) {
            return Err(Error::param("values", format!("empty value list for {:?}", axis.param)));
        }
        if self.axes.len() == 2 && self.axes[0].param == self.axes[1].param {
            return Err(Error::param("axes", "the same parameter is swept twice"));
        }
        let cells = self
            .axes
            .iter()
            .try_fold(1usize, |acc, a| acc.checked_mul(a.values.len()));
        match cells {
            Some(n) if n <= MAX_SWEEP_CELLS => Ok(()),
            _ => Err(Error::param("axes", format!("sweep exceeds {MAX_SWEEP_CELLS} cells"))),
        }
    }

    /// Cell configurations in row order; the first axis varies slowest.
    pub fn cells(&self) -> Result<Vec<ExperimentConfig>> {
        self.validate()?;
        let mut cells = vec![self.base.clone()];
        for axis in &self.axes {
            let mut next = Vec::with_capacity(cells.len() * axis.values.len());
            for cell in &cells {
                for &v in &axis.values {
                    let mut c = cell.clone();
                    apply(&mut c, axis.param, v)?;
                    next.push(c);
                }
            }
            cells = next;
        }
        Ok(cells)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn integral(param: SweepParam, v: f64) -> Result<u64> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(Error::param(
            "values",
            format!("{param:?} needs non-negative integers, got {v}"),
        ))
    }
}

fn apply(c: &mut ExperimentConfig, param: SweepParam, v: f64) -> Result<()> {
    match param {
        SweepParam::Alpha => c.alpha = Some(v),
        SweepParam::Beta => c.beta = Some(v),
        SweepParam::Gamma => c.gamma = Some(integral(param, v)? as u32),
        SweepParam::NLayers => c.n_layers = integral(param, v)? as usize,
        SweepParam::ExitDepth => c.exit_depth = integral(param, v)? as usize,
        SweepParam::ExitStage => c.exit_stage = Some(integral(param, v)? as usize),
        SweepParam::Horizon => c.horizon = integral(param, v)?,
        SweepParam::Seed => c.seed = integral(param, v)?,
        SweepParam::HopLatency => c.hop_latency = integral(param, v)?,
    }
    Ok(())
}

/// A result row plus the closed-form values for the same cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub cell: usize,
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
    pub analytic_alpha_all: Option<f64>,
    pub analytic_eesd: Option<f64>,
    pub analytic_ppsd: Option<f64>,
    pub analytic_lambda: Option<f64>,
}

impl SweepRow {
    fn new(cell: usize, config: &ExperimentConfig, r: ResultRow) -> Result<Self> {
        let alpha = match config.oracle {
            OracleKind::Bernoulli => config.alpha,
            _ => None,
        };
        let params = match (alpha, config.gamma) {
            (Some(a), Some(g)) => Some(SpeedupParams::new(a, g, config.n_layers, config.exit_depth)?),
            _ => None,
        };
        let analytic_alpha_all = match config.regime {
            Regime::Eesd => params
                .map(|p| analytic::overall_acceptance(p.alpha, p.gamma))
                .transpose()?,
            Regime::Ppsd => alpha,
            Regime::Autoregressive => None,
        };
        Ok(SweepRow {
            cell,
            regime: r.regime,
            n_layers: r.n_layers,
            exit_depth: r.exit_depth,
            gamma: r.gamma,
            alpha: r.alpha,
            beta: r.beta,
            seed: r.seed,
            horizon: r.horizon,
            committed: r.committed,
            ticks: r.ticks,
            accepts: r.accepts,
            rejects: r.rejects,
            alpha_all: r.alpha_all,
            throughput: r.throughput,
            speedup: r.speedup,
            analytic_speedup: r.analytic_speedup,
            analytic_alpha_all,
            analytic_eesd: params.as_ref().map(analytic::eesd_speedup).transpose()?,
            analytic_ppsd: alpha
                .map(|a| analytic::ppsd_speedup(a, config.n_layers, config.exit_depth))
                .transpose()?,
            analytic_lambda: params.as_ref().map(analytic::ppsd_over_eesd_lambda).transpose()?,
        })
    }
}

/// Run every cell, in parallel, and return rows in cell order.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let cells = spec.cells()?;
    for (i, c) in cells.iter().enumerate() {
        c.validate()
            .map_err(|e| Error::Config(format!("sweep cell {i}: {e}")))?;
    }
    cells
        .par_iter()
        .enumerate()
        .map(|(i, c)| SweepRow::new(i, c, run(c, false)?.row))
        .collect()
}
