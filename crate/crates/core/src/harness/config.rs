use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytic::{check_alpha, check_gamma};
use crate::error::{Error, Result};
use crate::pipesim::{AcceptanceOracle, PipelineConfig};
use crate::speccore::{mix2, RngStream};
use crate::toylm::ToyLm;

/// Vocabulary size used when a toy-model config leaves `vocab` unset.
pub const DEFAULT_VOCAB: usize = 32;

const SIM_STREAM: u64 = 0x51;
const LM_SEED_STREAM: u64 = 0x1a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Autoregressive,
    Eesd,
    Ppsd,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Autoregressive => "autoregressive",
            Regime::Eesd => "eesd",
            Regime::Ppsd => "ppsd",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autoregressive" | "ar" => Ok(Regime::Autoregressive),
            "eesd" => Ok(Regime::Eesd),
            "ppsd" => Ok(Regime::Ppsd),
            other => Err(Error::param("regime", format!("unknown regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Bernoulli,
    ToylmGreedy,
    ToylmSampling,
}

impl std::str::FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(OracleKind::Bernoulli),
            "toylm-greedy" => Ok(OracleKind::ToylmGreedy),
            "toylm-sampling" => Ok(OracleKind::ToylmSampling),
            other => Err(Error::param("oracle", format!("unknown oracle `{other}`"))),
        }
    }
}

/// One simulation run. Keys in config files are exactly these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub regime: Regime,
    pub n_layers: usize,
    pub exit_depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_stage: Option<usize>,
    /// Draft length; required for `eesd`, rejected otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<u32>,
    pub oracle: OracleKind,
    /// Bernoulli acceptance rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Toy-model exit-head misalignment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<usize>,
    /// Toy-model seed; derived from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lm_seed: Option<u64>,
    /// Tokens to commit (the toy-model paths treat it as `max_tokens`).
    pub horizon: u64,
    pub seed: u64,
    #[serde(default)]
    pub hop_latency: u64,
    #[serde(default)]
    pub cache_reuse: bool,
    #[serde(default)]
    pub steady_state: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Bernoulli-oracle config with no optional knobs set.
    pub fn bernoulli(regime: Regime, n_layers: usize, exit_depth: usize, alpha: f64, horizon: u64) -> Self {
        ExperimentConfig {
            regime,
            n_layers,
            exit_depth,
            exit_stage: None,
            gamma: None,
            oracle: OracleKind::Bernoulli,
            alpha: (regime != Regime::Autoregressive).then_some(alpha),
            beta: None,
            vocab: None,
            lm_seed: None,
            horizon,
            seed: 0,
            hop_latency: 0,
            cache_reuse: false,
            steady_state: false,
            output: None,
            trace: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline()?;
        match (self.regime, self.gamma) {
            (Regime::Eesd, Some(g)) => check_gamma(g)?,
            (Regime::Eesd, None) => return Err(Error::param("gamma", "required for the eesd regime")),
            (_, Some(_)) => return Err(Error::param("gamma", "only applies to the eesd regime")),
            (_, None) => {}
        }
        if self.horizon < 1 {
            return Err(Error::param("horizon", "must be >= 1"));
        }
        match self.oracle {
            OracleKind::Bernoulli => {
                if self.beta.is_some() || self.vocab.is_some() || self.lm_seed.is_some() {
                    return Err(Error::param("beta", "toy-model fields require a toylm oracle"));
                }
                match (self.regime, self.alpha) {
                    (Regime::Autoregressive, _) => {}
                    (_, Some(a)) => check_alpha(a)?,
                    (_, None) => return Err(Error::param("alpha", "required for the bernoulli oracle")),
                }
            }
            OracleKind::ToylmGreedy | OracleKind::ToylmSampling => {
                if self.alpha.is_some() {
                    return Err(Error::param("alpha", "only applies to the bernoulli oracle"));
                }
                if self.beta.is_none() {
                    return Err(Error::param("beta", "required for toylm oracles"));
                }
                self.toy_lm()?;
            }
        }
        Ok(())
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::new(self.n_layers, self.exit_depth)?
            .with_hop_latency(self.hop_latency)
            .with_cache_reuse(self.cache_reuse)
            .with_steady_state(self.steady_state);
        if let Some(stage) = self.exit_stage {
            cfg = cfg.with_exit_stage(stage)?;
        }
        Ok(cfg)
    }

    /// Simulation stream derived from the top-level seed.
    pub fn sim_rng(&self) -> RngStream {
        RngStream::new(self.seed).derive(SIM_STREAM)
    }

    pub fn effective_lm_seed(&self) -> u64 {
        self.lm_seed.unwrap_or_else(|| mix2(self.seed, LM_SEED_STREAM))
    }

    pub fn toy_lm(&self) -> Result<ToyLm> {
        ToyLm::new(
            self.n_layers,
            self.vocab.unwrap_or(DEFAULT_VOCAB),
            self.effective_lm_seed(),
            self.beta.unwrap_or(0.0),
        )
    }

    pub fn acceptance_oracle(&self) -> Result<AcceptanceOracle> {
        Ok(match self.oracle {
            OracleKind::Bernoulli => AcceptanceOracle::Bernoulli {
                alpha: self.alpha.unwrap_or(0.0),
            },
            OracleKind::ToylmGreedy => AcceptanceOracle::ToyLmGreedy(self.toy_lm()?),
            OracleKind::ToylmSampling => AcceptanceOracle::ToyLmSampling(self.toy_lm()?),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}
