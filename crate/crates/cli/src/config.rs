//! The TOML run configuration and its merge with command-line flags.
//!
//! Every field is optional so that a file can be partial and flags can fill
//! the gaps. Precedence, lowest first: built-in defaults, the config file,
//! the `BESTARM_OUT` environment variable (output directory only), flags.

use std::path::{Path, PathBuf};

use bestarm::harness::DEFAULT_MAX_ROUNDS;
use bestarm::{BanditInstance, ExperimentConfig, FamilyKind, TrackingRule};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUT_ENV: &str = "BESTARM_OUT";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default)]
    pub instance: InstanceSection,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSection {
    pub family: Option<String>,
    pub sigma: Option<f64>,
    pub means: Option<Vec<f64>>,
    pub m: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub rule: Option<TrackingRule>,
    pub max_rounds: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub delta: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub trace: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub deltas: Option<Vec<f64>>,
    pub rules: Option<Vec<TrackingRule>>,
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config values are always representable")
    }

    /// Overlay every field that `other` sets.
    pub fn merge(&mut self, other: CliConfig) {
        fn take<T>(slot: &mut Option<T>, v: Option<T>) {
            if v.is_some() {
                *slot = v;
            }
        }
        take(&mut self.instance.family, other.instance.family);
        take(&mut self.instance.sigma, other.instance.sigma);
        take(&mut self.instance.means, other.instance.means);
        take(&mut self.instance.m, other.instance.m);
        take(&mut self.algorithm.rule, other.algorithm.rule);
        take(&mut self.algorithm.max_rounds, other.algorithm.max_rounds);
        take(&mut self.experiment.delta, other.experiment.delta);
        take(&mut self.experiment.trials, other.experiment.trials);
        take(&mut self.experiment.seed, other.experiment.seed);
        take(&mut self.output.dir, other.output.dir);
        take(&mut self.output.trace, other.output.trace);
        take(&mut self.sweep.deltas, other.sweep.deltas);
        take(&mut self.sweep.rules, other.sweep.rules);
    }

    pub fn family(&self) -> Result<FamilyKind, CliError> {
        let name = self.instance.family.as_deref().unwrap_or("bernoulli");
        let kind = match name.to_ascii_lowercase().as_str() {
            "bernoulli" => FamilyKind::Bernoulli,
            "poisson" => FamilyKind::Poisson,
            "gaussian" => FamilyKind::gaussian(self.instance.sigma.unwrap_or(1.0)).map_err(usage)?,
            other => return Err(CliError::Usage(format!("unknown family `{other}`"))),
        };
        if self.instance.sigma.is_some() && !matches!(kind, FamilyKind::Gaussian { .. }) {
            return Err(CliError::Usage("--sigma only applies to the gaussian family".into()));
        }
        Ok(kind)
    }

    pub fn instance(&self) -> Result<BanditInstance, CliError> {
        let means = self
            .instance
            .means
            .clone()
            .ok_or_else(|| CliError::Usage("no means given (use --means or [instance] means)".into()))?;
        let m = self.instance.m.unwrap_or(1);
        BanditInstance::new(self.family()?, means, m).map_err(usage)
    }

    pub fn delta(&self) -> f64 {
        self.experiment.delta.unwrap_or(0.1)
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::new(
            self.instance()?,
            self.algorithm.rule.unwrap_or(TrackingRule::DTracking),
            self.delta(),
            self.experiment.trials.unwrap_or(100),
            self.experiment.seed.unwrap_or(0),
        )
        .map_err(usage)?;
        cfg.max_rounds = self.algorithm.max_rounds.unwrap_or(DEFAULT_MAX_ROUNDS);
        cfg.trace = self.output.trace.unwrap_or(false);
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_ENV).filter(|p| !p.is_empty()) {
            return PathBuf::from(p);
        }
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("bestarm-out"))
    }
}

fn usage(e: bestarm::Error) -> CliError {
    CliError::Usage(e.to_string())
}
