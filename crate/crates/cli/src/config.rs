//! Run settings: defaults, overlaid by a JSON config file, overlaid by flags.

use std::path::Path;

use coherelab::eval::DEFAULT_SMOOTHING_GRID;
use coherelab::labeling::BaselineConfig;
use coherelab::model::AnalysisConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Gold,
    External,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

/// Every tunable of a run, fully resolved. Echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub alpha: f64,
    pub poms_subscale_max: f64,
    pub min_sessions_per_client: usize,
    pub source: Source,
    pub k_folds: usize,
    pub dev_fraction: f64,
    pub balance_ratio: f64,
    pub seed: u64,
    pub smoothing: f64,
    pub smoothing_grid: Vec<f64>,
    pub max_tokens: usize,
    pub format: Format,
    pub adapter: Option<AdapterCommand>,
}

impl Default for Settings {
    fn default() -> Self {
        let analysis = AnalysisConfig::default();
        let baseline = BaselineConfig::default();
        Self {
            alpha: analysis.alpha,
            poms_subscale_max: analysis.poms_subscale_max,
            min_sessions_per_client: analysis.min_sessions_per_client,
            source: Source::Gold,
            k_folds: 10,
            dev_fraction: 0.1,
            balance_ratio: 0.5,
            seed: 0,
            smoothing: baseline.smoothing,
            smoothing_grid: DEFAULT_SMOOTHING_GRID.to_vec(),
            max_tokens: baseline.max_tokens,
            format: Format::Table,
            adapter: None,
        }
    }
}

/// Flag values; `None` means not given on the command line.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON file with any subset of the settings.
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long = "min-sessions", global = true)]
    pub min_sessions: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub source: Option<Source>,
    #[arg(long = "k-folds", global = true)]
    pub k_folds: Option<usize>,
    #[arg(long = "dev-fraction", global = true)]
    pub dev_fraction: Option<f64>,
    #[arg(long = "balance-ratio", global = true)]
    pub balance_ratio: Option<f64>,
    #[arg(long, global = true, env = "COHERELAB_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

impl Settings {
    pub fn resolve(flags: &Overrides) -> Result<Self, CliError> {
        let mut s = match &flags.config {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        macro_rules! overlay {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = flags.$flag.clone() { s.$field = v; })*
            };
        }
        overlay!(
            alpha => alpha,
            min_sessions => min_sessions_per_client,
            source => source,
            k_folds => k_folds,
            dev_fraction => dev_fraction,
            balance_ratio => balance_ratio,
            seed => seed,
            format => format
        );
        s.analysis().validate().map_err(CliError::Usage)?;
        if !(s.balance_ratio > 0.0 && s.balance_ratio <= 1.0) {
            return Err(CliError::Usage(format!("balance ratio must lie in (0, 1], got {}", s.balance_ratio)));
        }
        if !(s.smoothing > 0.0) || s.smoothing_grid.iter().any(|v| !(*v > 0.0)) || s.smoothing_grid.is_empty() {
            return Err(CliError::Usage("smoothing values must be positive".into()));
        }
        Ok(s)
    }

    fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            alpha: self.alpha,
            poms_subscale_max: self.poms_subscale_max,
            min_sessions_per_client: self.min_sessions_per_client,
        }
    }

    pub fn baseline(&self) -> BaselineConfig {
        BaselineConfig {
            smoothing: self.smoothing,
            max_tokens: self.max_tokens,
        }
    }
}
