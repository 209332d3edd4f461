//! Experiment configuration files (TOML).
//!
//! ```toml
//! seed = 2019
//! output = "results"
//!
//! [distribution]
//! kind = "truncated-log-normal"   # or "uniform", "tabulated"
//! mu = 0.0
//! sigma = 0.3
//! upper = 2.01
//!
//! [simulation]
//! n_values = [10, 100]
//! rho_values = [0.1, 0.5]
//! k_grid = [0, 1, 2, 4, 8, "inf"]
//! repeats = 100
//!
//! [strategy]
//! trials = 100
//! slopes = [-0.5, -0.25]
//! ```
//!
//! Every section and field is optional; omitted values take the defaults
//! shown by `Default`.

use std::path::Path;

use crowd_auction::distributions::DistributionSpec;
use crowd_auction::mechanism::AlphaModel;
use crowd_auction::payment::PaymentRule;
use crowd_auction::simulation::SimulationConfig;
use crowd_auction::strategy::StudyConfig;
use crowd_auction::Exponent;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub distribution: DistributionSpec,
    pub mechanism: MechanismSection,
    pub simulation: SimulationSection,
    pub strategy: StrategySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2019,
            output: None,
            distribution: DistributionSpec::default(),
            mechanism: MechanismSection::default(),
            simulation: SimulationSection::default(),
            strategy: StrategySection::default(),
        }
    }
}

/// Parameters of a single auction: `c` directly, or `ρ` with `c = 100 n ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismSection {
    pub k: Exponent,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl Default for MechanismSection {
    fn default() -> Self {
        Self {
            k: Exponent::Finite(2.0),
            c: None,
            rho: None,
            n: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum AlphaSpec {
    Expected,
    Beta { concentration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub n_values: Vec<usize>,
    pub rho_values: Vec<f64>,
    pub k_grid: Vec<Exponent>,
    pub repeats: usize,
    pub quantiles: Vec<f64>,
    pub gammas: Vec<f64>,
    pub probe_capacity: f64,
    pub probe_beta: f64,
    pub alpha: AlphaSpec,
    pub payment_tolerance: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let d = SimulationConfig::default();
        Self {
            n_values: d.n_values,
            rho_values: d.rho_values,
            k_grid: d.k_grid,
            repeats: d.repeats,
            quantiles: d.quantiles,
            gammas: d.gammas,
            probe_capacity: d.probe_capacity,
            probe_beta: d.probe_beta,
            alpha: AlphaSpec::Expected,
            payment_tolerance: d.payment.relative_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySection {
    pub n: usize,
    pub rho: f64,
    pub trials: usize,
    pub k_grid: Vec<Exponent>,
    pub slopes: Vec<f64>,
}

impl Default for StrategySection {
    fn default() -> Self {
        let d = StudyConfig::default();
        Self {
            n: d.n,
            rho: d.rho,
            trials: d.trials,
            k_grid: d.k_grid,
            slopes: d.slopes,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text)
            .map_err(|e| CliError::Configuration(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical serialisation, so reordered or reformatted
    /// files that mean the same thing hash alike.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.strategy;
        if s.k_grid.is_empty() || s.slopes.is_empty() || s.trials == 0 || s.n == 0 {
            return Err(CliError::Configuration(
                "strategy grids must be non-empty with trials, n >= 1".into(),
            ));
        }
        if !(s.rho > 0.0 && s.rho <= 1.0) {
            return Err(CliError::Configuration("strategy rho must lie in (0, 1]".into()));
        }
        self.simulation_config().validate()?;
        Ok(())
    }

    pub fn simulation_config(&self) -> SimulationConfig {
        let s = &self.simulation;
        SimulationConfig {
            n_values: s.n_values.clone(),
            rho_values: s.rho_values.clone(),
            k_grid: s.k_grid.clone(),
            repeats: s.repeats,
            quantiles: s.quantiles.clone(),
            gammas: s.gammas.clone(),
            probe_capacity: s.probe_capacity,
            probe_beta: s.probe_beta,
            alpha: match s.alpha {
                AlphaSpec::Expected => AlphaModel::Expected,
                AlphaSpec::Beta { concentration } => AlphaModel::Beta { concentration },
            },
            seed: self.seed,
            payment: PaymentRule {
                relative_tolerance: s.payment_tolerance,
                ..PaymentRule::default()
            },
        }
    }

    pub fn study_config(&self) -> StudyConfig {
        let s = &self.strategy;
        StudyConfig {
            n: s.n,
            rho: s.rho,
            trials: s.trials,
            k_grid: s.k_grid.clone(),
            slopes: s.slopes.clone(),
            seed: self.seed,
            ..StudyConfig::default()
        }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
