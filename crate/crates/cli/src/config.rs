//! TOML run configuration. Every key is optional; command-line flags take
//! precedence, then the file, then the library defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use iss_core::coding::Coding;
use iss_core::dagtest::ParentRule;
use iss_core::pvalue::OrderingRule;
use iss_core::simulation::{Experiment, Shape};
use iss_core::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub items: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corners: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_rule: Option<ParentRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coding_red_to_blue: Option<Coding>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coding_blue_to_red: Option<Coding>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ordering: Option<OrderingRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoffs: Option<Vec<u8>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tiering: Option<TieringConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TieringConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Item name to tier; when absent, tiers come from the exposure preset
    /// or, failing that, from marginal risk ratios in the blue part.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_tiers: Option<BTreeMap<String, usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tier_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Experiment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_mass: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<Shape>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed0: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<Vec<f64>>>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Fills every unset key of `self` from `lower`.
    pub fn or(self, lower: RunConfig) -> RunConfig {
        RunConfig {
            data: self.data.or(lower.data),
            items: self.items.or(lower.items),
            corners: self.corners.or(lower.corners),
            tau: self.tau.or(lower.tau),
            alpha: self.alpha.or(lower.alpha),
            kappa: self.kappa.or(lower.kappa),
            parent_rule: self.parent_rule.or(lower.parent_rule),
            coding_red_to_blue: self.coding_red_to_blue.or(lower.coding_red_to_blue),
            coding_blue_to_red: self.coding_blue_to_red.or(lower.coding_blue_to_red),
            ordering: self.ordering.or(lower.ordering),
            seed: self.seed.or(lower.seed),
            threads: self.threads.or(lower.threads),
            out_dir: self.out_dir.or(lower.out_dir),
            cutoffs: self.cutoffs.or(lower.cutoffs),
            top: self.top.or(lower.top),
            tiering: match (self.tiering, lower.tiering) {
                (Some(a), Some(b)) => Some(TieringConfig {
                    enabled: a.enabled || b.enabled,
                    item_tiers: a.item_tiers.or(b.item_tiers),
                    tier_weights: a.tier_weights.or(b.tier_weights),
                }),
                (a, b) => a.or(b),
            },
            simulation: match (self.simulation, lower.simulation) {
                (Some(a), Some(b)) => Some(SimulationConfig {
                    mode: a.mode.or(b.mode),
                    n: a.n.or(b.n),
                    target_mass: a.target_mass.or(b.target_mass),
                    shape: a.shape.or(b.shape),
                    replications: a.replications.or(b.replications),
                    seed0: a.seed0.or(b.seed0),
                    beta: a.beta.or(b.beta),
                    gamma: a.gamma.or(b.gamma),
                    marginals: a.marginals.or(b.marginals),
                }),
                (a, b) => a.or(b),
            },
        }
    }
}
