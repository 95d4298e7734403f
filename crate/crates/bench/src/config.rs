//! Experiment configuration schema.
//!
//! Configs are JSON documents tagged by an `experiment` field; unknown keys
//! are rejected. Every experiment has a complete default so the CLI can run
//! without a config file. The manifest hash covers the resolved config, so it
//! changes exactly when a semantically meaningful field changes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mdp_stealth::inventory::InventoryParams;
use mdp_stealth::linear::LinearSystemSpec;

/// Report schema version stamped into every manifest.
pub const REPORT_SCHEMA: &str = "mdp-stealth.report.v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentConfig {
    #[serde(rename = "inventory-tradeoff")]
    InventoryTradeoff(InventoryTradeoffConfig),
    #[serde(rename = "inventory-detect")]
    InventoryDetect(InventoryDetectConfig),
    #[serde(rename = "inventory-gamma-sweep")]
    InventoryGammaSweep(InventoryGammaSweepConfig),
    #[serde(rename = "linear-attack")]
    LinearAttack(LinearAttackConfig),
    #[serde(rename = "linear-frontier")]
    LinearFrontier(LinearFrontierConfig),
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::InventoryTradeoff(_) => "inventory-tradeoff",
            Self::InventoryDetect(_) => "inventory-detect",
            Self::InventoryGammaSweep(_) => "inventory-gamma-sweep",
            Self::LinearAttack(_) => "linear-attack",
            Self::LinearFrontier(_) => "linear-frontier",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::InventoryTradeoff(c) => c.seed,
            Self::InventoryDetect(c) => c.seed,
            Self::InventoryGammaSweep(c) => c.seed,
            Self::LinearAttack(c) => c.seed,
            Self::LinearFrontier(c) => c.seed,
        }
    }

    pub fn apply_seed(&mut self, seed: u64) {
        match self {
            Self::InventoryTradeoff(c) => c.seed = seed,
            Self::InventoryDetect(c) => c.seed = seed,
            Self::InventoryGammaSweep(c) => c.seed = seed,
            Self::LinearAttack(c) => c.seed = seed,
            Self::LinearFrontier(c) => c.seed = seed,
        }
    }

    pub fn apply_trials(&mut self, trials: usize) {
        match self {
            Self::InventoryTradeoff(c) => c.mc_trials = trials,
            Self::InventoryDetect(c) => c.trials = trials,
            Self::InventoryGammaSweep(_) => {}
            Self::LinearAttack(c) => c.trials = trials,
            Self::LinearFrontier(_) => {}
        }
    }

    /// Stable hash of the resolved configuration.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventoryTradeoffConfig {
    pub inventory: InventoryParams,
    pub gamma: f64,
    pub gamma_bar: f64,
    pub constrained_epsilons: Vec<f64>,
    pub lp_epsilons: Vec<f64>,
    pub penalized_betas: Vec<f64>,
    pub mc_trials: usize,
    pub mc_horizon: usize,
    pub seed: u64,
}

impl Default for InventoryTradeoffConfig {
    fn default() -> Self {
        Self {
            inventory: InventoryParams::default(),
            gamma: 0.95,
            gamma_bar: 0.95,
            constrained_epsilons: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            lp_epsilons: vec![0.05, 0.1, 0.15, 0.21, 0.3, 0.4],
            penalized_betas: vec![
                0.2, 1.0, 6.2, 20.0, 50.0, 124.0, 200.0, 240.0, 280.0, 320.0, 400.0, 1e9,
            ],
            mc_trials: 100,
            mc_horizon: 400,
            seed: 20_240_501,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventoryDetectConfig {
    pub inventory: InventoryParams,
    pub gamma: f64,
    pub gamma_bar: f64,
    pub constrained_epsilon: f64,
    pub lp_epsilon: f64,
    pub penalized_beta: f64,
    pub delta: f64,
    pub horizon_m: usize,
    pub change_time: usize,
    pub trials: usize,
    /// Trials whose full statistic trace is written to the trace CSV.
    pub trace_trials: usize,
    /// Post-change steps covered by the trace CSV.
    pub trace_steps: usize,
    pub seed: u64,
}

impl Default for InventoryDetectConfig {
    fn default() -> Self {
        Self {
            inventory: InventoryParams::default(),
            gamma: 0.95,
            gamma_bar: 0.95,
            constrained_epsilon: 3.0,
            lp_epsilon: 0.21,
            penalized_beta: 6.2,
            delta: 0.01,
            horizon_m: 1000,
            change_time: 25,
            trials: 200,
            trace_trials: 25,
            trace_steps: 200,
            seed: 20_240_502,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventoryGammaSweepConfig {
    pub inventory: InventoryParams,
    pub gamma: f64,
    pub epsilons: Vec<f64>,
    pub gamma_bars: Vec<f64>,
    pub mixing_horizon: usize,
    pub seed: u64,
}

impl Default for InventoryGammaSweepConfig {
    fn default() -> Self {
        Self {
            inventory: InventoryParams::default(),
            gamma: 0.95,
            epsilons: vec![0.05, 0.15, 0.3],
            gamma_bars: vec![0.9, 0.99, 0.999],
            mixing_horizon: 200,
            seed: 20_240_503,
        }
    }
}

/// The default 2-D plant: lightly damped open loop, full-rank input map,
/// stabilizing feedback with closed-loop eigenvalues near 0.001 and 0.134.
fn default_linear_system() -> LinearSystemSpec {
    LinearSystemSpec {
        a: vec![vec![0.7, 0.9], vec![1.5, 2.0]],
        b: vec![vec![0.0, 2.0], vec![4.0, 2.0]],
        k: vec![vec![-0.19, -0.26125], vec![-0.3325, -0.4275]],
        noise_cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearAttackConfig {
    pub system: LinearSystemSpec,
    pub betas: Vec<f64>,
    pub horizon: usize,
    pub change_time: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for LinearAttackConfig {
    fn default() -> Self {
        Self {
            system: default_linear_system(),
            betas: vec![0.1, 0.25, 0.35],
            horizon: 125,
            change_time: 25,
            trials: 2000,
            seed: 20_240_504,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearFrontierConfig {
    pub system: LinearSystemSpec,
    pub betas: Vec<f64>,
    pub bisection_tol: f64,
    pub seed: u64,
}

impl Default for LinearFrontierConfig {
    fn default() -> Self {
        Self {
            system: default_linear_system(),
            betas: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35],
            bisection_tol: 1e-5,
            seed: 20_240_505,
        }
    }
}

/// Run manifest written next to every report bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub files: Vec<String>,
}

/// Parse and validate a config document, reporting the JSON path of schema
/// violations.
pub fn parse_config(text: &str) -> anyhow::Result<ExperimentConfig> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match serde_json::from_value::<ExperimentConfig>(value.clone()) {
        Ok(cfg) => Ok(cfg),
        Err(e) => {
            // serde_json reports the failing field by name; surface the
            // experiment tag as the path root for context.
            let tag = value
                .get("experiment")
                .and_then(|v| v.as_str())
                .unwrap_or("<missing experiment tag>");
            anyhow::bail!("config schema error at experiment `{tag}`: {e}")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_hash_is_stable() {
        let cfg = ExperimentConfig::InventoryTradeoff(InventoryTradeoffConfig::default());
        let text = serde_json::to_string(&cfg).unwrap();
        let back = parse_config(&text).unwrap();
        assert_eq!(cfg.config_hash(), back.config_hash());
    }

    #[test]
    fn unknown_keys_rejected_with_context() {
        let text = r#"{"experiment":"inventory-detect","bogus_field":1}"#;
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("inventory-detect"), "{err}");
        assert!(err.contains("bogus_field"), "{err}");
    }

    #[test]
    fn hash_changes_with_any_semantic_field() {
        let base = InventoryDetectConfig::default();
        let h0 = ExperimentConfig::InventoryDetect(base.clone()).config_hash();
        let mut changed = base.clone();
        changed.lp_epsilon = 0.22;
        let h1 = ExperimentConfig::InventoryDetect(changed).config_hash();
        assert_ne!(h0, h1);
        let mut reseeded = base;
        reseeded.seed += 1;
        let h2 = ExperimentConfig::InventoryDetect(reseeded).config_hash();
        assert_ne!(h0, h2);
    }
}
