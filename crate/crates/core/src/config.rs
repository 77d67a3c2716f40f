//! Run configuration: TOML file schema, documented defaults, validation,
//! and CLI overrides.
//!
//! Every key has a default, so an empty file yields the standard
//! experiment: two operators, one dedicated carrier each plus a
//! six-carrier shared pool, interleaved placement, asymmetric load
//! (operator A's mean user counts double operator B's), 1000 snapshots.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::alloc::{BandPlan, SharingScenario};
use crate::operator::OperatorId;
use crate::radio::{Deployment, DeploymentParams, LoadModel, PlacementMode, RadioParams};
use crate::utility::UtilityWeights;

/// Protocol-side knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Maximum allowable number of outstanding favors per direction.
    pub cap_s: u32,
    /// Favor validity in snapshots.
    pub favor_duration: u32,
    /// Grant threshold while the gain history is empty, as a fraction of
    /// the grantor's current utility.
    pub bootstrap_grant_fraction: f64,
}

/// Fully validated run description; together with the seed it determines
/// the run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub operators: Vec<OperatorId>,
    pub plan: BandPlan,
    pub deployment: Deployment,
    pub radio: RadioParams,
    pub load: LoadModel,
    pub weights: BTreeMap<OperatorId, UtilityWeights>,
    pub protocol: ProtocolParams,
    pub snapshots: u64,
    /// Leading snapshots excluded from rate/utility summary statistics.
    pub warmup: u64,
    pub seed: u64,
}

impl RunConfig {
    /// The all-defaults experiment.
    pub fn default_experiment() -> RunConfig {
        FileConfig::default()
            .validate()
            .expect("defaults are valid")
    }

    /// Load states all operators start in at snapshot 0.
    pub fn initial_load(&self) -> BTreeMap<OperatorId, crate::radio::LoadState> {
        self.operators
            .iter()
            .map(|&op| (op, crate::radio::LoadState::High))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config key {key}: {constraint} (got {value})")]
    Range {
        key: &'static str,
        constraint: &'static str,
        value: String,
    },
}

fn range(key: &'static str, constraint: &'static str, value: impl fmt::Display) -> ConfigError {
    ConfigError::Range {
        key,
        constraint,
        value: value.to_string(),
    }
}

fn require(
    ok: bool,
    key: &'static str,
    constraint: &'static str,
    value: impl fmt::Display,
) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(range(key, constraint, value))
    }
}

// -- file schema -------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub band: BandSection,
    pub deployment: DeploymentSection,
    pub radio: RadioSection,
    pub load: LoadSection,
    pub utility: UtilitySection,
    pub protocol: ProtocolSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandSection {
    pub operators: i64,
    pub dedicated_per_operator: i64,
    pub pool_size: i64,
    pub scenario: SharingScenario,
}

impl Default for BandSection {
    fn default() -> Self {
        BandSection {
            operators: 2,
            dedicated_per_operator: 1,
            pool_size: 6,
            scenario: SharingScenario::LimitedPool,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentSection {
    pub building_width_m: f64,
    pub building_depth_m: f64,
    pub bs_per_operator: i64,
    pub tx_power_dbm: f64,
    pub placement: PlacementMode,
}

impl Default for DeploymentSection {
    fn default() -> Self {
        let d = DeploymentParams::default();
        DeploymentSection {
            building_width_m: d.building_width_m,
            building_depth_m: d.building_depth_m,
            bs_per_operator: d.bs_per_operator as i64,
            tx_power_dbm: d.tx_power_dbm,
            placement: d.placement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSection {
    pub pl0_db: f64,
    pub path_loss_exponent: f64,
    pub min_distance_m: f64,
    pub shadowing_sigma_db: f64,
    pub carrier_bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub spectral_efficiency_cap: f64,
}

impl Default for RadioSection {
    fn default() -> Self {
        let r = RadioParams::default();
        RadioSection {
            pl0_db: r.pl0_db,
            path_loss_exponent: r.path_loss_exponent,
            min_distance_m: r.min_distance_m,
            shadowing_sigma_db: r.shadowing_sigma_db,
            carrier_bandwidth_hz: r.carrier_bandwidth_hz,
            noise_figure_db: r.noise_figure_db,
            spectral_efficiency_cap: r.se_cap_bps_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadSection {
    pub p_stay: f64,
    /// Mean user count per operator in the high load state, indexed by
    /// operator.
    pub lambda_high: Vec<f64>,
    /// Mean user count per operator in the low load state.
    pub lambda_low: Vec<f64>,
}

impl Default for LoadSection {
    fn default() -> Self {
        LoadSection {
            p_stay: 0.8,
            lambda_high: vec![4.0, 2.0],
            lambda_low: vec![1.0, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilitySection {
    /// Weight on mean user rate, per operator.
    pub w_mean: Vec<f64>,
    /// Weight on the cell-edge rate, per operator.
    pub w_edge: Vec<f64>,
    /// Cell-edge percentile (nearest rank), shared by all operators.
    pub edge_percentile: f64,
}

impl Default for UtilitySection {
    fn default() -> Self {
        UtilitySection {
            w_mean: vec![0.5, 0.5],
            w_edge: vec![0.5, 0.5],
            edge_percentile: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub cap_s: i64,
    pub favor_duration: i64,
    pub bootstrap_grant_fraction: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            cap_s: 4,
            favor_duration: 1,
            bootstrap_grant_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub snapshots: i64,
    pub warmup: i64,
    pub seed: i64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            snapshots: 1000,
            warmup: 50,
            seed: 0,
        }
    }
}

/// CLI-level overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub snapshots: Option<u64>,
    pub scenario: Option<SharingScenario>,
    pub placement: Option<PlacementMode>,
}

impl FileConfig {
    /// Parses the raw TOML without validating ranges, so overrides can be
    /// applied before [`FileConfig::validate`].
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn with_overrides(mut self, overrides: &Overrides) -> Self {
        if let Some(seed) = overrides.seed {
            self.run.seed = seed as i64;
        }
        if let Some(snapshots) = overrides.snapshots {
            self.run.snapshots = snapshots as i64;
        }
        if let Some(scenario) = overrides.scenario {
            self.band.scenario = scenario;
        }
        if let Some(placement) = overrides.placement {
            self.deployment.placement = placement;
        }
        self
    }

    /// Checks every range and invariant and assembles the run description.
    pub fn validate(&self) -> Result<RunConfig, ConfigError> {
        let b = &self.band;
        if b.operators != 2 {
            return Err(range("band.operators", "must be 2 (decision logic is pairwise)", b.operators));
        }
        if !(0..=64).contains(&b.dedicated_per_operator) {
            return Err(range("band.dedicated_per_operator", "must be in 0..=64", b.dedicated_per_operator));
        }
        if !(0..=128).contains(&b.pool_size) {
            return Err(range("band.pool_size", "must be in 0..=128", b.pool_size));
        }
        if b.dedicated_per_operator == 0 && b.pool_size == 0 {
            return Err(range("band.pool_size", "band must contain at least one carrier", b.pool_size));
        }
        let operators = OperatorId::first(b.operators as usize);
        let plan = BandPlan::contiguous(
            &operators,
            b.dedicated_per_operator as u8,
            b.pool_size as u8,
            b.scenario,
        )
        .expect("contiguous numbering cannot overlap");

        let d = &self.deployment;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        require(
            positive(d.building_width_m),
            "deployment.building_width_m",
            "must be positive",
            d.building_width_m,
        )?;
        require(
            positive(d.building_depth_m),
            "deployment.building_depth_m",
            "must be positive",
            d.building_depth_m,
        )?;
        require(
            (1..=64).contains(&d.bs_per_operator),
            "deployment.bs_per_operator",
            "must be in 1..=64",
            d.bs_per_operator,
        )?;
        require(
            d.tx_power_dbm.is_finite(),
            "deployment.tx_power_dbm",
            "must be finite",
            d.tx_power_dbm,
        )?;
        let deployment = Deployment::build(
            &DeploymentParams {
                building_width_m: d.building_width_m,
                building_depth_m: d.building_depth_m,
                bs_per_operator: d.bs_per_operator as usize,
                tx_power_dbm: d.tx_power_dbm,
                placement: d.placement,
            },
            &operators,
        );

        let r = &self.radio;
        let nonnegative = |v: f64| v.is_finite() && v >= 0.0;
        require(r.pl0_db.is_finite(), "radio.pl0_db", "must be finite", r.pl0_db)?;
        require(
            positive(r.path_loss_exponent),
            "radio.path_loss_exponent",
            "must be positive",
            r.path_loss_exponent,
        )?;
        require(
            positive(r.min_distance_m),
            "radio.min_distance_m",
            "must be positive",
            r.min_distance_m,
        )?;
        require(
            nonnegative(r.shadowing_sigma_db),
            "radio.shadowing_sigma_db",
            "must be nonnegative",
            r.shadowing_sigma_db,
        )?;
        require(
            positive(r.carrier_bandwidth_hz),
            "radio.carrier_bandwidth_hz",
            "must be positive",
            r.carrier_bandwidth_hz,
        )?;
        require(
            nonnegative(r.noise_figure_db),
            "radio.noise_figure_db",
            "must be nonnegative",
            r.noise_figure_db,
        )?;
        require(
            positive(r.spectral_efficiency_cap),
            "radio.spectral_efficiency_cap",
            "must be positive",
            r.spectral_efficiency_cap,
        )?;
        let radio = RadioParams {
            pl0_db: r.pl0_db,
            path_loss_exponent: r.path_loss_exponent,
            min_distance_m: r.min_distance_m,
            shadowing_sigma_db: r.shadowing_sigma_db,
            carrier_bandwidth_hz: r.carrier_bandwidth_hz,
            noise_figure_db: r.noise_figure_db,
            se_cap_bps_hz: r.spectral_efficiency_cap,
        };

        let l = &self.load;
        require(
            (0.0..=1.0).contains(&l.p_stay),
            "load.p_stay",
            "must be in [0, 1]",
            l.p_stay,
        )?;
        require(
            l.lambda_high.len() == operators.len(),
            "load.lambda_high",
            "needs one entry per operator",
            l.lambda_high.len(),
        )?;
        require(
            l.lambda_low.len() == operators.len(),
            "load.lambda_low",
            "needs one entry per operator",
            l.lambda_low.len(),
        )?;
        for &v in l.lambda_high.iter().chain(l.lambda_low.iter()) {
            require(nonnegative(v), "load.lambda_high", "means must be nonnegative", v)?;
        }
        let load = LoadModel {
            p_stay: l.p_stay,
            lambda_high: operators
                .iter()
                .copied()
                .zip(l.lambda_high.iter().copied())
                .collect(),
            lambda_low: operators
                .iter()
                .copied()
                .zip(l.lambda_low.iter().copied())
                .collect(),
        };

        let u = &self.utility;
        if u.w_mean.len() != operators.len() {
            return Err(range("utility.w_mean", "needs one entry per operator", u.w_mean.len()));
        }
        if u.w_edge.len() != operators.len() {
            return Err(range("utility.w_edge", "needs one entry per operator", u.w_edge.len()));
        }
        let mut weights = BTreeMap::new();
        for (i, &op) in operators.iter().enumerate() {
            let w = UtilityWeights::new(u.w_mean[i], u.w_edge[i], u.edge_percentile)
                .map_err(|e| ConfigError::Range {
                    key: "utility.w_mean",
                    constraint: "weights must be nonnegative, sum to 1, edge percentile in (0, 50]",
                    value: e.to_string(),
                })?;
            weights.insert(op, w);
        }

        let p = &self.protocol;
        require(p.cap_s >= 1, "protocol.cap_s", "must be at least 1", p.cap_s)?;
        require(
            p.favor_duration >= 1,
            "protocol.favor_duration",
            "must be at least 1",
            p.favor_duration,
        )?;
        require(
            nonnegative(p.bootstrap_grant_fraction),
            "protocol.bootstrap_grant_fraction",
            "must be nonnegative",
            p.bootstrap_grant_fraction,
        )?;

        let run = &self.run;
        require(run.snapshots >= 0, "run.snapshots", "must be nonnegative", run.snapshots)?;
        require(run.warmup >= 0, "run.warmup", "must be nonnegative", run.warmup)?;
        require(run.seed >= 0, "run.seed", "must be nonnegative", run.seed)?;

        Ok(RunConfig {
            operators,
            plan,
            deployment,
            radio,
            load,
            weights,
            protocol: ProtocolParams {
                cap_s: p.cap_s as u32,
                favor_duration: p.favor_duration as u32,
                bootstrap_grant_fraction: p.bootstrap_grant_fraction,
            },
            snapshots: run.snapshots as u64,
            warmup: run.warmup as u64,
            seed: run.seed as u64,
        })
    }
}

/// Parses a TOML config file into a validated run description.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

/// Same as [`parse_config`] but from an in-memory string.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let file: FileConfig = toml::from_str(text)?;
    file.validate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::LoadState;

    #[test]
    fn empty_config_yields_the_default_experiment() {
        let config = parse_config_str("").unwrap();
        assert_eq!(config.operators.len(), 2);
        assert_eq!(config.plan.pool().len(), 6);
        assert_eq!(config.plan.scenario(), SharingScenario::LimitedPool);
        assert_eq!(config.snapshots, 1000);
        assert_eq!(config.protocol.cap_s, 4);
        assert_eq!(config.protocol.favor_duration, 1);
        assert_eq!(config.warmup, 50);
        // load asymmetry: operator A's means are double operator B's
        for state in [LoadState::High, LoadState::Low] {
            let a = config.load.lambda(OperatorId::A, state);
            let b = config.load.lambda(OperatorId::B, state);
            assert_eq!(a, 2.0 * b);
        }
    }

    #[test]
    fn negative_pool_size_names_the_key() {
        let err = parse_config_str("[band]\npool_size = -1\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("band.pool_size"), "got: {text}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config_str("[band]\npool_sizee = 4\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("pool_sizee"), "got: {text}");
    }

    #[test]
    fn mutual_renting_scenario_is_accepted() {
        let config = parse_config_str("[band]\nscenario = \"mutual_renting\"\npool_size = 0\n")
            .unwrap();
        assert_eq!(config.plan.scenario(), SharingScenario::MutualRenting);
        assert!(config.plan.pool().is_empty());
    }

    #[test]
    fn weight_invariant_is_enforced() {
        let err = parse_config_str("[utility]\nw_mean = [0.7, 0.5]\nw_edge = [0.5, 0.5]\n")
            .unwrap_err();
        assert!(err.to_string().contains("sum to 1"));
    }

    #[test]
    fn overrides_take_effect() {
        let file: FileConfig = toml::from_str("").unwrap();
        let config = file
            .with_overrides(&Overrides {
                seed: Some(9),
                snapshots: Some(77),
                scenario: Some(SharingScenario::MutualRenting),
                placement: Some(PlacementMode::Separated),
            })
            .validate()
            .unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.snapshots, 77);
        assert_eq!(config.plan.scenario(), SharingScenario::MutualRenting);
        assert_eq!(config.deployment.placement, PlacementMode::Separated);
    }

    #[test]
    fn empty_band_is_rejected() {
        let err = parse_config_str("[band]\ndedicated_per_operator = 0\npool_size = 0\n")
            .unwrap_err();
        assert!(err.to_string().contains("at least one carrier"));
    }
}
