//! Indoor deployment snapshots and the downlink radio model.
//!
//! Covers base station placement, the log-distance path loss with
//! log-normal shadowing, per-snapshot user drops driven by a two-state
//! load chain, and the SINR / rate / interference computations the
//! negotiation logic consumes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::alloc::{AllocationState, CarrierId};
use crate::operator::OperatorId;

/// How base stations of different operators are laid out in the building.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementMode {
    /// Each operator covers its own slice of the building: the
    /// low-interference sanity case.
    Separated,
    /// Base stations of the operators alternate across the building,
    /// producing high inter-operator interference.
    Interleaved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub operator: OperatorId,
    /// Position in meters within the building rectangle.
    pub position: (f64, f64),
    /// Transmit power per carrier, dBm.
    pub tx_power_dbm: f64,
}

impl BaseStation {
    pub fn tx_power_mw(&self) -> f64 {
        dbm_to_mw(self.tx_power_dbm)
    }
}

/// Static part of a run: the building and the base stations inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    /// Building width and depth in meters.
    pub building: (f64, f64),
    pub base_stations: Vec<BaseStation>,
    pub placement: PlacementMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeploymentParams {
    pub building_width_m: f64,
    pub building_depth_m: f64,
    pub bs_per_operator: usize,
    pub tx_power_dbm: f64,
    pub placement: PlacementMode,
}

impl Default for DeploymentParams {
    fn default() -> Self {
        DeploymentParams {
            building_width_m: 100.0,
            building_depth_m: 50.0,
            bs_per_operator: 2,
            tx_power_dbm: 24.0,
            placement: PlacementMode::Separated,
        }
    }
}

impl Deployment {
    /// Places base stations on the building's long axis.
    ///
    /// Interleaved: operators alternate along the axis. Separated: the
    /// building is split into one slab per operator and each operator's
    /// stations spread inside its own slab.
    pub fn build(params: &DeploymentParams, operators: &[OperatorId]) -> Deployment {
        let (w, d) = (params.building_width_m, params.building_depth_m);
        let n_ops = operators.len();
        let per_op = params.bs_per_operator;
        let mut base_stations = Vec::with_capacity(n_ops * per_op);
        match params.placement {
            PlacementMode::Interleaved => {
                let total = n_ops * per_op;
                for i in 0..total {
                    base_stations.push(BaseStation {
                        operator: operators[i % n_ops],
                        position: (w * (i as f64 + 0.5) / total as f64, d / 2.0),
                        tx_power_dbm: params.tx_power_dbm,
                    });
                }
            }
            PlacementMode::Separated => {
                let slab = w / n_ops as f64;
                for (k, &op) in operators.iter().enumerate() {
                    for j in 0..per_op {
                        base_stations.push(BaseStation {
                            operator: op,
                            position: (
                                slab * k as f64 + slab * (j as f64 + 0.5) / per_op as f64,
                                d / 2.0,
                            ),
                            tx_power_dbm: params.tx_power_dbm,
                        });
                    }
                }
            }
        }
        Deployment {
            building: (w, d),
            base_stations,
            placement: params.placement,
        }
    }

    /// Rectangle `(x0, y0, x1, y1)` users of `op` are dropped in.
    pub fn service_area(&self, op: OperatorId, operators: &[OperatorId]) -> (f64, f64, f64, f64) {
        let (w, d) = self.building;
        match self.placement {
            PlacementMode::Interleaved => (0.0, 0.0, w, d),
            PlacementMode::Separated => {
                let n_ops = operators.len() as f64;
                let k = operators.iter().position(|&o| o == op).unwrap_or(0) as f64;
                let slab = w / n_ops;
                (slab * k, 0.0, slab * (k + 1.0), d)
            }
        }
    }

    pub fn stations_of(&self, op: OperatorId) -> impl Iterator<Item = (usize, &BaseStation)> {
        self.base_stations
            .iter()
            .enumerate()
            .filter(move |(_, b)| b.operator == op)
    }

    pub fn validate(&self) -> Result<(), RadioError> {
        let (w, d) = self.building;
        if !(w > 0.0 && d > 0.0) {
            return Err(RadioError::BadDeployment("building dimensions must be positive".into()));
        }
        for bs in &self.base_stations {
            let (x, y) = bs.position;
            if !(0.0..=w).contains(&x) || !(0.0..=d).contains(&y) {
                return Err(RadioError::BadDeployment(format!(
                    "base station at ({x}, {y}) outside the {w} x {d} building"
                )));
            }
        }
        Ok(())
    }
}

/// Propagation and link-level constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Path loss at the reference distance, dB.
    pub pl0_db: f64,
    /// Path loss exponent.
    pub path_loss_exponent: f64,
    /// Distances are clamped to this minimum, meters.
    pub min_distance_m: f64,
    /// Log-normal shadowing standard deviation, dB.
    pub shadowing_sigma_db: f64,
    /// Bandwidth of one component carrier, Hz.
    pub carrier_bandwidth_hz: f64,
    /// Receiver noise figure, dB.
    pub noise_figure_db: f64,
    /// Spectral efficiency ceiling, bit/s/Hz.
    pub se_cap_bps_hz: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            pl0_db: 38.5,
            path_loss_exponent: 3.0,
            min_distance_m: 1.0,
            shadowing_sigma_db: 4.0,
            carrier_bandwidth_hz: 10.0e6,
            noise_figure_db: 9.0,
            se_cap_bps_hz: 7.8,
        }
    }
}

const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

impl RadioParams {
    /// Thermal noise power over one carrier, mW.
    pub fn noise_mw(&self) -> f64 {
        dbm_to_mw(
            THERMAL_NOISE_DBM_PER_HZ + 10.0 * self.carrier_bandwidth_hz.log10()
                + self.noise_figure_db,
        )
    }

    /// Single-slope indoor path loss in dB at `distance_m` meters.
    pub fn path_loss_db(&self, distance_m: f64) -> Result<f64, RadioError> {
        if distance_m < 0.0 {
            return Err(RadioError::NegativeDistance(distance_m));
        }
        let d = distance_m.max(self.min_distance_m);
        Ok(self.pl0_db + 10.0 * self.path_loss_exponent * d.log10())
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10.0_f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    if mw <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * mw.log10()
    }
}

/// Traffic intensity of an operator in one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadState {
    Low,
    High,
}

/// Two-state load chain plus per-state mean user counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadModel {
    /// Probability of staying in the current load state.
    pub p_stay: f64,
    /// Mean user count per operator when in the high state.
    pub lambda_high: BTreeMap<OperatorId, f64>,
    /// Mean user count per operator when in the low state.
    pub lambda_low: BTreeMap<OperatorId, f64>,
}

impl LoadModel {
    pub fn lambda(&self, op: OperatorId, state: LoadState) -> f64 {
        let map = match state {
            LoadState::High => &self.lambda_high,
            LoadState::Low => &self.lambda_low,
        };
        map.get(&op).copied().unwrap_or(0.0)
    }
}

/// One dropped user: operator, position, and serving cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub operator: OperatorId,
    pub position: (f64, f64),
    /// Index into `Deployment::base_stations`.
    pub serving_bs: usize,
}

/// One deployment realization: user drop, load states, and channel gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub index: u64,
    pub deployment: Deployment,
    pub users: Vec<User>,
    pub load: BTreeMap<OperatorId, LoadState>,
    /// Linear channel gain per `[user][base station]`, shadowing included.
    pub gains: Vec<Vec<f64>>,
}

impl Snapshot {
    pub fn users_of(&self, op: OperatorId) -> impl Iterator<Item = (usize, &User)> {
        self.users
            .iter()
            .enumerate()
            .filter(move |(_, u)| u.operator == op)
    }

    /// Number of users served by base station `bs`.
    pub fn cell_size(&self, bs: usize) -> usize {
        self.users.iter().filter(|u| u.serving_bs == bs).count()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Fresh RNG for one snapshot so draws are addressable by (seed, index)
/// and independent of anything consumed elsewhere.
pub fn snapshot_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index)))
}

fn sample_poisson(rng: &mut ChaCha8Rng, lambda: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let p: f64 = Poisson::new(lambda).expect("lambda validated").sample(rng);
    p.max(0.0) as usize
}

/// Draws one snapshot: load transition, Poisson user counts, uniform user
/// placement inside each operator's service area, and log-normal shadowed
/// gains to every base station.
///
/// A pure function of `(deployment, radio, load, operators, seed, index,
/// prev_load)`.
#[allow(clippy::too_many_arguments)]
pub fn draw_snapshot(
    deployment: &Deployment,
    radio: &RadioParams,
    load_model: &LoadModel,
    operators: &[OperatorId],
    seed: u64,
    index: u64,
    prev_load: &BTreeMap<OperatorId, LoadState>,
) -> Snapshot {
    let mut rng = snapshot_rng(seed, index);

    // load states evolve first, one uniform draw per operator
    let mut load = BTreeMap::new();
    for &op in operators {
        let prev = prev_load.get(&op).copied().unwrap_or(LoadState::High);
        let stay: f64 = rng.random();
        let next = if stay < load_model.p_stay {
            prev
        } else {
            match prev {
                LoadState::High => LoadState::Low,
                LoadState::Low => LoadState::High,
            }
        };
        load.insert(op, next);
    }

    // user counts and positions per operator, in operator order
    let mut users = Vec::new();
    for &op in operators {
        let lambda = load_model.lambda(op, load[&op]);
        let count = sample_poisson(&mut rng, lambda);
        let (x0, y0, x1, y1) = deployment.service_area(op, operators);
        for _ in 0..count {
            let x = rng.random_range(x0..x1);
            let y = rng.random_range(y0..y1);
            users.push(User {
                operator: op,
                position: (x, y),
                serving_bs: usize::MAX, // fixed up after gains are drawn
            });
        }
    }

    // gains to every base station, then attach each user to its
    // operator's strongest station
    let shadowing = Normal::new(0.0, radio.shadowing_sigma_db).expect("sigma validated");
    let mut gains = Vec::with_capacity(users.len());
    for user in &mut users {
        let mut row = Vec::with_capacity(deployment.base_stations.len());
        for bs in &deployment.base_stations {
            let dx = user.position.0 - bs.position.0;
            let dy = user.position.1 - bs.position.1;
            let dist = (dx * dx + dy * dy).sqrt();
            let pl = radio.path_loss_db(dist).expect("distance is nonnegative");
            let shadow = shadowing.sample(&mut rng);
            row.push(dbm_to_mw(-pl + shadow));
        }
        let serving = (0..deployment.base_stations.len())
            .filter(|&i| deployment.base_stations[i].operator == user.operator)
            .max_by(|&i, &j| row[i].partial_cmp(&row[j]).expect("gains are finite"))
            .expect("every operator has at least one base station");
        user.serving_bs = serving;
        gains.push(row);
    }

    Snapshot {
        index,
        deployment: deployment.clone(),
        users,
        load,
        gains,
    }
}

/// Aggregate opponent interference per user and carrier, in dBm.
///
/// Computed only from the snapshot's gains and the opponents' transmit
/// sets; no signaling between serving and interfering stations is
/// modeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceReport {
    pub operator: OperatorId,
    /// Global user indices of this operator's users, in snapshot order.
    pub user_indices: Vec<usize>,
    /// Parallel to `user_indices`: carrier -> opponent power, dBm
    /// (`-inf` when no opponent transmits).
    pub per_user_dbm: Vec<BTreeMap<CarrierId, f64>>,
}

impl InterferenceReport {
    pub fn entry_dbm(&self, user_index: usize, carrier: CarrierId) -> Option<f64> {
        let slot = self.user_indices.iter().position(|&u| u == user_index)?;
        self.per_user_dbm[slot].get(&carrier).copied()
    }
}

/// Errors from the radio model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RadioError {
    #[error("distance must be nonnegative, got {0}")]
    NegativeDistance(f64),
    #[error("carrier {carrier} is not in the transmit set of operator {operator}")]
    CarrierNotServed {
        operator: OperatorId,
        carrier: CarrierId,
    },
    #[error("user index {0} out of range")]
    UnknownUser(usize),
    #[error("deployment invalid: {0}")]
    BadDeployment(String),
}

/// Linear SINR of `user` on `carrier` under `state`.
///
/// Signal is the serving station's received power; interference sums the
/// received powers of opponent stations that transmit on the carrier
/// (stations with no users are silent); noise is thermal over one carrier.
pub fn sinr(
    snapshot: &Snapshot,
    user_index: usize,
    carrier: CarrierId,
    state: &AllocationState,
    radio: &RadioParams,
) -> Result<f64, RadioError> {
    let user = snapshot
        .users
        .get(user_index)
        .ok_or(RadioError::UnknownUser(user_index))?;
    let right = match state.right(carrier) {
        Some(r) if r.allows(user.operator) => r,
        _ => {
            return Err(RadioError::CarrierNotServed {
                operator: user.operator,
                carrier,
            })
        }
    };
    let serving = &snapshot.deployment.base_stations[user.serving_bs];
    let signal = serving.tx_power_mw() * snapshot.gains[user_index][user.serving_bs];

    // stations transmit on every carrier their operator holds rights to,
    // independent of their momentary traffic
    let mut interference = 0.0;
    for (bs_index, bs) in snapshot.deployment.base_stations.iter().enumerate() {
        if bs.operator == user.operator {
            continue;
        }
        if right.allows(bs.operator) {
            interference += bs.tx_power_mw() * snapshot.gains[user_index][bs_index];
        }
    }
    Ok(signal / (interference + radio.noise_mw()))
}

/// Full-buffer rate of one user in bit/s: each carrier in the serving
/// cell's transmit set contributes an equal time share of the Shannon
/// rate, capped at the spectral efficiency ceiling.
pub fn user_rate(
    snapshot: &Snapshot,
    user_index: usize,
    state: &AllocationState,
    radio: &RadioParams,
) -> Result<f64, RadioError> {
    let user = snapshot
        .users
        .get(user_index)
        .ok_or(RadioError::UnknownUser(user_index))?;
    let sharers = snapshot.cell_size(user.serving_bs) as f64;
    let mut rate = 0.0;
    for carrier in state.transmit_set(user.operator) {
        let s = sinr(snapshot, user_index, carrier, state, radio)?;
        let se = (1.0 + s).log2().min(radio.se_cap_bps_hz);
        rate += radio.carrier_bandwidth_hz / sharers * se;
    }
    Ok(rate)
}

/// What `operator`'s users measure: aggregate opponent received power per
/// carrier under `state`.
pub fn measure_interference(
    operator: OperatorId,
    state: &AllocationState,
    snapshot: &Snapshot,
) -> InterferenceReport {
    let mut user_indices = Vec::new();
    let mut per_user_dbm = Vec::new();
    for (user_index, _user) in snapshot.users_of(operator) {
        let mut entries = BTreeMap::new();
        for (&carrier, right) in state.rights() {
            let mut power_mw = 0.0;
            for (bs_index, bs) in snapshot.deployment.base_stations.iter().enumerate() {
                if bs.operator == operator {
                    continue;
                }
                if right.allows(bs.operator) {
                    power_mw += bs.tx_power_mw() * snapshot.gains[user_index][bs_index];
                }
            }
            entries.insert(carrier, mw_to_dbm(power_mw));
        }
        user_indices.push(user_index);
        per_user_dbm.push(entries);
    }
    InterferenceReport {
        operator,
        user_indices,
        per_user_dbm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alloc::{BandPlan, Favor, FavorType, SharingScenario};

    fn radio() -> RadioParams {
        RadioParams::default()
    }

    /// 2 base stations, one per operator, explicit gain rows.
    fn fixture_snapshot(users: Vec<(OperatorId, usize)>, gains: Vec<Vec<f64>>) -> Snapshot {
        let deployment = Deployment {
            building: (100.0, 50.0),
            base_stations: vec![
                BaseStation {
                    operator: OperatorId::A,
                    position: (25.0, 25.0),
                    tx_power_dbm: 24.0,
                },
                BaseStation {
                    operator: OperatorId::B,
                    position: (75.0, 25.0),
                    tx_power_dbm: 24.0,
                },
            ],
            placement: PlacementMode::Interleaved,
        };
        let users = users
            .into_iter()
            .map(|(operator, serving_bs)| User {
                operator,
                position: (0.0, 0.0),
                serving_bs,
            })
            .collect();
        let mut load = BTreeMap::new();
        load.insert(OperatorId::A, LoadState::High);
        load.insert(OperatorId::B, LoadState::High);
        Snapshot {
            index: 0,
            deployment,
            users,
            load,
            gains,
        }
    }

    fn pool_plan() -> BandPlan {
        BandPlan::contiguous(
            &[OperatorId::A, OperatorId::B],
            1,
            6,
            SharingScenario::LimitedPool,
        )
        .unwrap()
    }

    fn renting_plan() -> BandPlan {
        BandPlan::contiguous(
            &[OperatorId::A, OperatorId::B],
            1,
            0,
            SharingScenario::MutualRenting,
        )
        .unwrap()
    }

    fn default_model() -> (Deployment, RadioParams, LoadModel, Vec<OperatorId>) {
        let operators = vec![OperatorId::A, OperatorId::B];
        let deployment = Deployment::build(&DeploymentParams::default(), &operators);
        let mut lambda_high = BTreeMap::new();
        lambda_high.insert(OperatorId::A, 10.0);
        lambda_high.insert(OperatorId::B, 5.0);
        let mut lambda_low = BTreeMap::new();
        lambda_low.insert(OperatorId::A, 3.0);
        lambda_low.insert(OperatorId::B, 1.5);
        let load = LoadModel {
            p_stay: 0.8,
            lambda_high,
            lambda_low,
        };
        (deployment, radio(), load, operators)
    }

    fn high_load(operators: &[OperatorId]) -> BTreeMap<OperatorId, LoadState> {
        operators.iter().map(|&op| (op, LoadState::High)).collect()
    }

    #[test]
    fn path_loss_reference_and_slope() {
        let r = radio();
        assert!((r.path_loss_db(1.0).unwrap() - 38.5).abs() < 1e-12);
        assert!((r.path_loss_db(10.0).unwrap() - 68.5).abs() < 1e-12);
        // clamped to the reference distance
        assert!((r.path_loss_db(0.5).unwrap() - 38.5).abs() < 1e-12);
        assert!(matches!(
            r.path_loss_db(-1.0),
            Err(RadioError::NegativeDistance(_))
        ));
    }

    #[test]
    fn noise_floor_matches_budget() {
        // -174 dBm/Hz + 70 dB (10 MHz) + 9 dB NF = -95 dBm
        let n = radio().noise_mw();
        assert!((mw_to_dbm(n) + 95.0).abs() < 1e-9);
    }

    #[test]
    fn snapshot_draw_is_deterministic() {
        let (deployment, radio, load, ops) = default_model();
        let prev = high_load(&ops);
        let a = draw_snapshot(&deployment, &radio, &load, &ops, 42, 7, &prev);
        let b = draw_snapshot(&deployment, &radio, &load, &ops, 42, 7, &prev);
        assert_eq!(a, b);
        let c = draw_snapshot(&deployment, &radio, &load, &ops, 43, 7, &prev);
        assert_ne!(a, c);
    }

    #[test]
    fn sticky_chain_is_absorbing() {
        let (deployment, radio, mut load, ops) = default_model();
        load.p_stay = 1.0;
        let mut prev = high_load(&ops);
        for index in 0..20 {
            let snap = draw_snapshot(&deployment, &radio, &load, &ops, 1, index, &prev);
            assert!(snap.load.values().all(|&s| s == LoadState::High));
            prev = snap.load;
        }
    }

    #[test]
    fn higher_lambda_draws_more_users() {
        let (deployment, radio, load, ops) = default_model();
        let mut prev = high_load(&ops);
        let (mut count_a, mut count_b) = (0usize, 0usize);
        for index in 0..300 {
            let snap = draw_snapshot(&deployment, &radio, &load, &ops, 5, index, &prev);
            count_a += snap.users_of(OperatorId::A).count();
            count_b += snap.users_of(OperatorId::B).count();
            prev = snap.load;
        }
        assert!(
            count_a > count_b,
            "expected the higher-lambda operator to dominate: {count_a} vs {count_b}"
        );
    }

    #[test]
    fn users_attach_to_strongest_own_station() {
        let (deployment, radio, load, ops) = default_model();
        let prev = high_load(&ops);
        let snap = draw_snapshot(&deployment, &radio, &load, &ops, 3, 0, &prev);
        for (i, user) in snap.users.iter().enumerate() {
            let best = (0..deployment.base_stations.len())
                .filter(|&b| deployment.base_stations[b].operator == user.operator)
                .map(|b| snap.gains[i][b])
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(snap.gains[i][user.serving_bs], best);
            assert_eq!(
                deployment.base_stations[user.serving_bs].operator,
                user.operator
            );
        }
    }

    #[test]
    fn sinr_equals_one_when_signal_matches_noise() {
        let r = radio();
        let tx_mw = dbm_to_mw(24.0);
        let g = r.noise_mw() / tx_mw;
        // single A user, B idle: no interference anywhere
        let snap = fixture_snapshot(vec![(OperatorId::A, 0)], vec![vec![g, 0.0]]);
        let state = AllocationState::initial(&pool_plan());
        let s = sinr(&snap, 0, CarrierId(2), &state, &r).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "got {s}");
    }

    #[test]
    fn sinr_near_one_with_equal_interferer() {
        let r = radio();
        let g = 1e-5; // strong signal, noise negligible
        let snap = fixture_snapshot(
            vec![(OperatorId::A, 0), (OperatorId::B, 1)],
            vec![vec![g, g], vec![g, g]],
        );
        let state = AllocationState::initial(&pool_plan());
        let s = sinr(&snap, 0, CarrierId(4), &state, &r).unwrap();
        assert!((s - 1.0).abs() < 1e-3, "got {s}");
    }

    #[test]
    fn sinr_on_opponent_exclusive_carrier_is_an_error() {
        let r = radio();
        let snap = fixture_snapshot(
            vec![(OperatorId::A, 0), (OperatorId::B, 1)],
            vec![vec![1e-6, 1e-6], vec![1e-6, 1e-6]],
        );
        let state = AllocationState::initial(&pool_plan());
        let favor = Favor::new(
            1,
            FavorType::PoolExclusive,
            CarrierId(4),
            OperatorId::B,
            OperatorId::A,
            0,
            1,
        )
        .unwrap();
        let state = state
            .apply_favor(SharingScenario::LimitedPool, &favor)
            .unwrap();
        assert!(matches!(
            sinr(&snap, 0, CarrierId(4), &state, &r),
            Err(RadioError::CarrierNotServed { .. })
        ));
    }

    #[test]
    fn single_user_rate_at_sinr_three() {
        let r = radio();
        let tx_mw = dbm_to_mw(24.0);
        let g = 3.0 * r.noise_mw() / tx_mw;
        let snap = fixture_snapshot(vec![(OperatorId::A, 0)], vec![vec![g, 0.0]]);
        // mutual renting: A transmits on carrier 0 only
        let state = AllocationState::initial(&renting_plan());
        let rate = user_rate(&snap, 0, &state, &r).unwrap();
        assert!((rate - 20.0e6).abs() < 1.0, "got {rate}");
    }

    #[test]
    fn two_users_split_the_carrier() {
        let r = radio();
        let tx_mw = dbm_to_mw(24.0);
        let g = 3.0 * r.noise_mw() / tx_mw;
        let snap = fixture_snapshot(
            vec![(OperatorId::A, 0), (OperatorId::A, 0)],
            vec![vec![g, 0.0], vec![g, 0.0]],
        );
        let state = AllocationState::initial(&renting_plan());
        for user in 0..2 {
            let rate = user_rate(&snap, user, &state, &r).unwrap();
            assert!((rate - 10.0e6).abs() < 1.0, "got {rate}");
        }
    }

    #[test]
    fn rate_hits_spectral_efficiency_cap() {
        let r = radio();
        let snap = fixture_snapshot(vec![(OperatorId::A, 0)], vec![vec![1.0, 0.0]]);
        let state = AllocationState::initial(&renting_plan());
        let rate = user_rate(&snap, 0, &state, &r).unwrap();
        assert_eq!(rate, r.carrier_bandwidth_hz * r.se_cap_bps_hz);
    }

    #[test]
    fn opponent_without_rights_measures_as_silence() {
        // B holds no carrier rights at all, so nothing interferes
        let mut dedicated = BTreeMap::new();
        dedicated.insert(
            OperatorId::A,
            [CarrierId(0), CarrierId(1)].into_iter().collect(),
        );
        dedicated.insert(OperatorId::B, std::collections::BTreeSet::new());
        let plan = BandPlan::new(
            dedicated,
            std::collections::BTreeSet::new(),
            SharingScenario::MutualRenting,
        )
        .unwrap();
        let state = AllocationState::initial(&plan);
        let snap = fixture_snapshot(vec![(OperatorId::A, 0)], vec![vec![1e-6, 1e-6]]);
        let report = measure_interference(OperatorId::A, &state, &snap);
        for entries in &report.per_user_dbm {
            assert!(entries.values().all(|&dbm| dbm == f64::NEG_INFINITY));
        }
    }

    #[test]
    fn single_interferer_power_adds_up() {
        let g = 2.5e-7;
        let snap = fixture_snapshot(
            vec![(OperatorId::A, 0), (OperatorId::B, 1)],
            vec![vec![1e-6, g], vec![1e-7, 1e-6]],
        );
        let state = AllocationState::initial(&pool_plan());
        let report = measure_interference(OperatorId::A, &state, &snap);
        let got = report.entry_dbm(0, CarrierId(4)).unwrap();
        let expected = 24.0 + 10.0 * g.log10();
        assert!((got - expected).abs() < 1e-9, "got {got}, want {expected}");
    }

    #[test]
    fn report_matches_sinr_denominator() {
        let r = radio();
        let snap = fixture_snapshot(
            vec![(OperatorId::A, 0), (OperatorId::A, 1), (OperatorId::B, 1)],
            vec![
                vec![1e-6, 3e-7],
                vec![2e-7, 8e-7],
                vec![1e-7, 1e-6],
            ],
        );
        let state = AllocationState::initial(&pool_plan());
        // make one pool carrier exclusive so a zero-interference entry shows up
        let favor = Favor::new(
            1,
            FavorType::PoolExclusive,
            CarrierId(3),
            OperatorId::A,
            OperatorId::B,
            0,
            1,
        )
        .unwrap();
        let state = state
            .apply_favor(SharingScenario::LimitedPool, &favor)
            .unwrap();
        for &op in &[OperatorId::A, OperatorId::B] {
            let report = measure_interference(op, &state, &snap);
            for (slot, &user_index) in report.user_indices.iter().enumerate() {
                for (&carrier, &dbm) in &report.per_user_dbm[slot] {
                    let Ok(s) = sinr(&snap, user_index, carrier, &state, &r) else {
                        continue;
                    };
                    let user = &snap.users[user_index];
                    let bs = &snap.deployment.base_stations[user.serving_bs];
                    let signal = bs.tx_power_mw() * snap.gains[user_index][user.serving_bs];
                    let denominator_interference = signal / s - r.noise_mw();
                    let reported = dbm_to_mw(dbm);
                    let diff = (denominator_interference - reported).abs();
                    let scale = reported.abs().max(1e-30);
                    assert!(
                        diff / scale < 1e-9 || diff < 1e-24,
                        "mismatch on carrier {carrier}: {denominator_interference} vs {reported}"
                    );
                }
            }
        }
        // the asker's exclusive carrier reads zero interference
        let report = measure_interference(OperatorId::A, &state, &snap);
        assert_eq!(report.entry_dbm(0, CarrierId(3)), Some(f64::NEG_INFINITY));
    }

    #[test]
    fn renting_a_carrier_never_hurts_the_renter() {
        let r = radio();
        let snap = fixture_snapshot(
            vec![(OperatorId::A, 0), (OperatorId::B, 1)],
            vec![vec![1e-6, 4e-7], vec![2e-7, 1e-6]],
        );
        let before = AllocationState::initial(&renting_plan());
        let favor = Favor::new(
            1,
            FavorType::RentShared,
            CarrierId(1),
            OperatorId::A,
            OperatorId::B,
            0,
            1,
        )
        .unwrap();
        let after = before
            .apply_favor(SharingScenario::MutualRenting, &favor)
            .unwrap();
        let rate_before = user_rate(&snap, 0, &before, &r).unwrap();
        let rate_after = user_rate(&snap, 0, &after, &r).unwrap();
        assert!(rate_after >= rate_before);
    }

    #[test]
    fn exclusivity_never_hurts_the_asker() {
        let r = radio();
        let snap = fixture_snapshot(
            vec![(OperatorId::A, 0), (OperatorId::B, 1)],
            vec![vec![1e-6, 9e-7], vec![2e-7, 1e-6]],
        );
        let before = AllocationState::initial(&pool_plan());
        let favor = Favor::new(
            1,
            FavorType::PoolExclusive,
            CarrierId(5),
            OperatorId::A,
            OperatorId::B,
            0,
            1,
        )
        .unwrap();
        let after = before
            .apply_favor(SharingScenario::LimitedPool, &favor)
            .unwrap();
        let rate_before = user_rate(&snap, 0, &before, &r).unwrap();
        let rate_after = user_rate(&snap, 0, &after, &r).unwrap();
        assert!(rate_after > rate_before, "{rate_after} vs {rate_before}");
    }
}
