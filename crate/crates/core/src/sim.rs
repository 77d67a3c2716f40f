//! Multi-snapshot horizons: expiry, measurement, negotiation and rate
//! evaluation per snapshot, with the static orthogonal baseline evaluated
//! on the identical snapshot stream.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::alloc::{AllocError, AllocationState, BandPlan, CarrierRight, FavorId};
use crate::config::RunConfig;
use crate::operator::OperatorId;
use crate::output::{ResultRow, Scheme};
use crate::protocol::{
    negotiate_snapshot, NegotiationParams, OperatorAgent, ProtocolError, TranscriptEvent,
};
use crate::radio::{
    draw_snapshot, measure_interference, user_rate, InterferenceReport, RadioError,
    Snapshot,
};
use crate::utility::{network_utility, UtilityReport};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
}

/// The static baseline: pool carriers split half and half (by carrier
/// index; with an odd pool the lower-indexed operator takes the extra
/// one), dedicated carriers kept by their owners, fixed for the horizon.
pub fn orthogonal_allocation(plan: &BandPlan) -> AllocationState {
    let mut rights = BTreeMap::new();
    for op in plan.operators() {
        if let Some(carriers) = plan.dedicated(op) {
            for &c in carriers {
                rights.insert(c, CarrierRight::OwnedBy(op));
            }
        }
    }
    let pool: Vec<_> = plan.pool().iter().copied().collect();
    let operators: Vec<_> = plan.operators().collect();
    if !pool.is_empty() && !operators.is_empty() {
        let base = pool.len() / operators.len();
        let extra = pool.len() % operators.len();
        let mut next = 0;
        for (k, &op) in operators.iter().enumerate() {
            let take = base + usize::from(k < extra);
            for _ in 0..take {
                rights.insert(pool[next], CarrierRight::ExclusiveTo(op));
                next += 1;
            }
        }
    }
    AllocationState::from_rights(rights)
}

/// Mutable protocol-side state carried across snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub alloc: AllocationState,
    pub agents: BTreeMap<OperatorId, OperatorAgent>,
    pub next_favor_id: FavorId,
}

impl SimState {
    pub fn new(config: &RunConfig) -> SimState {
        let agents = config
            .operators
            .iter()
            .map(|&op| {
                (
                    op,
                    OperatorAgent::new(
                        op,
                        &config.operators,
                        config.weights[&op],
                        config.protocol.cap_s,
                        config.protocol.bootstrap_grant_fraction,
                    ),
                )
            })
            .collect();
        SimState {
            alloc: AllocationState::initial(&config.plan),
            agents,
            next_favor_id: 0,
        }
    }
}

/// What one protocol step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub events: Vec<TranscriptEvent>,
    /// Parallel to `snapshot.users`.
    pub user_rates: Vec<f64>,
    pub reports: BTreeMap<OperatorId, InterferenceReport>,
}

/// One protocol round on one snapshot, in phase order: favor countdown and
/// expiry, interference measurement, negotiation, rate evaluation.
pub fn step(
    state: &mut SimState,
    snapshot: &Snapshot,
    config: &RunConfig,
) -> Result<StepOutput, SimError> {
    let mut events = Vec::new();

    // (1) favors run out before anything else; a just-expired carrier can
    // be re-requested in this snapshot's negotiation
    for favor in state.alloc.tick_durations() {
        let old_right = state
            .alloc
            .right(favor.carrier)
            .ok_or(AllocError::UnknownCarrier(favor.carrier))?;
        state.alloc = state.alloc.expire_favor(favor.id)?;
        events.push(TranscriptEvent::Allocation {
            snapshot: snapshot.index,
            carrier: favor.carrier,
            old_right,
            new_right: state
                .alloc
                .right(favor.carrier)
                .ok_or(AllocError::UnknownCarrier(favor.carrier))?,
            favor_id: favor.id,
        });
    }

    // (2) interference measurements under the fallen-back allocation
    let reports: BTreeMap<OperatorId, InterferenceReport> = config
        .operators
        .iter()
        .map(|&op| (op, measure_interference(op, &state.alloc, snapshot)))
        .collect();

    // (3) negotiation
    let params = NegotiationParams {
        scenario: config.plan.scenario(),
        favor_duration: config.protocol.favor_duration,
        seed: config.seed,
    };
    events.extend(negotiate_snapshot(
        &mut state.agents,
        &mut state.alloc,
        snapshot,
        &config.radio,
        &params,
        &mut state.next_favor_id,
    )?);

    // (4) rates under the allocation that resulted
    let user_rates = (0..snapshot.users.len())
        .map(|i| user_rate(snapshot, i, &state.alloc, &config.radio))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(StepOutput {
        events,
        user_rates,
        reports,
    })
}

/// Ledger counters of one directed pair after one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSample {
    pub snapshot: u64,
    pub owner: OperatorId,
    pub opponent: OperatorId,
    pub n_granted: u32,
    pub n_received: u32,
}

/// Utility of one operator in one snapshot under one scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityRecord {
    pub scheme: Scheme,
    pub snapshot: u64,
    pub report: UtilityReport,
}

/// Everything one horizon produced. Both schemes are evaluated on the
/// identical snapshot sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HorizonResult {
    pub rows: Vec<ResultRow>,
    pub utilities: Vec<UtilityRecord>,
    pub transcript: Vec<TranscriptEvent>,
    pub ledger_series: Vec<LedgerSample>,
    pub final_agents: BTreeMap<OperatorId, OperatorAgent>,
}

impl HorizonResult {
    /// Mean utility of `op` under `scheme` over post-warmup snapshots
    /// (idle snapshots count as zero utility).
    pub fn mean_utility(&self, scheme: Scheme, op: OperatorId, config: &RunConfig) -> f64 {
        let denom = config.snapshots.saturating_sub(config.warmup);
        if denom == 0 {
            return 0.0;
        }
        self.utilities
            .iter()
            .filter(|u| {
                u.scheme == scheme && u.report.operator == op && u.snapshot >= config.warmup
            })
            .map(|u| u.report.utility)
            .sum::<f64>()
            / denom as f64
    }

    /// Favors `op` received over the horizon (grants addressed to it).
    pub fn favors_received(&self, op: OperatorId) -> u64 {
        self.final_agents
            .get(&op)
            .map(|agent| {
                agent
                    .ledgers()
                    .map(|(_, l)| u64::from(l.n_received()))
                    .sum()
            })
            .unwrap_or(0)
    }

    /// Favors `op` granted over the horizon.
    pub fn favors_granted(&self, op: OperatorId) -> u64 {
        self.final_agents
            .get(&op)
            .map(|agent| {
                agent
                    .ledgers()
                    .map(|(_, l)| u64::from(l.n_granted()))
                    .sum()
            })
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SchemeSelection {
    Both,
    BaselineOnly,
}

/// Runs the coordination protocol over the horizon and evaluates the
/// orthogonal baseline on the same snapshots.
pub fn run_horizon(config: &RunConfig) -> Result<HorizonResult, SimError> {
    run(config, SchemeSelection::Both)
}

/// Evaluates only the orthogonal baseline (no negotiation, empty
/// transcript).
pub fn run_baseline(config: &RunConfig) -> Result<HorizonResult, SimError> {
    run(config, SchemeSelection::BaselineOnly)
}

fn run(config: &RunConfig, selection: SchemeSelection) -> Result<HorizonResult, SimError> {
    let baseline_alloc = orthogonal_allocation(&config.plan);
    let mut sim = SimState::new(config);
    let mut prev_load = config.initial_load();
    let mut protocol_rows = Vec::new();
    let mut baseline_rows = Vec::new();
    let mut result = HorizonResult::default();

    for index in 0..config.snapshots {
        let snapshot = draw_snapshot(
            &config.deployment,
            &config.radio,
            &config.load,
            &config.operators,
            config.seed,
            index,
            &prev_load,
        );
        prev_load = snapshot.load.clone();

        if selection == SchemeSelection::Both {
            let out = step(&mut sim, &snapshot, config)?;
            collect_rows(
                Scheme::Protocol,
                &snapshot,
                &out.user_rates,
                config,
                &mut protocol_rows,
                &mut result.utilities,
            );
            result.transcript.extend(out.events);
            for (&op, agent) in &sim.agents {
                for (opponent, ledger) in agent.ledgers() {
                    result.ledger_series.push(LedgerSample {
                        snapshot: index,
                        owner: op,
                        opponent,
                        n_granted: ledger.n_granted(),
                        n_received: ledger.n_received(),
                    });
                }
            }
        }

        let baseline_rates = (0..snapshot.users.len())
            .map(|i| user_rate(&snapshot, i, &baseline_alloc, &config.radio))
            .collect::<Result<Vec<_>, _>>()?;
        collect_rows(
            Scheme::Orthogonal,
            &snapshot,
            &baseline_rates,
            config,
            &mut baseline_rows,
            &mut result.utilities,
        );
    }

    result.rows = protocol_rows;
    result.rows.extend(baseline_rows);
    result.final_agents = sim.agents;
    Ok(result)
}

fn collect_rows(
    scheme: Scheme,
    snapshot: &Snapshot,
    rates: &[f64],
    config: &RunConfig,
    rows: &mut Vec<ResultRow>,
    utilities: &mut Vec<UtilityRecord>,
) {
    for &op in &config.operators {
        let mut op_rates = Vec::new();
        for (ordinal, (user_index, _)) in snapshot.users_of(op).enumerate() {
            rows.push(ResultRow {
                scheme,
                operator: op,
                snapshot: snapshot.index,
                user: ordinal as u32,
                rate_bps: rates[user_index],
            });
            op_rates.push(rates[user_index]);
        }
        utilities.push(UtilityRecord {
            scheme,
            snapshot: snapshot.index,
            report: network_utility(op, &op_rates, &config.weights[&op]),
        });
    }
}
