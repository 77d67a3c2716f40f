//! The favor protocol: reciprocity ledger, ask/grant decision rules with
//! the outstanding-favor cap, and the per-snapshot negotiation round.
//!
//! Operators are self-interested: one asks for a favor only when its
//! immediate utility gain beats the average loss it has historically paid
//! when granting, and grants only when its immediate loss stays below the
//! average gain it has historically received. A cap `S` on outstanding
//! favors per direction keeps the exchange reciprocal; a zero-cost grant
//! is always given (under the cap), so retaliation stays forgiving and
//! cooperation resumes as soon as the opponent's requests pass the tests
//! again.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

pub use crate::alloc::{Favor, FavorId, FavorType};

use crate::alloc::{AllocError, AllocationState, CarrierId, CarrierRight, SharingScenario};
use crate::operator::OperatorId;
use crate::radio::{RadioParams, Snapshot};
use crate::utility::{operator_utility, utility_delta, UtilityWeights};

/// Why a favor request was turned down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    /// The grantor is already `S` favors ahead in this direction.
    CapReached,
    /// The grantor's immediate loss exceeds its average past gain.
    UtilityRefused,
    /// The carrier is already under an active favor (no renegotiation
    /// during a favor's validity).
    Conflict,
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenyReason::CapReached => write!(f, "cap_reached"),
            DenyReason::UtilityRefused => write!(f, "utility_refused"),
            DenyReason::Conflict => write!(f, "conflict"),
        }
    }
}

impl std::str::FromStr for DenyReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cap_reached" => Ok(DenyReason::CapReached),
            "utility_refused" => Ok(DenyReason::UtilityRefused),
            "conflict" => Ok(DenyReason::Conflict),
            other => Err(format!("not a deny reason: {other:?}")),
        }
    }
}

/// Wire vocabulary between two operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NegotiationMessage {
    FavorRequest {
        id: FavorId,
        favor_type: FavorType,
        carrier: CarrierId,
        duration: u32,
    },
    FavorGrant {
        id: FavorId,
    },
    FavorDeny {
        id: FavorId,
        reason: DenyReason,
    },
}

impl NegotiationMessage {
    pub fn id(&self) -> FavorId {
        match *self {
            NegotiationMessage::FavorRequest { id, .. }
            | NegotiationMessage::FavorGrant { id }
            | NegotiationMessage::FavorDeny { id, .. } => id,
        }
    }
}

/// Which side of a favor the ledger owner was on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LedgerRole {
    Granted,
    Received,
}

/// Book-keeping one operator holds about one opponent: the utility it
/// lost when granting, the utility it gained when receiving, and the
/// favor counts the cap is enforced on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FavorLedger {
    losses_when_granting: Vec<f64>,
    gains_when_receiving: Vec<f64>,
    n_granted: u32,
    n_received: u32,
    cap: u32,
}

impl FavorLedger {
    pub fn new(cap: u32) -> Self {
        FavorLedger {
            losses_when_granting: Vec::new(),
            gains_when_receiving: Vec::new(),
            n_granted: 0,
            n_received: 0,
            cap,
        }
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn n_granted(&self) -> u32 {
        self.n_granted
    }

    pub fn n_received(&self) -> u32 {
        self.n_received
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses_when_granting
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains_when_receiving
    }

    /// Net favors granted minus received: the quantity the cap bounds.
    pub fn outstanding(&self) -> i64 {
        i64::from(self.n_granted) - i64::from(self.n_received)
    }

    /// Average utility lost when granting; 0 with no history, so a fresh
    /// operator asks whenever it sees any gain.
    pub fn avg_past_loss(&self) -> f64 {
        if self.losses_when_granting.is_empty() {
            0.0
        } else {
            self.losses_when_granting.iter().sum::<f64>() / self.losses_when_granting.len() as f64
        }
    }

    /// Average utility gained when receiving; `None` with no history. The
    /// caller substitutes its bootstrap threshold (an optimistic first
    /// grant, tit-for-tat style).
    pub fn avg_past_gain(&self) -> Option<f64> {
        if self.gains_when_receiving.is_empty() {
            None
        } else {
            Some(
                self.gains_when_receiving.iter().sum::<f64>()
                    / self.gains_when_receiving.len() as f64,
            )
        }
    }

    /// Appends one outcome; magnitudes only.
    pub fn record(&mut self, role: LedgerRole, magnitude: f64) -> Result<(), ProtocolError> {
        if magnitude < 0.0 || magnitude.is_nan() {
            return Err(ProtocolError::NegativeMagnitude(magnitude));
        }
        match role {
            LedgerRole::Granted => {
                self.losses_when_granting.push(magnitude);
                self.n_granted += 1;
            }
            LedgerRole::Received => {
                self.gains_when_receiving.push(magnitude);
                self.n_received += 1;
            }
        }
        Ok(())
    }
}

/// Ask rule: the immediate gain must be positive and beat the average
/// loss paid for favors granted in the past.
pub fn should_ask(ledger: &FavorLedger, immediate_gain: f64) -> bool {
    immediate_gain > 0.0 && immediate_gain > ledger.avg_past_loss()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrantDecision {
    Grant,
    Deny(DenyReason),
}

/// Grant rule: refuse outright at the cap; otherwise grant when the
/// immediate loss is below the average past gain (`bootstrap_gain` stands
/// in for the average while the history is empty). A zero-loss favor is
/// always granted under the cap.
pub fn should_grant(
    ledger: &FavorLedger,
    immediate_loss: f64,
    bootstrap_gain: f64,
) -> GrantDecision {
    if ledger.outstanding() >= i64::from(ledger.cap()) {
        return GrantDecision::Deny(DenyReason::CapReached);
    }
    let threshold = ledger.avg_past_gain().unwrap_or(bootstrap_gain);
    if immediate_loss == 0.0 || immediate_loss < threshold {
        GrantDecision::Grant
    } else {
        GrantDecision::Deny(DenyReason::UtilityRefused)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("magnitude must be nonnegative, got {0}")]
    NegativeMagnitude(f64),
    #[error("no pending request with favor id {0}")]
    UnknownFavorId(FavorId),
    #[error("no ledger for opponent {0}")]
    UnknownOpponent(OperatorId),
    #[error("negotiation is defined pairwise; got {0} operators")]
    UnsupportedOperatorCount(usize),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Radio(#[from] crate::radio::RadioError),
}

/// A request this agent sent and has not heard back on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PendingAsk {
    favor_type: FavorType,
    carrier: CarrierId,
    duration: u32,
    grantor: OperatorId,
    /// Gain estimated at ask time; recorded in the ledger if granted.
    predicted_gain: f64,
}

/// One operator's decision state: its utility weights, its ledgers about
/// each opponent, and its in-flight requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorAgent {
    pub operator: OperatorId,
    pub weights: UtilityWeights,
    /// Fraction of current utility used as the grant threshold while the
    /// gain history is empty.
    pub bootstrap_grant_fraction: f64,
    ledgers: BTreeMap<OperatorId, FavorLedger>,
    pending: BTreeMap<FavorId, PendingAsk>,
}

/// Read-only context an agent decides against.
pub struct MessageContext<'a> {
    pub snapshot: &'a Snapshot,
    pub alloc: &'a AllocationState,
    pub scenario: SharingScenario,
    pub radio: &'a RadioParams,
}

/// What processing a message produced: replies to send back and favors to
/// apply to the allocation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MessageOutcome {
    pub outgoing: Vec<NegotiationMessage>,
    pub apply: Vec<Favor>,
}

impl OperatorAgent {
    pub fn new(
        operator: OperatorId,
        opponents: &[OperatorId],
        weights: UtilityWeights,
        cap: u32,
        bootstrap_grant_fraction: f64,
    ) -> Self {
        let ledgers = opponents
            .iter()
            .filter(|&&o| o != operator)
            .map(|&o| (o, FavorLedger::new(cap)))
            .collect();
        OperatorAgent {
            operator,
            weights,
            bootstrap_grant_fraction,
            ledgers,
            pending: BTreeMap::new(),
        }
    }

    pub fn ledger(&self, opponent: OperatorId) -> Option<&FavorLedger> {
        self.ledgers.get(&opponent)
    }

    pub fn ledgers(&self) -> impl Iterator<Item = (OperatorId, &FavorLedger)> {
        self.ledgers.iter().map(|(&o, l)| (o, l))
    }

    pub fn ledger_mut(&mut self, opponent: OperatorId) -> Result<&mut FavorLedger, ProtocolError> {
        self.ledgers
            .get_mut(&opponent)
            .ok_or(ProtocolError::UnknownOpponent(opponent))
    }

    fn register_ask(&mut self, id: FavorId, ask: PendingAsk) {
        self.pending.insert(id, ask);
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    /// Processes one incoming message from `from`.
    ///
    /// Requests are answered with a grant (recording the loss and emitting
    /// the favor to apply) or a denial carrying the reason. Grants and
    /// denials settle a pending ask; an unknown id is a protocol error and
    /// leaves the state unchanged.
    pub fn handle_message(
        &mut self,
        from: OperatorId,
        msg: &NegotiationMessage,
        ctx: &MessageContext<'_>,
    ) -> Result<MessageOutcome, ProtocolError> {
        match *msg {
            NegotiationMessage::FavorRequest {
                id,
                favor_type,
                carrier,
                duration,
            } => {
                let favor = Favor::new(
                    id,
                    favor_type,
                    carrier,
                    from,
                    self.operator,
                    ctx.snapshot.index,
                    duration,
                )?;
                let hyp = match ctx.alloc.apply_favor(ctx.scenario, &favor) {
                    Ok(hyp) => hyp,
                    Err(_) => {
                        // structurally impossible right now: active favor,
                        // wrong right, or scenario mismatch
                        return Ok(MessageOutcome {
                            outgoing: vec![NegotiationMessage::FavorDeny {
                                id,
                                reason: DenyReason::Conflict,
                            }],
                            apply: Vec::new(),
                        });
                    }
                };
                let weights = self.weights;
                let delta = utility_delta(
                    self.operator,
                    ctx.alloc,
                    &hyp,
                    ctx.snapshot,
                    ctx.radio,
                    &weights,
                )?;
                let loss = (-delta).max(0.0);
                let current =
                    operator_utility(self.operator, ctx.alloc, ctx.snapshot, ctx.radio, &weights)?;
                let bootstrap = self.bootstrap_grant_fraction * current.utility;
                let ledger = self.ledger_mut(from)?;
                match should_grant(ledger, loss, bootstrap) {
                    GrantDecision::Grant => {
                        ledger.record(LedgerRole::Granted, loss)?;
                        Ok(MessageOutcome {
                            outgoing: vec![NegotiationMessage::FavorGrant { id }],
                            apply: vec![favor],
                        })
                    }
                    GrantDecision::Deny(reason) => Ok(MessageOutcome {
                        outgoing: vec![NegotiationMessage::FavorDeny { id, reason }],
                        apply: Vec::new(),
                    }),
                }
            }
            NegotiationMessage::FavorGrant { id } => {
                let ask = self
                    .pending
                    .get(&id)
                    .cloned()
                    .ok_or(ProtocolError::UnknownFavorId(id))?;
                self.ledger_mut(ask.grantor)?
                    .record(LedgerRole::Received, ask.predicted_gain)?;
                self.pending.remove(&id);
                Ok(MessageOutcome::default())
            }
            NegotiationMessage::FavorDeny { id, .. } => {
                if self.pending.remove(&id).is_none() {
                    return Err(ProtocolError::UnknownFavorId(id));
                }
                Ok(MessageOutcome::default())
            }
        }
    }
}

/// How one transcript line came to be: a message between operators or an
/// allocation transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    Request,
    Grant,
    Deny(DenyReason),
}

impl MessageKind {
    pub fn reason(&self) -> Option<DenyReason> {
        match self {
            MessageKind::Deny(reason) => Some(*reason),
            _ => None,
        }
    }
}

/// One line of the negotiation transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TranscriptEvent {
    /// A message, annotated with the sender's ledger counters about the
    /// receiver after processing.
    Message {
        snapshot: u64,
        from: OperatorId,
        to: OperatorId,
        kind: MessageKind,
        favor_id: FavorId,
        carrier: CarrierId,
        n_granted: u32,
        n_received: u32,
    },
    /// An allocation transition (favor applied or expired).
    Allocation {
        snapshot: u64,
        carrier: CarrierId,
        old_right: CarrierRight,
        new_right: CarrierRight,
        favor_id: FavorId,
    },
}

impl fmt::Display for TranscriptEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TranscriptEvent::Message {
                snapshot,
                from,
                to,
                kind,
                favor_id,
                carrier,
                n_granted,
                n_received,
            } => {
                let kind_str = match kind {
                    MessageKind::Request => "request",
                    MessageKind::Grant => "grant",
                    MessageKind::Deny(_) => "deny",
                };
                let reason = kind
                    .reason()
                    .map_or_else(|| "-".to_string(), |r| r.to_string());
                write!(
                    f,
                    "msg,{snapshot},{from},{to},{kind_str},{favor_id},{carrier},{reason},{n_granted},{n_received}"
                )
            }
            TranscriptEvent::Allocation {
                snapshot,
                carrier,
                old_right,
                new_right,
                favor_id,
            } => write!(
                f,
                "alloc,{snapshot},{carrier},{old_right},{new_right},{favor_id}"
            ),
        }
    }
}

/// Parameters of one negotiation round.
pub struct NegotiationParams {
    pub scenario: SharingScenario,
    pub favor_duration: u32,
    pub seed: u64,
}

fn negotiation_rng(seed: u64, index: u64) -> ChaCha8Rng {
    // separate stream from snapshot drawing
    let salt = 0x4E45_474F_5459_5045u64;
    crate::radio::snapshot_rng(seed ^ salt, index)
}

/// A favor an asker could request right now.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Candidate {
    carrier: CarrierId,
    favor_type: FavorType,
    grantor: OperatorId,
}

fn candidates_for(
    asker: OperatorId,
    opponent: OperatorId,
    alloc: &AllocationState,
    scenario: SharingScenario,
) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (&carrier, &right) in alloc.rights() {
        if alloc.favor_on(carrier).is_some() {
            continue;
        }
        match (scenario, right) {
            (SharingScenario::LimitedPool, CarrierRight::SharedPool) => out.push(Candidate {
                carrier,
                favor_type: FavorType::PoolExclusive,
                grantor: opponent,
            }),
            (SharingScenario::MutualRenting, CarrierRight::OwnedBy(owner)) if owner != asker => {
                for favor_type in [FavorType::RentShared, FavorType::RentExclusive] {
                    out.push(Candidate {
                        carrier,
                        favor_type,
                        grantor: owner,
                    });
                }
            }
            _ => {}
        }
    }
    out
}

/// Runs one negotiation round over the snapshot.
///
/// In seeded-random order, each operator repeatedly evaluates the favor
/// candidates still open, asks for the best one while the ask rule holds,
/// and the opponent answers synchronously. Grants are applied to the
/// allocation immediately so later candidates are evaluated against the
/// updated state; denied candidates are not re-asked within the round.
pub fn negotiate_snapshot(
    agents: &mut BTreeMap<OperatorId, OperatorAgent>,
    alloc: &mut AllocationState,
    snapshot: &Snapshot,
    radio: &RadioParams,
    params: &NegotiationParams,
    next_favor_id: &mut FavorId,
) -> Result<Vec<TranscriptEvent>, ProtocolError> {
    if agents.len() != 2 {
        return Err(ProtocolError::UnsupportedOperatorCount(agents.len()));
    }
    let mut transcript = Vec::new();
    let mut order: Vec<OperatorId> = agents.keys().copied().collect();
    order.shuffle(&mut negotiation_rng(params.seed, snapshot.index));

    for asker in order {
        let opponent = *agents.keys().find(|&&o| o != asker).expect("two agents");
        let mut refused: BTreeSet<(CarrierId, FavorType)> = BTreeSet::new();

        loop {
            let asker_agent = &agents[&asker];
            let weights = asker_agent.weights;

            // rank open candidates by predicted gain, ties broken by
            // carrier then favor type for determinism
            let mut best: Option<(f64, Candidate)> = None;
            for cand in candidates_for(asker, opponent, alloc, params.scenario) {
                if refused.contains(&(cand.carrier, cand.favor_type)) {
                    continue;
                }
                let trial = Favor::new(
                    0,
                    cand.favor_type,
                    cand.carrier,
                    asker,
                    cand.grantor,
                    snapshot.index,
                    params.favor_duration,
                )?;
                let hyp = alloc.apply_favor(params.scenario, &trial)?;
                let gain = utility_delta(asker, alloc, &hyp, snapshot, radio, &weights)?;
                let better = match &best {
                    None => true,
                    Some((g, c)) => gain > *g || (gain == *g && cand < *c),
                };
                if better {
                    best = Some((gain, cand));
                }
            }

            let Some((gain, cand)) = best else { break };
            let ledger = agents[&asker]
                .ledger(cand.grantor)
                .ok_or(ProtocolError::UnknownOpponent(cand.grantor))?;
            if !should_ask(ledger, gain) {
                break;
            }

            let id = *next_favor_id;
            *next_favor_id += 1;
            let request = NegotiationMessage::FavorRequest {
                id,
                favor_type: cand.favor_type,
                carrier: cand.carrier,
                duration: params.favor_duration,
            };
            {
                let agent = agents.get_mut(&asker).expect("asker exists");
                agent.register_ask(
                    id,
                    PendingAsk {
                        favor_type: cand.favor_type,
                        carrier: cand.carrier,
                        duration: params.favor_duration,
                        grantor: cand.grantor,
                        predicted_gain: gain,
                    },
                );
                let ledger = agent.ledger(cand.grantor).expect("ledger exists");
                transcript.push(TranscriptEvent::Message {
                    snapshot: snapshot.index,
                    from: asker,
                    to: cand.grantor,
                    kind: MessageKind::Request,
                    favor_id: id,
                    carrier: cand.carrier,
                    n_granted: ledger.n_granted(),
                    n_received: ledger.n_received(),
                });
            }

            let outcome = {
                let ctx = MessageContext {
                    snapshot,
                    alloc,
                    scenario: params.scenario,
                    radio,
                };
                agents
                    .get_mut(&cand.grantor)
                    .expect("grantor exists")
                    .handle_message(asker, &request, &ctx)?
            };

            for reply in &outcome.outgoing {
                let grantor_ledger = agents[&cand.grantor]
                    .ledger(asker)
                    .ok_or(ProtocolError::UnknownOpponent(asker))?;
                let kind = match reply {
                    NegotiationMessage::FavorGrant { .. } => MessageKind::Grant,
                    NegotiationMessage::FavorDeny { reason, .. } => MessageKind::Deny(*reason),
                    NegotiationMessage::FavorRequest { .. } => MessageKind::Request,
                };
                transcript.push(TranscriptEvent::Message {
                    snapshot: snapshot.index,
                    from: cand.grantor,
                    to: asker,
                    kind,
                    favor_id: reply.id(),
                    carrier: cand.carrier,
                    n_granted: grantor_ledger.n_granted(),
                    n_received: grantor_ledger.n_received(),
                });
            }

            for favor in &outcome.apply {
                let old_right = alloc
                    .right(favor.carrier)
                    .ok_or(AllocError::UnknownCarrier(favor.carrier))?;
                *alloc = alloc.apply_favor(params.scenario, favor)?;
                transcript.push(TranscriptEvent::Allocation {
                    snapshot: snapshot.index,
                    carrier: favor.carrier,
                    old_right,
                    new_right: alloc.right(favor.carrier).expect("carrier exists"),
                    favor_id: favor.id,
                });
            }

            let mut granted = false;
            for reply in &outcome.outgoing {
                let ctx = MessageContext {
                    snapshot,
                    alloc,
                    scenario: params.scenario,
                    radio,
                };
                agents
                    .get_mut(&asker)
                    .expect("asker exists")
                    .handle_message(cand.grantor, reply, &ctx)?;
                granted |= matches!(reply, NegotiationMessage::FavorGrant { .. });
            }
            if !granted {
                refused.insert((cand.carrier, cand.favor_type));
            }
        }
    }
    Ok(transcript)
}
