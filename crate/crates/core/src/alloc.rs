//! Carriers, usage rights, and exact favor apply/revert transitions.
//!
//! A band plan partitions component carriers into per-operator dedicated
//! sets and an optional shared pool. The [`AllocationState`] tracks which
//! operator may transmit on which carrier; favors temporarily rewrite one
//! carrier's right and expire by restoring it exactly.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

use crate::operator::OperatorId;

/// Index of one component carrier in the band plan.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct CarrierId(pub u8);

impl fmt::Display for CarrierId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How carriers beyond the dedicated ones are shared for a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingScenario {
    /// A pool of carriers jointly usable by all operators unless a favor
    /// makes one temporarily exclusive.
    LimitedPool,
    /// Every carrier is exclusively owned; owners may rent carriers out,
    /// shared or exclusively.
    MutualRenting,
}

impl fmt::Display for SharingScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SharingScenario::LimitedPool => write!(f, "limited_pool"),
            SharingScenario::MutualRenting => write!(f, "mutual_renting"),
        }
    }
}

/// The kind of spectrum usage permission a favor conveys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FavorType {
    /// Exclusive use of a pool carrier (limited pool scenario).
    PoolExclusive,
    /// Shared use of a carrier the opponent owns (mutual renting).
    RentShared,
    /// Exclusive use of a carrier the opponent owns (mutual renting).
    RentExclusive,
}

impl FavorType {
    pub fn admissible_in(self, scenario: SharingScenario) -> bool {
        match self {
            FavorType::PoolExclusive => scenario == SharingScenario::LimitedPool,
            FavorType::RentShared | FavorType::RentExclusive => {
                scenario == SharingScenario::MutualRenting
            }
        }
    }
}

impl fmt::Display for FavorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FavorType::PoolExclusive => write!(f, "pool_exclusive"),
            FavorType::RentShared => write!(f, "rent_shared"),
            FavorType::RentExclusive => write!(f, "rent_exclusive"),
        }
    }
}

pub type FavorId = u64;

/// One granted spectrum usage permission, valid for a fixed number of
/// snapshots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Favor {
    pub id: FavorId,
    pub favor_type: FavorType,
    pub carrier: CarrierId,
    pub asker: OperatorId,
    pub grantor: OperatorId,
    /// Snapshot index at which the favor was granted.
    pub granted_at: u64,
    /// Validity in snapshots, fixed per run.
    pub duration: u32,
    /// Snapshots left before the allocation falls back.
    pub remaining: u32,
}

impl Favor {
    pub fn new(
        id: FavorId,
        favor_type: FavorType,
        carrier: CarrierId,
        asker: OperatorId,
        grantor: OperatorId,
        granted_at: u64,
        duration: u32,
    ) -> Result<Self, AllocError> {
        if asker == grantor {
            return Err(AllocError::SelfDirected(asker));
        }
        Ok(Favor {
            id,
            favor_type,
            carrier,
            asker,
            grantor,
            granted_at,
            duration,
            remaining: duration,
        })
    }

    /// The carrier right while this favor is active.
    pub fn active_right(&self) -> CarrierRight {
        match self.favor_type {
            FavorType::PoolExclusive => CarrierRight::ExclusiveTo(self.asker),
            FavorType::RentShared => CarrierRight::RentedShared {
                owner: self.grantor,
                renter: self.asker,
            },
            FavorType::RentExclusive => CarrierRight::RentedExclusive {
                owner: self.grantor,
                renter: self.asker,
            },
        }
    }

    /// The carrier right the allocation falls back to at expiry.
    pub fn fallback_right(&self) -> CarrierRight {
        match self.favor_type {
            FavorType::PoolExclusive => CarrierRight::SharedPool,
            FavorType::RentShared | FavorType::RentExclusive => {
                CarrierRight::OwnedBy(self.grantor)
            }
        }
    }
}

/// Usage right currently attached to one carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CarrierRight {
    /// Pool carrier usable by all operators.
    SharedPool,
    /// Pool carrier temporarily exclusive to one operator.
    ExclusiveTo(OperatorId),
    /// Dedicated carrier used only by its owner.
    OwnedBy(OperatorId),
    /// Owned carrier rented out; owner and renter both transmit.
    RentedShared { owner: OperatorId, renter: OperatorId },
    /// Owned carrier rented out exclusively; only the renter transmits.
    RentedExclusive { owner: OperatorId, renter: OperatorId },
}

impl CarrierRight {
    /// Whether `op` may transmit under this right.
    pub fn allows(&self, op: OperatorId) -> bool {
        match *self {
            CarrierRight::SharedPool => true,
            CarrierRight::ExclusiveTo(x) => x == op,
            CarrierRight::OwnedBy(x) => x == op,
            CarrierRight::RentedShared { owner, renter } => op == owner || op == renter,
            CarrierRight::RentedExclusive { renter, .. } => op == renter,
        }
    }
}

impl fmt::Display for CarrierRight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CarrierRight::SharedPool => write!(f, "shared_pool"),
            CarrierRight::ExclusiveTo(op) => write!(f, "exclusive:{op}"),
            CarrierRight::OwnedBy(op) => write!(f, "owned:{op}"),
            CarrierRight::RentedShared { owner, renter } => {
                write!(f, "rented_shared:{owner}>{renter}")
            }
            CarrierRight::RentedExclusive { owner, renter } => {
                write!(f, "rented_exclusive:{owner}>{renter}")
            }
        }
    }
}

impl std::str::FromStr for CarrierRight {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_op = |t: &str| t.parse::<OperatorId>();
        if s == "shared_pool" {
            return Ok(CarrierRight::SharedPool);
        }
        if let Some(rest) = s.strip_prefix("exclusive:") {
            return Ok(CarrierRight::ExclusiveTo(parse_op(rest)?));
        }
        if let Some(rest) = s.strip_prefix("owned:") {
            return Ok(CarrierRight::OwnedBy(parse_op(rest)?));
        }
        for (prefix, exclusive) in [("rented_shared:", false), ("rented_exclusive:", true)] {
            if let Some(rest) = s.strip_prefix(prefix) {
                let (o, r) = rest
                    .split_once('>')
                    .ok_or_else(|| format!("bad rented right: {s:?}"))?;
                let owner = parse_op(o)?;
                let renter = parse_op(r)?;
                return Ok(if exclusive {
                    CarrierRight::RentedExclusive { owner, renter }
                } else {
                    CarrierRight::RentedShared { owner, renter }
                });
            }
        }
        Err(format!("not a carrier right: {s:?}"))
    }
}

/// Errors from band plan validation and favor transitions.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AllocError {
    #[error("carrier {0} appears in more than one set of the band plan")]
    OverlappingPlan(CarrierId),
    #[error("band plan has no carriers")]
    EmptyPlan,
    #[error("carrier {0} is already under an active favor")]
    FavorConflict(CarrierId),
    #[error("favor type {0} is not admissible in the {1} scenario")]
    ScenarioMismatch(FavorType, SharingScenario),
    #[error("carrier {carrier} holds right {right}, which does not admit a {favor_type} favor granted by {grantor}")]
    RightMismatch {
        carrier: CarrierId,
        right: CarrierRight,
        favor_type: FavorType,
        grantor: OperatorId,
    },
    #[error("no active favor with id {0}")]
    FavorNotFound(FavorId),
    #[error("carrier {0} is not part of the band plan")]
    UnknownCarrier(CarrierId),
    #[error("favor asker and grantor must differ (both {0})")]
    SelfDirected(OperatorId),
    #[error("rights and active favors disagree on carrier {0}")]
    Inconsistent(CarrierId),
}

/// Partition of the band into dedicated carriers and a shared pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandPlan {
    dedicated: BTreeMap<OperatorId, BTreeSet<CarrierId>>,
    pool: BTreeSet<CarrierId>,
    scenario: SharingScenario,
}

impl BandPlan {
    /// Validates disjointness: every carrier appears in exactly one set.
    pub fn new(
        dedicated: BTreeMap<OperatorId, BTreeSet<CarrierId>>,
        pool: BTreeSet<CarrierId>,
        scenario: SharingScenario,
    ) -> Result<Self, AllocError> {
        let mut seen = BTreeSet::new();
        for carriers in dedicated.values().chain(std::iter::once(&pool)) {
            for &c in carriers {
                if !seen.insert(c) {
                    return Err(AllocError::OverlappingPlan(c));
                }
            }
        }
        if seen.is_empty() {
            return Err(AllocError::EmptyPlan);
        }
        Ok(BandPlan {
            dedicated,
            pool,
            scenario,
        })
    }

    /// Builds the contiguous default numbering: operator `k` gets carriers
    /// `[k*d, (k+1)*d)`, the pool follows.
    pub fn contiguous(
        operators: &[OperatorId],
        dedicated_per_operator: u8,
        pool_size: u8,
        scenario: SharingScenario,
    ) -> Result<Self, AllocError> {
        let mut next = 0u8;
        let mut dedicated = BTreeMap::new();
        for &op in operators {
            let set: BTreeSet<CarrierId> = (0..dedicated_per_operator)
                .map(|_| {
                    let c = CarrierId(next);
                    next += 1;
                    c
                })
                .collect();
            dedicated.insert(op, set);
        }
        let pool: BTreeSet<CarrierId> = (0..pool_size)
            .map(|_| {
                let c = CarrierId(next);
                next += 1;
                c
            })
            .collect();
        BandPlan::new(dedicated, pool, scenario)
    }

    pub fn scenario(&self) -> SharingScenario {
        self.scenario
    }

    pub fn pool(&self) -> &BTreeSet<CarrierId> {
        &self.pool
    }

    pub fn dedicated(&self, op: OperatorId) -> Option<&BTreeSet<CarrierId>> {
        self.dedicated.get(&op)
    }

    pub fn operators(&self) -> impl Iterator<Item = OperatorId> + '_ {
        self.dedicated.keys().copied()
    }

    /// All carriers in the plan, ascending.
    pub fn carriers(&self) -> BTreeSet<CarrierId> {
        self.dedicated
            .values()
            .flatten()
            .chain(self.pool.iter())
            .copied()
            .collect()
    }
}

/// Per-carrier usage rights plus the favors currently rewriting them.
///
/// A value type: transitions return new states, so hypothetical
/// allocations can be evaluated on copies without touching the
/// authoritative state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationState {
    rights: BTreeMap<CarrierId, CarrierRight>,
    active: BTreeMap<CarrierId, Favor>,
}

impl AllocationState {
    /// The allocation before any favors: pool carriers shared by everyone
    /// (limited pool) and dedicated carriers used by their owners.
    pub fn initial(plan: &BandPlan) -> AllocationState {
        let mut rights = BTreeMap::new();
        for (&op, carriers) in &plan.dedicated {
            for &c in carriers {
                rights.insert(c, CarrierRight::OwnedBy(op));
            }
        }
        for &c in &plan.pool {
            let right = match plan.scenario {
                SharingScenario::LimitedPool => CarrierRight::SharedPool,
                // A pool carrier has no owner; mutual renting plans normally
                // have an empty pool, but a mixed plan still starts shared.
                SharingScenario::MutualRenting => CarrierRight::SharedPool,
            };
            rights.insert(c, right);
        }
        AllocationState {
            rights,
            active: BTreeMap::new(),
        }
    }

    /// Builds a state directly from explicit rights (no active favors).
    pub fn from_rights(rights: BTreeMap<CarrierId, CarrierRight>) -> AllocationState {
        AllocationState {
            rights,
            active: BTreeMap::new(),
        }
    }

    pub fn right(&self, carrier: CarrierId) -> Option<CarrierRight> {
        self.rights.get(&carrier).copied()
    }

    pub fn rights(&self) -> &BTreeMap<CarrierId, CarrierRight> {
        &self.rights
    }

    pub fn favor_on(&self, carrier: CarrierId) -> Option<&Favor> {
        self.active.get(&carrier)
    }

    pub fn active_favors(&self) -> impl Iterator<Item = &Favor> {
        self.active.values()
    }

    /// Carriers where `op` currently holds transmit rights.
    pub fn transmit_set(&self, op: OperatorId) -> BTreeSet<CarrierId> {
        self.rights
            .iter()
            .filter(|(_, right)| right.allows(op))
            .map(|(&c, _)| c)
            .collect()
    }

    /// Applies a favor: rewrites the carrier's right and activates the
    /// favor with its full duration remaining.
    pub fn apply_favor(
        &self,
        scenario: SharingScenario,
        favor: &Favor,
    ) -> Result<AllocationState, AllocError> {
        let carrier = favor.carrier;
        if self.active.contains_key(&carrier) {
            return Err(AllocError::FavorConflict(carrier));
        }
        if !favor.favor_type.admissible_in(scenario) {
            return Err(AllocError::ScenarioMismatch(favor.favor_type, scenario));
        }
        let right = self
            .right(carrier)
            .ok_or(AllocError::UnknownCarrier(carrier))?;
        let ok = match favor.favor_type {
            FavorType::PoolExclusive => right == CarrierRight::SharedPool,
            FavorType::RentShared | FavorType::RentExclusive => {
                right == CarrierRight::OwnedBy(favor.grantor)
            }
        };
        if !ok {
            return Err(AllocError::RightMismatch {
                carrier,
                right,
                favor_type: favor.favor_type,
                grantor: favor.grantor,
            });
        }
        let mut next = self.clone();
        next.rights.insert(carrier, favor.active_right());
        let mut activated = favor.clone();
        activated.remaining = favor.duration;
        next.active.insert(carrier, activated);
        Ok(next)
    }

    /// Expires a favor: restores the carrier's pre-favor right exactly and
    /// removes the favor.
    pub fn expire_favor(&self, favor_id: FavorId) -> Result<AllocationState, AllocError> {
        let carrier = self
            .active
            .values()
            .find(|f| f.id == favor_id)
            .map(|f| f.carrier)
            .ok_or(AllocError::FavorNotFound(favor_id))?;
        let mut next = self.clone();
        let favor = next.active.remove(&carrier).expect("favor present");
        next.rights.insert(carrier, favor.fallback_right());
        Ok(next)
    }

    /// Decrements every active favor's remaining duration by one snapshot
    /// and returns the favors that have run out, in carrier order.
    pub fn tick_durations(&mut self) -> Vec<Favor> {
        let mut expired = Vec::new();
        for favor in self.active.values_mut() {
            favor.remaining = favor.remaining.saturating_sub(1);
            if favor.remaining == 0 {
                expired.push(favor.clone());
            }
        }
        expired
    }

    /// Checks that rights and active favors match one-to-one.
    pub fn validate(&self) -> Result<(), AllocError> {
        for (&carrier, favor) in &self.active {
            if favor.carrier != carrier || self.right(carrier) != Some(favor.active_right()) {
                return Err(AllocError::Inconsistent(carrier));
            }
        }
        for (&carrier, right) in &self.rights {
            let favored = matches!(
                right,
                CarrierRight::ExclusiveTo(_)
                    | CarrierRight::RentedShared { .. }
                    | CarrierRight::RentedExclusive { .. }
            );
            if favored != self.active.contains_key(&carrier) {
                return Err(AllocError::Inconsistent(carrier));
            }
        }
        Ok(())
    }
}
