//! Favor-based inter-operator spectrum sharing.
//!
//! Two mobile operators coexist in one band: each keeps a dedicated
//! component carrier and shares a pool of further carriers. Instead of
//! static orthogonal splitting, operators ask each other for time-limited
//! spectrum usage favors (exclusive use of a pool carrier, or renting an
//! owned carrier) and keep a reciprocity ledger of the utility gained and
//! lost, capped at `S` outstanding favors per direction.
//!
//! The crate provides the allocation model ([`alloc`]), an indoor
//! deployment and radio model ([`radio`]), the network utility
//! ([`utility`]), the decision rules and negotiation round
//! ([`protocol`]), the horizon simulator with its orthogonal baseline
//! ([`sim`]), and the run configuration and result artifacts
//! ([`config`], [`output`], [`stats`]).

pub mod alloc;
pub mod config;
pub mod operator;
pub mod output;
pub mod protocol;
pub mod radio;
pub mod sim;
pub mod stats;
pub mod utility;

pub use alloc::{
    AllocationState, BandPlan, CarrierId, CarrierRight, Favor, FavorId, FavorType, SharingScenario,
};
pub use config::{parse_config, parse_config_str, FileConfig, Overrides, RunConfig};
pub use operator::OperatorId;
pub use output::{ResultRow, Scheme, SummaryRecord};
pub use protocol::{
    should_ask, should_grant, FavorLedger, GrantDecision, NegotiationMessage, OperatorAgent,
    TranscriptEvent,
};
pub use radio::{Deployment, LoadState, RadioParams, Snapshot};
pub use sim::{orthogonal_allocation, run_baseline, run_horizon, HorizonResult};
pub use utility::{network_utility, utility_delta, UtilityReport, UtilityWeights};
