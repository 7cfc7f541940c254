//! Slot-level simulation of the multichannel ALOHA network and the agents
//! that adapt channel choice and attempt probability from monitored load.

pub mod agent;
pub mod env;
pub mod observe;
pub mod scenario;
pub mod slots;

pub use agent::{
    parallel_adaptive_init, potential_attempt, sequential_adaptive_step, AdaptiveAgentState,
    AdaptiveParams, Hysteresis, Policy, PopulationEstimate,
};
pub use env::{generate_rayleigh_utilities, ChannelEnvironment};
pub use observe::{estimate_loads, LoadObservation};
pub use scenario::{
    run_scenario, CapModel, ChannelRecord, MetricsTrace, PolicyAssignment, RoundRecord, RunSeeds,
    ScenarioConfig, ScenarioParams, UserRecord,
};
pub use slots::{run_slots, ChannelOutcome, SlotLog};
