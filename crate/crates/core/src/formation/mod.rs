//! Group formation and maintenance: a leader holds the authoritative
//! topology, admits free vehicles as periphery, converts shadowed periphery
//! vehicles to idle forwarders and repairs the group when members leave.
//! Vehicles run as event-driven state machines over a lossy simulated
//! network.

use thiserror::Error;

mod harness;
mod message;
mod protocol;
mod topology;
mod vehicle;

pub use harness::{
    secs_to_time, time_to_secs, Event, HarnessConfig, HarnessStats, NetworkHarness, OutboxKey,
    SimTime, TimerKind,
};
pub use message::{AckRef, MsgKind, Payload, ProtocolMessage};
pub use protocol::{
    fuzz_topology, write_trace_csv, Delivery, FuzzConfig, FuzzReport, ProtocolSim, TraceEvent,
    TRACE_CSV_HEADER,
};
pub use topology::{
    assign_sectors, bearing_deg, handle_join, handle_leave, repartition, GroupId, GroupTopology,
    JoinOutcome, LeaveOutcome, Member, Positions, Sector, VehicleId, VehicleRole,
    COVERAGE_TOLERANCE_DEG,
};
pub use vehicle::{JoinAttempt, ProtocolConfig, Vehicle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormationError {
    #[error("vehicle {0} is not free")]
    NotFree(VehicleId),
    #[error("vehicle {0} already has a join in progress")]
    AlreadyJoining(VehicleId),
    #[error("vehicle {0} is not in a group")]
    NotMember(VehicleId),
    #[error("unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
    #[error("vehicle {0} already exists")]
    DuplicateVehicle(VehicleId),
    #[error("no position for vehicle {0}")]
    MissingPosition(VehicleId),
    #[error("vehicle {vehicle} is not a member of group {group}")]
    UnknownMember { group: GroupId, vehicle: VehicleId },
    #[error("vehicle {0} cannot found a group before its join attempt times out")]
    JoinTimerPending(VehicleId),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("no quiescence; next event at {at_s} s")]
    NoQuiescence { at_s: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}
