use std::fmt;

use super::topology::{GroupId, GroupTopology, VehicleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MsgKind {
    JoinRequest,
    JoinAdmit,
    LeaveRequest,
    TopologyUpdate,
    SensingData,
    DecisionData,
    ControlData,
}

impl MsgKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MsgKind::JoinRequest => "join_request",
            MsgKind::JoinAdmit => "join_admit",
            MsgKind::LeaveRequest => "leave_request",
            MsgKind::TopologyUpdate => "topology_update",
            MsgKind::SensingData => "sensing_data",
            MsgKind::DecisionData => "decision_data",
            MsgKind::ControlData => "control_data",
        }
    }
}

impl fmt::Display for MsgKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What an acknowledgement confirms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckRef {
    Topology { group_id: GroupId, version: u64 },
    Leave { group_id: GroupId, epoch: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    JoinRequest {
        epoch: u32,
    },
    JoinAdmit {
        topology: Box<GroupTopology>,
    },
    LeaveRequest {
        group_id: GroupId,
        epoch: u32,
    },
    TopologyUpdate {
        topology: Box<GroupTopology>,
    },
    Ack(AckRef),
    /// The addressee no longer leads `group_id`; `leader_id` does.
    Redirect {
        group_id: GroupId,
        leader_id: VehicleId,
    },
    /// Opaque application data; only its size matters.
    Data {
        kind: MsgKind,
        bytes: u32,
    },
}

/// One unicast copy. Broadcasts are expanded into a copy per recipient.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolMessage {
    pub sender: VehicleId,
    pub receiver: VehicleId,
    pub payload: Payload,
    /// Causal depth: 1 for messages sent in reaction to an external event.
    pub hop: u32,
}

impl ProtocolMessage {
    pub fn kind(&self) -> MsgKind {
        match &self.payload {
            Payload::JoinRequest { .. } => MsgKind::JoinRequest,
            Payload::JoinAdmit { .. } => MsgKind::JoinAdmit,
            Payload::LeaveRequest { .. } => MsgKind::LeaveRequest,
            Payload::TopologyUpdate { .. } => MsgKind::TopologyUpdate,
            Payload::Ack(_) | Payload::Redirect { .. } => MsgKind::ControlData,
            Payload::Data { kind, .. } => *kind,
        }
    }

    pub fn topology_version(&self) -> Option<u64> {
        match &self.payload {
            Payload::JoinAdmit { topology } | Payload::TopologyUpdate { topology } => {
                Some(topology.version)
            }
            _ => None,
        }
    }

    /// Nominal on-air size used for load accounting.
    pub fn size_bytes(&self) -> u32 {
        match &self.payload {
            Payload::Data { bytes, .. } => *bytes,
            Payload::JoinAdmit { topology } | Payload::TopologyUpdate { topology } => {
                32 + 24 * topology.members.len() as u32
            }
            _ => 32,
        }
    }
}
