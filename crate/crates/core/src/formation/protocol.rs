use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rfmodel::Vec3;

use super::harness::{
    secs_to_time, time_to_secs, Event, HarnessConfig, HarnessStats, NetworkHarness, SimTime,
};
use super::message::{MsgKind, Payload, ProtocolMessage};
use super::topology::{GroupId, GroupTopology, Positions, VehicleId, VehicleRole};
use super::vehicle::{Ctx, ProtocolConfig, Vehicle};
use super::FormationError;

/// A state change at one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub time: SimTime,
    pub vehicle_id: VehicleId,
    pub role_before: VehicleRole,
    pub role_after: VehicleRole,
    /// Message that caused the change; `None` for timers and local calls.
    pub msg_kind: Option<MsgKind>,
    pub topology_version: Option<u64>,
}

pub const TRACE_CSV_HEADER: &str =
    "time_s,vehicle_id,role_before,role_after,msg_kind,topology_version";

pub fn write_trace_csv<W: Write>(mut out: W, trace: &[TraceEvent]) -> std::io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for e in trace {
        writeln!(
            out,
            "{:.9},{},{},{},{},{}",
            time_to_secs(e.time),
            e.vehicle_id,
            e.role_before,
            e.role_after,
            e.msg_kind.map_or("local", MsgKind::as_str),
            e.topology_version.map_or(String::new(), |v| v.to_string()),
        )?;
    }
    Ok(())
}

/// One message handed to its receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub time: SimTime,
    pub sender: VehicleId,
    pub receiver: VehicleId,
    pub kind: MsgKind,
    pub topology_version: Option<u64>,
}

/// All vehicles, their positions and the network that connects them.
#[derive(Debug, Clone)]
pub struct ProtocolSim {
    cfg: ProtocolConfig,
    harness: NetworkHarness,
    vehicles: BTreeMap<VehicleId, Vehicle>,
    positions: Positions,
    now: SimTime,
    trace: Vec<TraceEvent>,
    deliveries: Option<Vec<Delivery>>,
    max_hop: u32,
}

impl ProtocolSim {
    pub fn new(cfg: ProtocolConfig, harness: HarnessConfig) -> Result<Self, FormationError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            harness: NetworkHarness::new(harness)?,
            vehicles: BTreeMap::new(),
            positions: Positions::new(),
            now: 0,
            trace: Vec::new(),
            deliveries: None,
            max_hop: 0,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn stats(&self) -> HarnessStats {
        self.harness.stats()
    }

    /// Deepest causal chain of protocol messages seen so far.
    pub fn max_hop(&self) -> u32 {
        self.max_hop
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    /// Starts keeping a log of every delivered message.
    pub fn record_deliveries(&mut self) {
        self.deliveries.get_or_insert_with(Vec::new);
    }

    pub fn deliveries(&self) -> &[Delivery] {
        self.deliveries.as_deref().unwrap_or(&[])
    }

    pub fn add_vehicle(&mut self, id: VehicleId, position: Vec3) -> Result<(), FormationError> {
        if self.vehicles.contains_key(&id) {
            return Err(FormationError::DuplicateVehicle(id));
        }
        self.vehicles.insert(id, Vehicle::new(id));
        self.positions.insert(id, position);
        Ok(())
    }

    pub fn set_position(&mut self, id: VehicleId, position: Vec3) -> Result<(), FormationError> {
        match self.positions.get_mut(&id) {
            Some(p) => {
                *p = position;
                Ok(())
            }
            None => Err(FormationError::UnknownVehicle(id)),
        }
    }

    pub fn positions(&self) -> &Positions {
        &self.positions
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&Vehicle> {
        self.vehicles.get(&id)
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &Vehicle> {
        self.vehicles.values()
    }

    pub fn role(&self, id: VehicleId) -> Option<VehicleRole> {
        self.vehicles.get(&id).map(Vehicle::role)
    }

    /// Leaders other than `id` within radio range of it.
    pub fn leaders_in_range(&self, id: VehicleId) -> Vec<VehicleId> {
        let Some(me) = self.positions.get(&id) else {
            return Vec::new();
        };
        self.vehicles
            .values()
            .filter(|v| v.id() != id && v.role() == VehicleRole::Leader)
            .filter(|v| self.positions[&v.id()].distance(me) <= self.cfg.radio_range_m)
            .map(Vehicle::id)
            .collect()
    }

    /// Authoritative topologies, one per leader.
    pub fn groups(&self) -> Vec<&GroupTopology> {
        self.vehicles
            .values()
            .filter(|v| v.role() == VehicleRole::Leader)
            .filter_map(Vehicle::topology)
            .collect()
    }

    fn with_vehicle<T>(
        &mut self,
        id: VehicleId,
        hop: u32,
        cause: Option<MsgKind>,
        f: impl FnOnce(&mut Vehicle, &mut Ctx) -> Result<T, FormationError>,
    ) -> Result<T, FormationError> {
        let leaders = self.leaders_in_range(id);
        let v = self
            .vehicles
            .get_mut(&id)
            .ok_or(FormationError::UnknownVehicle(id))?;
        let before = (v.role(), v.topology().map(|t| t.version));
        let mut ctx = Ctx {
            now: self.now,
            harness: &mut self.harness,
            positions: &self.positions,
            cfg: &self.cfg,
            leaders_in_range: &leaders,
            hop,
        };
        let out = f(v, &mut ctx)?;
        let after = (v.role(), v.topology().map(|t| t.version));
        if before != after {
            self.trace.push(TraceEvent {
                time: self.now,
                vehicle_id: id,
                role_before: before.0,
                role_after: after.0,
                msg_kind: cause,
                topology_version: after.1,
            });
        }
        Ok(out)
    }

    /// Sends a JoinRequest to every leader in range and arms the join timer.
    pub fn broadcast_join(&mut self, id: VehicleId) -> Result<usize, FormationError> {
        self.with_vehicle(id, 1, None, |v, ctx| v.broadcast_join(ctx))
    }

    pub fn request_leave(&mut self, id: VehicleId) -> Result<(), FormationError> {
        self.with_vehicle(id, 1, None, |v, ctx| v.request_leave(ctx))
    }

    /// Opaque data towards the sender's leader. Returns whether it was sent.
    pub fn send_data(
        &mut self,
        from: VehicleId,
        kind: MsgKind,
        bytes: u32,
    ) -> Result<bool, FormationError> {
        let v = self
            .vehicles
            .get(&from)
            .ok_or(FormationError::UnknownVehicle(from))?;
        let Some(leader) = v.topology().map(|t| t.leader_id).filter(|&l| l != from) else {
            return Ok(false);
        };
        let msg = ProtocolMessage {
            sender: from,
            receiver: leader,
            payload: Payload::Data { kind, bytes },
            hop: 1,
        };
        Ok(self.harness.send(self.now, msg))
    }

    /// Hands `msg` to its receiver immediately, bypassing the channel.
    pub fn inject(&mut self, msg: ProtocolMessage) -> Result<(), FormationError> {
        let kind = msg.kind();
        let hop = msg.hop;
        self.with_vehicle(msg.receiver, hop + 1, Some(kind), |v, ctx| {
            v.on_message(ctx, msg)
        })
    }

    /// Processes every event due up to and including `until`; returns the
    /// number of trace events produced.
    pub fn step_until(&mut self, until: SimTime) -> Result<usize, FormationError> {
        let start = self.trace.len();
        while let Some((t, ev)) = self.harness.pop_due(until) {
            self.now = self.now.max(t);
            match ev {
                Event::Deliver(msg) => {
                    let hop = msg.hop;
                    if !matches!(msg.payload, Payload::Ack(_) | Payload::Data { .. }) {
                        self.max_hop = self.max_hop.max(hop);
                    }
                    let kind = msg.kind();
                    if !self.vehicles.contains_key(&msg.receiver) {
                        continue;
                    }
                    if let Some(log) = self.deliveries.as_mut() {
                        log.push(Delivery {
                            time: self.now,
                            sender: msg.sender,
                            receiver: msg.receiver,
                            kind,
                            topology_version: msg.topology_version(),
                        });
                    }
                    self.with_vehicle(msg.receiver, hop + 1, Some(kind), |v, ctx| {
                        v.on_message(ctx, msg)
                    })?;
                }
                Event::Timer { vehicle, timer } => {
                    self.with_vehicle(vehicle, 1, None, |v, ctx| {
                        v.on_timer(ctx, timer);
                        Ok(())
                    })?;
                }
            }
        }
        self.now = self.now.max(until);
        Ok(self.trace.len() - start)
    }

    pub fn is_quiescent(&self) -> bool {
        self.harness.is_idle()
    }

    /// Runs until nothing is queued. Fails if that takes longer than
    /// `limit_s` of simulated time.
    pub fn run_to_quiescence(&mut self, limit_s: f64) -> Result<SimTime, FormationError> {
        let deadline = self.now + secs_to_time(limit_s);
        while let Some(t) = self.harness.next_time() {
            if t > deadline {
                return Err(FormationError::NoQuiescence {
                    at_s: time_to_secs(t),
                });
            }
            self.step_until(t)?;
        }
        Ok(self.now)
    }

    /// Group-level and cross-vehicle invariants. Meaningful at quiescence.
    pub fn check_invariants(&self) -> Result<(), FormationError> {
        let mut by_group: BTreeMap<GroupId, &GroupTopology> = BTreeMap::new();
        for t in self.groups() {
            if by_group.insert(t.group_id, t).is_some() {
                return Err(FormationError::Invariant(format!(
                    "group {} has two leaders",
                    t.group_id
                )));
            }
            t.check_invariants()?;
        }
        let mut listed: BTreeMap<VehicleId, GroupId> = BTreeMap::new();
        for t in by_group.values() {
            for &m in t.members.keys() {
                if let Some(g) = listed.insert(m, t.group_id) {
                    return Err(FormationError::Invariant(format!(
                        "vehicle {m} listed in groups {g} and {}",
                        t.group_id
                    )));
                }
            }
        }
        for v in self.vehicles.values() {
            match (v.topology(), listed.get(&v.id())) {
                (None, None) => {}
                (Some(view), Some(&g)) if view.group_id == g => {
                    let auth = by_group[&g];
                    if view.version != auth.version || view.role_of(v.id()) != auth.role_of(v.id())
                    {
                        return Err(FormationError::Invariant(format!(
                            "vehicle {} holds version {} of group {g}, leader has {}",
                            v.id(),
                            view.version,
                            auth.version
                        )));
                    }
                }
                (view, g) => {
                    return Err(FormationError::Invariant(format!(
                        "vehicle {} believes group {:?}, listed in {:?}",
                        v.id(),
                        view.map(|t| t.group_id),
                        g
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzConfig {
    pub vehicles: u32,
    pub events: usize,
    pub max_burst: usize,
    pub area_m: f64,
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        Self {
            vehicles: 30,
            events: 1000,
            max_burst: 5,
            area_m: 200.0,
            drop_probability: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzReport {
    pub events_applied: usize,
    pub quiescent_points: usize,
    pub final_groups: usize,
    pub messages_sent: u64,
    pub sim_time_s: f64,
}

/// Random interleaved joins and leaves in bursts; after every burst the
/// network is run to quiescence and all invariants are checked.
pub fn fuzz_topology(cfg: &FuzzConfig) -> Result<FuzzReport, FormationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sim = ProtocolSim::new(
        ProtocolConfig::default(),
        HarnessConfig {
            drop_probability: cfg.drop_probability,
            seed: cfg.seed ^ 0x5eed,
            ..HarnessConfig::default()
        },
    )?;
    for id in 0..cfg.vehicles {
        let p = Vec3::planar(
            rng.random_range(0.0..cfg.area_m),
            rng.random_range(0.0..cfg.area_m),
        );
        sim.add_vehicle(id, p)?;
    }
    let mut applied = 0;
    let mut quiescent_points = 0;
    while applied < cfg.events {
        let burst = rng
            .random_range(1..=cfg.max_burst.max(1))
            .min(cfg.events - applied);
        for _ in 0..burst {
            let joinable: Vec<VehicleId> = sim
                .vehicles()
                .filter(|v| v.role() == VehicleRole::Free && v.join_attempt().is_none())
                .map(Vehicle::id)
                .collect();
            let members: Vec<VehicleId> = sim
                .vehicles()
                .filter(|v| v.role() != VehicleRole::Free)
                .map(Vehicle::id)
                .collect();
            let join = !joinable.is_empty() && (members.is_empty() || rng.random_bool(0.6));
            if join {
                let id = *joinable.choose(&mut rng).expect("non-empty");
                sim.broadcast_join(id)?;
            } else if let Some(&id) = members.choose(&mut rng) {
                sim.request_leave(id)?;
            }
            applied += 1;
            let gap = rng.random_range(0.0..0.05);
            let t = sim.now() + secs_to_time(gap);
            sim.step_until(t)?;
        }
        sim.run_to_quiescence(60.0)?;
        sim.check_invariants()?;
        quiescent_points += 1;
    }
    Ok(FuzzReport {
        events_applied: applied,
        quiescent_points,
        final_groups: sim.groups().len(),
        messages_sent: sim.stats().sent,
        sim_time_s: time_to_secs(sim.now()),
    })
}
