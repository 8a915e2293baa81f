use std::collections::BTreeMap;

use super::harness::{secs_to_time, NetworkHarness, OutboxKey, SimTime, TimerKind};
use super::message::{AckRef, Payload, ProtocolMessage};
use super::topology::{
    handle_join, handle_leave, GroupId, GroupTopology, Positions, VehicleId, VehicleRole,
};
use super::FormationError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub radio_range_m: f64,
    pub join_timeout_s: f64,
    /// JoinRequest retransmissions before the vehicle starts its own group.
    pub join_retries: u32,
    pub retransmit_interval_s: f64,
    pub max_retransmits: u32,
    pub shadow_tolerance_deg: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            radio_range_m: 150.0,
            join_timeout_s: 0.2,
            join_retries: 3,
            retransmit_interval_s: 0.02,
            max_retransmits: 40,
            shadow_tolerance_deg: 5.0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), FormationError> {
        if !(self.radio_range_m > 0.0) {
            return Err(FormationError::InvalidConfig(
                "radio range must be positive",
            ));
        }
        if !(self.join_timeout_s > 0.0) || !(self.retransmit_interval_s > 0.0) {
            return Err(FormationError::InvalidConfig(
                "timer intervals must be positive",
            ));
        }
        if !(self.shadow_tolerance_deg >= 0.0) || self.shadow_tolerance_deg > 180.0 {
            return Err(FormationError::InvalidConfig(
                "shadow tolerance outside [0, 180]",
            ));
        }
        Ok(())
    }
}

/// Everything a handler may touch besides its own vehicle.
pub(crate) struct Ctx<'a> {
    pub now: SimTime,
    pub harness: &'a mut NetworkHarness,
    pub positions: &'a Positions,
    pub cfg: &'a ProtocolConfig,
    pub leaders_in_range: &'a [VehicleId],
    /// Hop count stamped on messages sent from this handler.
    pub hop: u32,
}

impl Ctx<'_> {
    fn send(&mut self, sender: VehicleId, receiver: VehicleId, payload: Payload) {
        let msg = ProtocolMessage {
            sender,
            receiver,
            payload,
            hop: self.hop,
        };
        self.harness.send(self.now, msg);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JoinAttempt {
    pub epoch: u32,
    pub retries_used: u32,
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Pending {
    msg: ProtocolMessage,
    retries: u32,
    generation: u64,
}

/// One vehicle's protocol state. Its role is read from the topology of the
/// group it belongs to; without a group it is free.
#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    id: VehicleId,
    group: Option<GroupTopology>,
    join: Option<JoinAttempt>,
    last_epoch: u32,
    groups_created: u32,
    /// Newest topology version seen per group and the leader it named.
    known: BTreeMap<GroupId, (u64, VehicleId)>,
    pending_leaves: BTreeMap<GroupId, u32>,
    outbox: BTreeMap<OutboxKey, Pending>,
    generation: u64,
}

impl Vehicle {
    pub fn new(id: VehicleId) -> Self {
        Self {
            id,
            group: None,
            join: None,
            last_epoch: 0,
            groups_created: 0,
            known: BTreeMap::new(),
            pending_leaves: BTreeMap::new(),
            outbox: BTreeMap::new(),
            generation: 0,
        }
    }

    pub fn id(&self) -> VehicleId {
        self.id
    }

    pub fn role(&self) -> VehicleRole {
        self.group
            .as_ref()
            .and_then(|t| t.role_of(self.id))
            .unwrap_or(VehicleRole::Free)
    }

    /// This vehicle's view of its group; authoritative when it leads.
    pub fn topology(&self) -> Option<&GroupTopology> {
        self.group.as_ref()
    }

    pub fn join_attempt(&self) -> Option<JoinAttempt> {
        self.join
    }

    pub fn pending_reliable(&self) -> usize {
        self.outbox.len()
    }

    fn is_leader(&self) -> bool {
        self.role() == VehicleRole::Leader
    }

    fn send_reliable(
        &mut self,
        ctx: &mut Ctx,
        key: OutboxKey,
        receiver: VehicleId,
        payload: Payload,
    ) {
        self.generation += 1;
        let msg = ProtocolMessage {
            sender: self.id,
            receiver,
            payload,
            hop: ctx.hop,
        };
        ctx.harness.send(ctx.now, msg.clone());
        ctx.harness.schedule_timer(
            ctx.now + secs_to_time(ctx.cfg.retransmit_interval_s),
            self.id,
            TimerKind::Retransmit {
                key,
                generation: self.generation,
            },
        );
        self.outbox.insert(
            key,
            Pending {
                msg,
                retries: 0,
                generation: self.generation,
            },
        );
    }

    fn send_topology(&mut self, ctx: &mut Ctx, to: VehicleId, topo: &GroupTopology, admit: bool) {
        let topology = Box::new(topo.clone());
        let payload = if admit {
            Payload::JoinAdmit { topology }
        } else {
            Payload::TopologyUpdate { topology }
        };
        let key = OutboxKey::Topology {
            receiver: to,
            group_id: topo.group_id,
        };
        self.send_reliable(ctx, key, to, payload);
    }

    /// Sends a new topology to every member but the sender: the admitted
    /// vehicle first, then converted predecessors, then everyone else.
    fn publish(
        &mut self,
        ctx: &mut Ctx,
        topo: &GroupTopology,
        admitted: Option<VehicleId>,
        converted: &[VehicleId],
    ) {
        if let Some(a) = admitted {
            self.send_topology(ctx, a, topo, true);
        }
        for &c in converted {
            self.send_topology(ctx, c, topo, false);
        }
        let rest: Vec<VehicleId> = topo
            .members
            .keys()
            .copied()
            .filter(|&m| m != self.id && Some(m) != admitted && !converted.contains(&m))
            .collect();
        for m in rest {
            self.send_topology(ctx, m, topo, false);
        }
    }

    fn remember(&mut self, topo: &GroupTopology) {
        let entry = self
            .known
            .entry(topo.group_id)
            .or_insert((0, topo.leader_id));
        if topo.version >= entry.0 {
            *entry = (topo.version, topo.leader_id);
        }
    }

    fn adopt(&mut self, topo: GroupTopology) {
        self.remember(&topo);
        self.join = None;
        self.group = Some(topo);
    }

    /// Starts a join: one JoinRequest per leader in range and a response
    /// timer. Returns the number of requests sent.
    pub(crate) fn broadcast_join(&mut self, ctx: &mut Ctx) -> Result<usize, FormationError> {
        if self.role() != VehicleRole::Free {
            return Err(FormationError::NotFree(self.id));
        }
        if self.join.is_some() {
            return Err(FormationError::AlreadyJoining(self.id));
        }
        self.last_epoch += 1;
        self.join = Some(JoinAttempt {
            epoch: self.last_epoch,
            retries_used: 0,
            exhausted: false,
        });
        Ok(self.send_join_requests(ctx))
    }

    fn send_join_requests(&mut self, ctx: &mut Ctx) -> usize {
        let join = self.join.expect("join in progress");
        for &l in ctx.leaders_in_range {
            ctx.send(self.id, l, Payload::JoinRequest { epoch: join.epoch });
        }
        ctx.harness.schedule_timer(
            ctx.now + secs_to_time(ctx.cfg.join_timeout_s),
            self.id,
            TimerKind::JoinTimeout { epoch: join.epoch },
        );
        ctx.leaders_in_range.len()
    }

    /// Founds a single-member group once the join attempt has run out of
    /// retries without an admission.
    pub fn init_group(&mut self) -> Result<&GroupTopology, FormationError> {
        match self.join {
            Some(j) if j.exhausted && self.group.is_none() => {
                self.groups_created += 1;
                let gid = (u64::from(self.id) << 32) | u64::from(self.groups_created);
                self.adopt(GroupTopology::new(gid, self.id, j.epoch));
                Ok(self.group.as_ref().expect("just adopted"))
            }
            _ => Err(FormationError::JoinTimerPending(self.id)),
        }
    }

    pub(crate) fn request_leave(&mut self, ctx: &mut Ctx) -> Result<(), FormationError> {
        let topo = self
            .group
            .take()
            .ok_or(FormationError::NotMember(self.id))?;
        let gid = topo.group_id;
        if topo.leader_id == self.id {
            let out = handle_leave(&topo, self.id, ctx.positions)?;
            if let Some(t) = out.topology {
                self.remember(&t);
                self.publish(ctx, &t, None, &[]);
            }
        } else {
            let epoch = topo.members[&self.id].epoch;
            self.pending_leaves.insert(gid, epoch);
            self.send_reliable(
                ctx,
                OutboxKey::Leave { group_id: gid },
                topo.leader_id,
                Payload::LeaveRequest {
                    group_id: gid,
                    epoch,
                },
            );
        }
        Ok(())
    }

    pub(crate) fn on_timer(&mut self, ctx: &mut Ctx, timer: TimerKind) {
        match timer {
            TimerKind::JoinTimeout { epoch } => {
                let Some(mut j) = self.join.filter(|j| j.epoch == epoch && !j.exhausted) else {
                    return;
                };
                if self.group.is_some() {
                    self.join = None;
                    return;
                }
                if j.retries_used < ctx.cfg.join_retries {
                    j.retries_used += 1;
                    self.join = Some(j);
                    self.send_join_requests(ctx);
                } else {
                    j.exhausted = true;
                    self.join = Some(j);
                    self.init_group().expect("retries exhausted");
                }
            }
            TimerKind::Retransmit { key, generation } => {
                let Some(p) = self.outbox.get_mut(&key) else {
                    return;
                };
                if p.generation != generation {
                    return;
                }
                if p.retries >= ctx.cfg.max_retransmits {
                    self.outbox.remove(&key);
                    if let OutboxKey::Leave { group_id } = key {
                        self.pending_leaves.remove(&group_id);
                    }
                    return;
                }
                p.retries += 1;
                let mut msg = p.msg.clone();
                msg.hop = ctx.hop;
                ctx.harness.send(ctx.now, msg);
                ctx.harness.schedule_timer(
                    ctx.now + secs_to_time(ctx.cfg.retransmit_interval_s),
                    self.id,
                    timer,
                );
            }
        }
    }

    pub(crate) fn on_message(
        &mut self,
        ctx: &mut Ctx,
        msg: ProtocolMessage,
    ) -> Result<(), FormationError> {
        let from = msg.sender;
        match msg.payload {
            Payload::JoinRequest { epoch } => self.on_join_request(ctx, from, epoch)?,
            Payload::JoinAdmit { topology } | Payload::TopologyUpdate { topology } => {
                self.on_topology(ctx, from, *topology)?
            }
            Payload::LeaveRequest { group_id, epoch } => {
                self.on_leave_request(ctx, from, group_id, epoch)?
            }
            Payload::Ack(ack) => self.on_ack(from, ack),
            Payload::Redirect {
                group_id,
                leader_id,
            } => {
                if leader_id != self.id {
                    if let Some(p) = self.outbox.get_mut(&OutboxKey::Leave { group_id }) {
                        p.msg.receiver = leader_id;
                    }
                }
            }
            Payload::Data { .. } => {}
        }
        Ok(())
    }

    fn on_join_request(
        &mut self,
        ctx: &mut Ctx,
        from: VehicleId,
        epoch: u32,
    ) -> Result<(), FormationError> {
        if !self.is_leader() || from == self.id {
            return Ok(());
        }
        let topo = self.group.as_ref().expect("leader has a group");
        let out = handle_join(
            topo,
            from,
            epoch,
            ctx.positions,
            ctx.cfg.shadow_tolerance_deg,
        )?;
        if out.changed {
            let t = out.topology;
            self.remember(&t);
            self.publish(ctx, &t, Some(from), &out.converted);
            self.group = Some(t);
        } else {
            let t = out.topology;
            self.send_topology(ctx, from, &t, true);
        }
        Ok(())
    }

    fn on_leave_request(
        &mut self,
        ctx: &mut Ctx,
        from: VehicleId,
        group_id: GroupId,
        epoch: u32,
    ) -> Result<(), FormationError> {
        let leads = self.is_leader() && self.group.as_ref().is_some_and(|t| t.group_id == group_id);
        if !leads {
            // Point the sender at the freshest leader this vehicle knows of.
            if let Some(&(_, next)) = self.known.get(&group_id) {
                if next != self.id && next != from {
                    ctx.send(
                        self.id,
                        from,
                        Payload::Redirect {
                            group_id,
                            leader_id: next,
                        },
                    );
                }
            }
            return Ok(());
        }
        let topo = self.group.as_ref().expect("leader has a group");
        if from != self.id && topo.members.get(&from).is_some_and(|m| m.epoch == epoch) {
            let out = handle_leave(topo, from, ctx.positions)?;
            let t = out.topology.expect("leader remains");
            self.remember(&t);
            self.publish(ctx, &t, None, &[]);
            self.group = Some(t);
        }
        ctx.send(
            self.id,
            from,
            Payload::Ack(AckRef::Leave { group_id, epoch }),
        );
        Ok(())
    }

    fn on_ack(&mut self, from: VehicleId, ack: AckRef) {
        match ack {
            AckRef::Topology { group_id, version } => {
                let key = OutboxKey::Topology {
                    receiver: from,
                    group_id,
                };
                if self
                    .outbox
                    .get(&key)
                    .and_then(|p| p.msg_version())
                    .is_some_and(|v| v <= version)
                {
                    self.outbox.remove(&key);
                }
            }
            AckRef::Leave { group_id, epoch } => {
                if self.pending_leaves.get(&group_id) == Some(&epoch) {
                    self.pending_leaves.remove(&group_id);
                    self.outbox.remove(&OutboxKey::Leave { group_id });
                }
            }
        }
    }

    fn on_topology(
        &mut self,
        ctx: &mut Ctx,
        from: VehicleId,
        topo: GroupTopology,
    ) -> Result<(), FormationError> {
        let gid = topo.group_id;
        ctx.send(
            self.id,
            from,
            Payload::Ack(AckRef::Topology {
                group_id: gid,
                version: topo.version,
            }),
        );
        let seen = self.known.get(&gid).map_or(0, |k| k.0);
        if topo.version <= seen {
            return Ok(());
        }
        self.remember(&topo);

        if self.group.as_ref().is_some_and(|t| t.group_id == gid) {
            if topo.contains(self.id) {
                self.group = Some(topo);
            } else {
                self.group = None;
            }
            return Ok(());
        }
        let Some(listed) = topo.members.get(&self.id).copied() else {
            return Ok(());
        };
        if topo.leader_id == self.id {
            // Leadership of a group this vehicle is leaving or declined:
            // hand it straight on.
            self.pending_leaves.remove(&gid);
            self.outbox.remove(&OutboxKey::Leave { group_id: gid });
            let out = handle_leave(&topo, self.id, ctx.positions)?;
            if let Some(t) = out.topology {
                self.remember(&t);
                self.publish(ctx, &t, None, &[]);
            }
            return Ok(());
        }
        let joining = self.group.is_none() && self.join.is_some_and(|j| j.epoch == listed.epoch);
        if joining {
            self.adopt(topo);
            return Ok(());
        }
        if self.pending_leaves.get(&gid) != Some(&listed.epoch) {
            self.pending_leaves.insert(gid, listed.epoch);
            self.send_reliable(
                ctx,
                OutboxKey::Leave { group_id: gid },
                topo.leader_id,
                Payload::LeaveRequest {
                    group_id: gid,
                    epoch: listed.epoch,
                },
            );
        }
        Ok(())
    }
}

impl Pending {
    fn msg_version(&self) -> Option<u64> {
        self.msg.topology_version()
    }
}
