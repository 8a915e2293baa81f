use std::collections::BTreeMap;
use std::fmt;

use crate::rfmodel::Vec3;

use super::FormationError;

pub type VehicleId = u32;
pub type GroupId = u64;
pub type Positions = BTreeMap<VehicleId, Vec3>;

/// Sector widths must sum to a full turn within this.
pub const COVERAGE_TOLERANCE_DEG: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VehicleRole {
    Free,
    Leader,
    Periphery,
    Idle,
}

impl VehicleRole {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleRole::Free => "free",
            VehicleRole::Leader => "leader",
            VehicleRole::Periphery => "periphery",
            VehicleRole::Idle => "idle",
        }
    }
}

impl fmt::Display for VehicleRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Member {
    pub role: VehicleRole,
    /// Admission order within the group.
    pub slot: u32,
    /// Join attempt under which the vehicle was admitted.
    pub epoch: u32,
}

/// Angular sector `[start, start + width)` in degrees, measured
/// counter-clockwise from the x axis around the leader.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub start_deg: f64,
    pub width_deg: f64,
}

impl Sector {
    pub fn contains(&self, bearing_deg: f64) -> bool {
        let rel = (bearing_deg - self.start_deg).rem_euclid(360.0);
        rel < self.width_deg || self.width_deg >= 360.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupTopology {
    pub group_id: GroupId,
    pub leader_id: VehicleId,
    pub version: u64,
    pub members: BTreeMap<VehicleId, Member>,
    pub sector_map: BTreeMap<VehicleId, Sector>,
    /// idle -> (periphery it relays for, leader)
    pub forward_links: BTreeMap<VehicleId, (VehicleId, VehicleId)>,
    pub next_slot: u32,
}

impl GroupTopology {
    /// Single-member group led by `leader`.
    pub fn new(group_id: GroupId, leader: VehicleId, epoch: u32) -> Self {
        let mut members = BTreeMap::new();
        members.insert(
            leader,
            Member {
                role: VehicleRole::Leader,
                slot: 0,
                epoch,
            },
        );
        Self {
            group_id,
            leader_id: leader,
            version: 1,
            members,
            sector_map: BTreeMap::new(),
            forward_links: BTreeMap::new(),
            next_slot: 1,
        }
    }

    pub fn role_of(&self, id: VehicleId) -> Option<VehicleRole> {
        self.members.get(&id).map(|m| m.role)
    }

    pub fn contains(&self, id: VehicleId) -> bool {
        self.members.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn with_role(&self, role: VehicleRole) -> impl Iterator<Item = VehicleId> + '_ {
        self.members
            .iter()
            .filter(move |(_, m)| m.role == role)
            .map(|(&id, _)| id)
    }

    pub fn idles_attached_to(&self, periphery: VehicleId) -> Vec<VehicleId> {
        self.forward_links
            .iter()
            .filter(|(_, (p, _))| *p == periphery)
            .map(|(&i, _)| i)
            .collect()
    }

    pub fn sector_sum(&self) -> f64 {
        self.sector_map.values().map(|s| s.width_deg).sum()
    }

    pub fn check_invariants(&self) -> Result<(), FormationError> {
        let bad = |msg: String| {
            Err(FormationError::Invariant(format!(
                "group {}: {msg}",
                self.group_id
            )))
        };
        let leaders: Vec<_> = self.with_role(VehicleRole::Leader).collect();
        if leaders != [self.leader_id] {
            return bad(format!("leaders {leaders:?}, recorded {}", self.leader_id));
        }
        for (&id, m) in &self.members {
            match m.role {
                VehicleRole::Free => return bad(format!("free vehicle {id} listed as member")),
                VehicleRole::Periphery if !self.sector_map.contains_key(&id) => {
                    return bad(format!("periphery {id} without sector"))
                }
                VehicleRole::Idle if !self.forward_links.contains_key(&id) => {
                    return bad(format!("orphan idle {id}"))
                }
                _ => {}
            }
        }
        for id in self.sector_map.keys() {
            if self.role_of(*id) != Some(VehicleRole::Periphery) {
                return bad(format!("sector held by non-periphery {id}"));
            }
        }
        if !self.sector_map.is_empty() && (self.sector_sum() - 360.0).abs() > COVERAGE_TOLERANCE_DEG
        {
            return bad(format!("sector widths sum to {}", self.sector_sum()));
        }
        for (idle, (p, l)) in &self.forward_links {
            if self.role_of(*idle) != Some(VehicleRole::Idle)
                || self.role_of(*p) != Some(VehicleRole::Periphery)
                || *l != self.leader_id
            {
                return bad(format!("forward link {idle} -> ({p}, {l})"));
            }
        }
        Ok(())
    }
}

/// Azimuth of `to` seen from `from`, degrees in `[0, 360)`.
pub fn bearing_deg(from: &Vec3, to: &Vec3) -> f64 {
    (to.y - from.y)
        .atan2(to.x - from.x)
        .to_degrees()
        .rem_euclid(360.0)
}

fn angular_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Bisector partition: each vehicle's sector runs from the bisector with its
/// clockwise neighbour to the bisector with its counter-clockwise one.
/// Ties in bearing are ordered by id.
pub fn assign_sectors(bearings: &[(VehicleId, f64)]) -> BTreeMap<VehicleId, Sector> {
    let mut sorted: Vec<(f64, VehicleId)> = bearings
        .iter()
        .map(|&(id, b)| (b.rem_euclid(360.0), id))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = sorted.len();
    let mut out = BTreeMap::new();
    if n == 0 {
        return out;
    }
    if n == 1 {
        let (b, id) = sorted[0];
        out.insert(
            id,
            Sector {
                start_deg: (b - 180.0).rem_euclid(360.0),
                width_deg: 360.0,
            },
        );
        return out;
    }
    // gap[k]: from vehicle k to vehicle k+1 counter-clockwise
    let mut gaps: Vec<f64> = sorted.windows(2).map(|w| w[1].0 - w[0].0).collect();
    gaps.push(360.0 - (sorted[n - 1].0 - sorted[0].0));
    for k in 0..n {
        let prev = gaps[(k + n - 1) % n];
        let next = gaps[k];
        let (b, id) = sorted[k];
        out.insert(
            id,
            Sector {
                start_deg: (b - prev / 2.0).rem_euclid(360.0),
                width_deg: (prev + next) / 2.0,
            },
        );
    }
    out
}

fn position(positions: &Positions, id: VehicleId) -> Result<&Vec3, FormationError> {
    positions
        .get(&id)
        .ok_or(FormationError::MissingPosition(id))
}

/// Recomputes every periphery sector around the current leader.
pub fn repartition(topo: &mut GroupTopology, positions: &Positions) -> Result<(), FormationError> {
    let leader = *position(positions, topo.leader_id)?;
    let bearings = topo
        .with_role(VehicleRole::Periphery)
        .map(|id| Ok((id, bearing_deg(&leader, position(positions, id)?))))
        .collect::<Result<Vec<_>, FormationError>>()?;
    topo.sector_map = assign_sectors(&bearings);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinOutcome {
    pub topology: GroupTopology,
    /// Periphery vehicles turned idle by the newcomer.
    pub converted: Vec<VehicleId>,
    pub changed: bool,
}

/// Admits `requester` as periphery. An existing periphery vehicle within
/// `shadow_tolerance_deg` of the newcomer's bearing and closer to the leader
/// becomes idle and relays for the newcomer.
pub fn handle_join(
    topo: &GroupTopology,
    requester: VehicleId,
    epoch: u32,
    positions: &Positions,
    shadow_tolerance_deg: f64,
) -> Result<JoinOutcome, FormationError> {
    let mut t = topo.clone();
    if let Some(m) = t.members.get_mut(&requester) {
        let changed = m.epoch != epoch;
        if changed {
            m.epoch = epoch;
            t.version += 1;
        }
        return Ok(JoinOutcome {
            topology: t,
            converted: Vec::new(),
            changed,
        });
    }
    let leader = *position(positions, t.leader_id)?;
    let newcomer = *position(positions, requester)?;
    let b_new = bearing_deg(&leader, &newcomer);
    let d_new = leader.distance(&newcomer);
    let mut converted = Vec::new();
    for p in t.with_role(VehicleRole::Periphery).collect::<Vec<_>>() {
        let pp = position(positions, p)?;
        if angular_distance_deg(bearing_deg(&leader, pp), b_new) <= shadow_tolerance_deg
            && d_new > leader.distance(pp)
        {
            converted.push(p);
        }
    }
    for &p in &converted {
        t.members.get_mut(&p).expect("listed periphery").role = VehicleRole::Idle;
        for idle in t.idles_attached_to(p) {
            t.forward_links.insert(idle, (requester, t.leader_id));
        }
        t.forward_links.insert(p, (requester, t.leader_id));
    }
    t.members.insert(
        requester,
        Member {
            role: VehicleRole::Periphery,
            slot: t.next_slot,
            epoch,
        },
    );
    t.next_slot += 1;
    repartition(&mut t, positions)?;
    t.version += 1;
    Ok(JoinOutcome {
        topology: t,
        converted,
        changed: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOutcome {
    /// `None` when the group dissolved.
    pub topology: Option<GroupTopology>,
    pub promoted: Option<VehicleId>,
    pub new_leader: Option<VehicleId>,
}

/// Candidate nearest to `anchor`; missing positions rank last, ties go to
/// the smallest id.
fn nearest(
    candidates: &[VehicleId],
    anchor: Option<&Vec3>,
    positions: &Positions,
) -> Option<VehicleId> {
    let dist = |id: VehicleId| match (anchor, positions.get(&id)) {
        (Some(a), Some(p)) => a.distance(p),
        _ => f64::INFINITY,
    };
    candidates
        .iter()
        .copied()
        .min_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)))
}

/// Hands a departing periphery vehicle's role to one of its idles, which
/// keeps the sector. Returns the promoted idle.
fn promote_idle(
    t: &mut GroupTopology,
    periphery: VehicleId,
    positions: &Positions,
) -> Option<VehicleId> {
    let idles = t.idles_attached_to(periphery);
    let promoted = nearest(&idles, positions.get(&periphery), positions)?;
    t.forward_links.remove(&promoted);
    t.members.get_mut(&promoted).expect("attached idle").role = VehicleRole::Periphery;
    for idle in idles.into_iter().filter(|&i| i != promoted) {
        t.forward_links.insert(idle, (promoted, t.leader_id));
    }
    if let Some(s) = t.sector_map.remove(&periphery) {
        t.sector_map.insert(promoted, s);
    }
    Some(promoted)
}

pub fn handle_leave(
    topo: &GroupTopology,
    leaver: VehicleId,
    positions: &Positions,
) -> Result<LeaveOutcome, FormationError> {
    let role = topo.role_of(leaver).ok_or(FormationError::UnknownMember {
        group: topo.group_id,
        vehicle: leaver,
    })?;
    let mut t = topo.clone();
    let mut promoted = None;
    let mut new_leader = None;
    match role {
        VehicleRole::Idle => {
            t.members.remove(&leaver);
            t.forward_links.remove(&leaver);
        }
        VehicleRole::Periphery => {
            promoted = promote_idle(&mut t, leaver, positions);
            t.members.remove(&leaver);
            if promoted.is_none() {
                t.sector_map.remove(&leaver);
                repartition(&mut t, positions)?;
            }
        }
        VehicleRole::Leader => {
            let others: Vec<_> = t
                .members
                .keys()
                .copied()
                .filter(|&id| id != leaver)
                .collect();
            let Some(next) = nearest(&others, positions.get(&leaver), positions) else {
                return Ok(LeaveOutcome {
                    topology: None,
                    promoted: None,
                    new_leader: None,
                });
            };
            t.members.remove(&leaver);
            let was = t.members[&next].role;
            if was == VehicleRole::Periphery {
                promoted = promote_idle(&mut t, next, positions);
            }
            t.sector_map.remove(&next);
            t.forward_links.remove(&next);
            t.members.get_mut(&next).expect("member").role = VehicleRole::Leader;
            t.leader_id = next;
            for link in t.forward_links.values_mut() {
                link.1 = next;
            }
            repartition(&mut t, positions)?;
            new_leader = Some(next);
        }
        VehicleRole::Free => unreachable!("members are never free"),
    }
    t.version += 1;
    Ok(LeaveOutcome {
        topology: Some(t),
        promoted,
        new_leader,
    })
}
