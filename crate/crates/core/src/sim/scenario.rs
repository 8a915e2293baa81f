use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{random_decision, wmmse, ChannelMatrix};
use crate::beamalign::{alignment_overhead, overhead_sweep, AlignmentScheme, OverheadRow};
use crate::formation::{secs_to_time, ProtocolSim, SimTime, TraceEvent, VehicleId, VehicleRole};
use crate::gnnbeam::{gnn_infer, GnnModel};
use crate::nncore::mix;
use crate::rfmodel::{
    link_capacity, sinr_with_beams, BeamConfig, Direction, LinkBeams, LinkCoupling, LinkGeometry,
};

use super::config::{BeamformingMethod, ScenarioConfig};
use super::mobility::{mobility_step, place_vehicles, VehicleState};
use super::SimError;

/// Simulated time allowed for the initial group formation.
pub const FORMATION_LIMIT_S: f64 = 600.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkRecord {
    pub tx: VehicleId,
    pub rx: VehicleId,
    pub active: bool,
    pub beamwidth_deg: f64,
    pub power_w: f64,
    /// Alignment did not finish within the slot; stale beams were used.
    pub misaligned: bool,
    pub capacity_bps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub slot: usize,
    pub time_s: f64,
    pub links: Vec<LinkRecord>,
    /// Slot-level overhead of every scheme, in `AlignmentScheme::ALL` order.
    pub overhead_s: [f64; 3],
    /// Time spent aligning under the configured scheme.
    pub alignment_s: f64,
    pub data_s: f64,
    pub max_topology_version: u64,
    /// `leader v version : member+role ...` per group, `;`-separated.
    pub groups: String,
    pub sum_capacity_bps: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub records: Vec<MetricsRecord>,
    pub trace: Vec<TraceEvent>,
    /// Protocol time at which the first slot started.
    pub start_time: SimTime,
}

/// One directed member-to-leader link.
#[derive(Debug, Clone, Copy)]
struct GroupLink {
    tx: VehicleId,
    rx: VehicleId,
    geometry: LinkGeometry,
}

/// Widths and powers chosen for one slot.
struct Allocation {
    widths_deg: Vec<f64>,
    powers_w: Vec<f64>,
}

/// Runs the slotted scenario: mobility, protocol events, member-to-leader
/// links, beamforming, alignment and capacity over the data part of each
/// slot. `model` is required for the GNN method.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    model: Option<&GnnModel>,
) -> Result<ScenarioOutput, SimError> {
    cfg.check()?;
    if cfg.method == BeamformingMethod::Gnn && model.is_none() {
        return Err(SimError::MissingCheckpoint);
    }
    let t_slot = cfg.timing.t_slot;
    let mut place_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 1));
    let mut churn_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 2));
    let mut vehicles = place_vehicles(
        cfg.vehicles,
        &cfg.road,
        (cfg.speed_min_mps, cfg.speed_max_mps),
        &mut place_rng,
    );

    let mut proto = ProtocolSim::new(cfg.protocol, cfg.network)?;
    for v in &vehicles {
        proto.add_vehicle(v.id, v.position)?;
    }
    // Vehicles arrive one at a time; each either joins a leader in range or
    // founds its own group.
    for v in &vehicles {
        if proto.role(v.id) == Some(VehicleRole::Free) {
            proto.broadcast_join(v.id)?;
            proto.run_to_quiescence(FORMATION_LIMIT_S)?;
        }
    }
    let start_time = proto.now();

    let mut previous_beams: BTreeMap<(VehicleId, VehicleId), LinkBeams> = BTreeMap::new();
    let mut records = Vec::with_capacity(cfg.slots);
    for slot in 0..cfg.slots {
        let slot_start = start_time + secs_to_time(slot as f64 * t_slot);

        if slot > 0 {
            mobility_step(&mut vehicles, t_slot);
        }
        for v in &vehicles {
            proto.set_position(v.id, v.position)?;
        }
        proto.step_until(slot_start)?;
        protocol_events(&mut proto, cfg, &mut churn_rng)?;

        let links = group_links(&proto, &vehicles)?;
        let geometry: Vec<LinkGeometry> = links.iter().map(|l| l.geometry).collect();
        let alloc = allocate(cfg, model, &geometry, slot)?;

        let mut overhead_s = [0.0; 3];
        for (k, scheme) in AlignmentScheme::ALL.into_iter().enumerate() {
            overhead_s[k] = alloc
                .widths_deg
                .iter()
                .zip(&alloc.powers_w)
                .filter(|(_, &p)| p > 0.0)
                .map(|(&w, _)| alignment_overhead(scheme, w, &cfg.timing))
                .fold(0.0, f64::max);
        }
        let chosen = AlignmentScheme::ALL
            .iter()
            .position(|&s| s == cfg.scheme)
            .expect("scheme listed");
        let alignment_s = overhead_s[chosen].min(t_slot);
        let data_s = t_slot - alignment_s;

        let mut beams = Vec::with_capacity(links.len());
        let mut misaligned = Vec::with_capacity(links.len());
        for (l, &w) in links.iter().zip(&alloc.widths_deg) {
            let done = alignment_overhead(cfg.scheme, w, &cfg.timing) <= t_slot;
            let b = if done {
                LinkBeams::aligned(&l.geometry, w)?
            } else {
                let stale = previous_beams.get(&(l.tx, l.rx));
                let heading = Direction::horizontal(0.0)?;
                LinkBeams {
                    tx: BeamConfig::new(stale.map_or(heading, |b| b.tx.boresight()), w)?,
                    rx: BeamConfig::new(stale.map_or(heading, |b| b.rx.boresight()), w)?,
                }
            };
            beams.push(b);
            misaligned.push(!done);
        }

        let mut link_records = Vec::with_capacity(links.len());
        let mut sum = 0.0;
        for (i, l) in links.iter().enumerate() {
            let p = alloc.powers_w[i];
            let capacity = if p > 0.0 {
                let s = sinr_with_beams(i, &alloc.powers_w, &beams, &geometry, &cfg.rf)?;
                link_capacity(s, cfg.rf.bandwidth)? * data_s / t_slot
            } else {
                0.0
            };
            sum += capacity;
            link_records.push(LinkRecord {
                tx: l.tx,
                rx: l.rx,
                active: p > 0.0,
                beamwidth_deg: alloc.widths_deg[i],
                power_w: p,
                misaligned: misaligned[i],
                capacity_bps: capacity,
            });
        }
        previous_beams = links
            .iter()
            .zip(&beams)
            .map(|(l, b)| ((l.tx, l.rx), *b))
            .collect();

        let groups = proto.groups();
        records.push(MetricsRecord {
            slot,
            time_s: slot as f64 * t_slot,
            links: link_records,
            overhead_s,
            alignment_s,
            data_s,
            max_topology_version: groups.iter().map(|g| g.version).max().unwrap_or(0),
            groups: group_snapshot(&proto),
            sum_capacity_bps: sum,
        });
    }
    Ok(ScenarioOutput {
        records,
        trace: proto.trace().to_vec(),
        start_time,
    })
}

/// Members out of radio range of their leader leave, at most one random
/// member leaves by churn, and every idle free vehicle asks to join.
fn protocol_events(
    proto: &mut ProtocolSim,
    cfg: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(), SimError> {
    let positions = proto.positions().clone();
    let far: Vec<VehicleId> = proto
        .vehicles()
        .filter_map(|v| {
            let t = v.topology()?;
            let me = positions.get(&v.id())?;
            let leader = positions.get(&t.leader_id)?;
            (t.leader_id != v.id() && me.distance(leader) > cfg.protocol.radio_range_m)
                .then_some(v.id())
        })
        .collect();
    for id in far {
        proto.request_leave(id)?;
    }
    if cfg.churn_probability > 0.0 && rng.random_bool(cfg.churn_probability) {
        let members: Vec<VehicleId> = proto
            .vehicles()
            .filter(|v| v.topology().is_some())
            .map(|v| v.id())
            .collect();
        if let Some(&id) = members.choose(rng) {
            proto.request_leave(id)?;
        }
    }
    let free: Vec<VehicleId> = proto
        .vehicles()
        .filter(|v| v.role() == VehicleRole::Free && v.join_attempt().is_none())
        .map(|v| v.id())
        .collect();
    for id in free {
        proto.broadcast_join(id)?;
    }
    Ok(())
}

/// One link from every non-leader member to its leader, in group order.
fn group_links(proto: &ProtocolSim, vehicles: &[VehicleState]) -> Result<Vec<GroupLink>, SimError> {
    let pos: BTreeMap<VehicleId, &VehicleState> = vehicles.iter().map(|v| (v.id, v)).collect();
    let mut out = Vec::new();
    for g in proto.groups() {
        let Some(leader) = pos.get(&g.leader_id) else {
            continue;
        };
        for &m in g.members.keys() {
            if m == g.leader_id {
                continue;
            }
            let Some(member) = pos.get(&m) else { continue };
            if member.position.distance(&leader.position) == 0.0 {
                continue;
            }
            out.push(GroupLink {
                tx: m,
                rx: g.leader_id,
                geometry: LinkGeometry::moving(
                    member.position,
                    leader.position,
                    member.velocity,
                    leader.velocity,
                )?,
            });
        }
    }
    Ok(out)
}

fn allocate(
    cfg: &ScenarioConfig,
    model: Option<&GnnModel>,
    links: &[LinkGeometry],
    slot: usize,
) -> Result<Allocation, SimError> {
    let n = links.len();
    if n == 0 {
        return Ok(Allocation {
            widths_deg: Vec::new(),
            powers_w: Vec::new(),
        });
    }
    let from_decision = |d: crate::rfmodel::BeamDecision| Allocation {
        widths_deg: d.beamwidth_deg.iter().map(|&a| f64::from(a)).collect(),
        powers_w: d.powers(cfg.rf.tx_power),
    };
    Ok(match cfg.method {
        BeamformingMethod::Fixed => Allocation {
            widths_deg: vec![f64::from(cfg.fixed_width_deg); n],
            powers_w: vec![cfg.rf.tx_power; n],
        },
        BeamformingMethod::Random => {
            from_decision(random_decision(n, mix(mix(cfg.seed, 3), slot as u64)))
        }
        BeamformingMethod::Gnn => {
            let model = model.ok_or(SimError::MissingCheckpoint)?;
            from_decision(gnn_infer(model, links, &cfg.rf)?.0)
        }
        BeamformingMethod::Wmmse => {
            let coupling = LinkCoupling::new(links, &cfg.rf)?;
            let widths = vec![cfg.wmmse_width_deg; n];
            let channel = ChannelMatrix::from_coupling(&coupling, &widths)?;
            let result = wmmse(&channel, &cfg.wmmse)?;
            Allocation {
                widths_deg: widths,
                powers_w: result.powers,
            }
        }
    })
}

fn group_snapshot(proto: &ProtocolSim) -> String {
    let mut groups = proto.groups();
    groups.sort_by_key(|g| g.group_id);
    groups
        .iter()
        .map(|g| {
            let members: Vec<String> = g
                .members
                .iter()
                .map(|(id, m)| {
                    let tag = match m.role {
                        VehicleRole::Leader => "L",
                        VehicleRole::Periphery => "P",
                        VehicleRole::Idle => "I",
                        VehicleRole::Free => "F",
                    };
                    format!("{id}{tag}")
                })
                .collect();
            format!("{}v{}:{}", g.leader_id, g.version, members.join(" "))
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Overhead of every scheme at every configured width.
pub fn sweep_align(cfg: &ScenarioConfig, widths_deg: &[f64]) -> Result<Vec<OverheadRow>, SimError> {
    cfg.timing.validate()?;
    if let Some(&w) = widths_deg.iter().find(|&&w| !(w > 0.0 && w <= 360.0)) {
        return Err(SimError::InvalidWidth(w));
    }
    Ok(overhead_sweep(widths_deg, &cfg.timing))
}

pub const METRICS_CSV_HEADER: &str =
    "slot,time_s,link_count,sum_capacity_bps,overhead_baseline_s,overhead_dsrc1_s,\
overhead_dsrc2_s,alignment_s,data_s,max_topology_version,groups";

pub const LINKS_CSV_HEADER: &str =
    "slot,tx,rx,active,beamwidth_deg,power_w,misaligned,capacity_bps";

pub fn write_metrics_csv<W: Write>(mut out: W, records: &[MetricsRecord]) -> std::io::Result<()> {
    writeln!(out, "{METRICS_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.slot,
            r.time_s,
            r.links.len(),
            r.sum_capacity_bps,
            r.overhead_s[0],
            r.overhead_s[1],
            r.overhead_s[2],
            r.alignment_s,
            r.data_s,
            r.max_topology_version,
            r.groups
        )?;
    }
    Ok(())
}

pub fn write_links_csv<W: Write>(mut out: W, records: &[MetricsRecord]) -> std::io::Result<()> {
    writeln!(out, "{LINKS_CSV_HEADER}")?;
    for r in records {
        for l in &r.links {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.slot,
                l.tx,
                l.rx,
                u8::from(l.active),
                l.beamwidth_deg,
                l.power_w,
                u8::from(l.misaligned),
                l.capacity_bps
            )?;
        }
    }
    Ok(())
}
