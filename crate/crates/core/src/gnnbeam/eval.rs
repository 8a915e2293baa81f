use std::fmt;
use std::io::Write;
use std::time::Instant;

use crate::baselines::{
    brute_force, random_decision, wmmse, ChannelMatrix, WmmseConfig, BRUTE_FORCE_MAX_LINKS,
};
use crate::rfmodel::{BeamDecision, LinkCoupling, LinkGeometry, RfParams};

use super::graph::build_graph;
use super::model::GnnModel;
use super::objective::decode_decision;
use super::GnnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Gnn,
    Wmmse,
    Random,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Gnn, Method::Wmmse, Method::Random, Method::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gnn => "gnn",
            Method::Wmmse => "wmmse",
            Method::Random => "random",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub rf: RfParams,
    pub wmmse: WmmseConfig,
    /// Common beamwidth under which WMMSE allocates power.
    pub wmmse_width_deg: f64,
    pub random_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let rf = RfParams::default();
        Self {
            rf,
            wmmse: WmmseConfig {
                max_power: rf.tx_power,
                ..WmmseConfig::default()
            },
            wmmse_width_deg: 8.0,
            random_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub instance_id: usize,
    pub method: Method,
    pub sum_capacity_bps: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

pub const EVAL_CSV_HEADER: &str = "instance_id,method,sum_capacity_bps,wall_time_s";

impl EvalReport {
    pub fn capacities(&self, method: Method) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.sum_capacity_bps)
            .collect()
    }

    pub fn mean_capacity(&self, method: Method) -> Option<f64> {
        let c = self.capacities(method);
        (!c.is_empty()).then(|| c.iter().sum::<f64>() / c.len() as f64)
    }

    pub fn median_wall_time(&self, method: Method) -> Option<f64> {
        let mut t: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.wall_time_s)
            .collect();
        median(&mut t)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{EVAL_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.instance_id, r.method, r.sum_capacity_bps, r.wall_time_s
            )?;
        }
        Ok(())
    }
}

pub fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Graph construction, forward pass and decoding for one link set.
pub fn gnn_infer(
    model: &GnnModel,
    links: &[LinkGeometry],
    rf: &RfParams,
) -> Result<(BeamDecision, f64), GnnError> {
    let graph = build_graph(links, rf, &model.graph_config)?;
    let outputs = model.forward(&graph)?;
    let (decision, steps) = decode_decision(graph.coupling(), &outputs)?;
    let cap = *steps.last().expect("at least the all-active capacity");
    Ok((decision, cap))
}

/// WMMSE power allocation at a fixed common beamwidth; returns the sum
/// capacity in bit/s.
pub fn wmmse_capacity(links: &[LinkGeometry], cfg: &EvalConfig) -> Result<f64, GnnError> {
    let coupling = LinkCoupling::new(links, &cfg.rf)?;
    let widths = vec![cfg.wmmse_width_deg; links.len()];
    let channel = ChannelMatrix::from_coupling(&coupling, &widths)?;
    let result = wmmse(&channel, &cfg.wmmse)?;
    Ok(coupling.sum_capacity_with_powers(&result.powers, &widths))
}

/// Runs every method on every instance. The oracle only runs for small
/// link sets.
pub fn evaluate(
    model: &GnnModel,
    instances: &[Vec<LinkGeometry>],
    cfg: &EvalConfig,
) -> Result<EvalReport, GnnError> {
    let mut rows = Vec::new();
    for (id, links) in instances.iter().enumerate() {
        let t = Instant::now();
        let (_, cap) = gnn_infer(model, links, &cfg.rf)?;
        rows.push(row(id, Method::Gnn, cap, t));

        let t = Instant::now();
        let cap = wmmse_capacity(links, cfg)?;
        rows.push(row(id, Method::Wmmse, cap, t));

        let t = Instant::now();
        let coupling = LinkCoupling::new(links, &cfg.rf)?;
        let d = random_decision(links.len(), cfg.random_seed.wrapping_add(id as u64));
        let cap = coupling.sum_capacity(&d);
        rows.push(row(id, Method::Random, cap, t));

        if links.len() <= BRUTE_FORCE_MAX_LINKS {
            let t = Instant::now();
            let (_, cap) = brute_force(&coupling)?;
            rows.push(row(id, Method::Oracle, cap, t));
        }
    }
    Ok(EvalReport { rows })
}

fn row(instance_id: usize, method: Method, cap: f64, start: Instant) -> EvalRow {
    EvalRow {
        instance_id,
        method,
        sum_capacity_bps: cap,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}
