use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nncore::{mix, AdamConfig, AdamState, LossEval};
use crate::rfmodel::{LinkGeometry, RfParams, Vec3};

use super::graph::{build_graph, FeatureNorm, InterferenceGraph};
use super::model::GnnModel;
use super::objective::relaxed_loss;
use super::GnnError;

/// Instances used to fit feature normalization.
pub const NORM_FIT_INSTANCES: usize = 100;

/// Deterministic supply of training link sets.
pub trait InstanceSource {
    fn instance(&self, epoch: usize, index: usize) -> Result<Vec<LinkGeometry>, GnnError>;
}

/// The same link set for every request.
#[derive(Debug, Clone)]
pub struct FixedInstance(pub Vec<LinkGeometry>);

impl InstanceSource for FixedInstance {
    fn instance(&self, _epoch: usize, _index: usize) -> Result<Vec<LinkGeometry>, GnnError> {
        Ok(self.0.clone())
    }
}

/// Random vehicle-to-vehicle links on a straight multi-lane road. Each link
/// joins a vehicle to one ahead of it in the same or a neighbouring lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadInstanceGenerator {
    pub links: usize,
    pub lanes: usize,
    pub lane_width_m: f64,
    pub road_length_m: f64,
    pub min_link_m: f64,
    pub max_link_m: f64,
    pub seed: u64,
}

impl Default for RoadInstanceGenerator {
    fn default() -> Self {
        Self {
            links: 12,
            lanes: 3,
            lane_width_m: 3.5,
            road_length_m: 200.0,
            min_link_m: 5.0,
            max_link_m: 40.0,
            seed: 0,
        }
    }
}

impl RoadInstanceGenerator {
    pub fn with_links(links: usize, seed: u64) -> Self {
        Self {
            links,
            seed,
            ..Self::default()
        }
    }

    fn rng_for(&self, epoch: usize, index: usize) -> ChaCha8Rng {
        let s = mix(mix(mix(0, self.seed), epoch as u64), index as u64);
        ChaCha8Rng::seed_from_u64(s)
    }
}

impl InstanceSource for RoadInstanceGenerator {
    fn instance(&self, epoch: usize, index: usize) -> Result<Vec<LinkGeometry>, GnnError> {
        if self.links == 0
            || self.lanes == 0
            || !(self.min_link_m > 0.0)
            || self.max_link_m < self.min_link_m
        {
            return Err(GnnError::Config("road generator parameters"));
        }
        let mut rng = self.rng_for(epoch, index);
        let mut out = Vec::with_capacity(self.links);
        for _ in 0..self.links {
            let lane = rng.random_range(0..self.lanes) as i64;
            let x = rng.random_range(0.0..self.road_length_m);
            let step: i64 = rng.random_range(-1..=1);
            let rx_lane = (lane + step).clamp(0, self.lanes as i64 - 1);
            let dy = (rx_lane - lane) as f64 * self.lane_width_m;
            let d = rng.random_range(self.min_link_m..=self.max_link_m);
            let dx = (d * d - dy * dy).max(1.0).sqrt();
            let tx = Vec3::planar(x, lane as f64 * self.lane_width_m);
            let rx = Vec3::planar(x + dx, rx_lane as f64 * self.lane_width_m);
            out.push(LinkGeometry::new(tx, rx)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub instances_per_epoch: usize,
    pub seed: u64,
    /// Fixed normalization; fitted on the first instances of epoch 0 when
    /// absent.
    pub norm: Option<FeatureNorm>,
    pub rf: RfParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 200,
            instances_per_epoch: 16,
            seed: 0,
            norm: None,
            rf: RfParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(GnnError::Config("learning rate must be finite and >= 0"));
        }
        if self.epochs == 0 {
            return Err(GnnError::Config("epochs must be >= 1"));
        }
        if self.instances_per_epoch == 0 {
            return Err(GnnError::Config("instances per epoch must be >= 1"));
        }
        self.rf.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: GnnModel,
    /// Mean relaxed loss per epoch, before that epoch's update.
    pub trace: Vec<f64>,
}

/// Relaxed loss of one graph and its gradient in flat parameter layout.
pub fn model_loss(model: &GnnModel, graph: &InterferenceGraph) -> Result<LossEval, GnnError> {
    let (outputs, cache) = model.forward_cached(graph)?;
    let (value, d_out) = relaxed_loss(&graph.coupling, &outputs)?;
    let gradient = model.backward(graph, &cache, &d_out)?;
    Ok(LossEval {
        value,
        gradient,
        pattern: cache.pattern(),
    })
}

/// Full-batch Adam: one update per epoch on the mean gradient of that
/// epoch's instances.
pub fn train<S: InstanceSource + ?Sized>(
    mut model: GnnModel,
    source: &S,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, GnnError> {
    cfg.validate()?;
    model.check_dimensions()?;
    let norm = match cfg.norm {
        Some(n) => n,
        None => {
            let sets = (0..NORM_FIT_INSTANCES)
                .map(|k| source.instance(0, k))
                .collect::<Result<Vec<_>, _>>()?;
            FeatureNorm::fit(sets.iter().map(Vec::as_slice), &cfg.rf, &model.graph_config)?
        }
    };
    model.graph_config.norm = norm;
    let mut adam = AdamState::new(
        model.param_count(),
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut params = model.flat_params();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut grad = vec![0.0; params.len()];
        let mut total = 0.0;
        for k in 0..cfg.instances_per_epoch {
            let links = source.instance(epoch, k)?;
            let graph = build_graph(&links, &cfg.rf, &model.graph_config)?;
            let eval = match model_loss(&model, &graph) {
                Ok(e) => e,
                Err(GnnError::NonFiniteLoss) => return Err(GnnError::Diverged { epoch, trace }),
                Err(e) => return Err(e),
            };
            total += eval.value;
            for (g, e) in grad.iter_mut().zip(&eval.gradient) {
                *g += e;
            }
        }
        let scale = 1.0 / cfg.instances_per_epoch as f64;
        let mean = total * scale;
        if !mean.is_finite() {
            return Err(GnnError::Diverged { epoch, trace });
        }
        trace.push(mean);
        grad.iter_mut().for_each(|g| *g *= scale);
        if adam.step(&mut params, &grad).is_err() {
            return Err(GnnError::Diverged { epoch, trace });
        }
        model.set_flat_params(&params)?;
    }
    Ok(TrainOutcome { model, trace })
}

pub const LOSS_CSV_HEADER: &str = "epoch,mean_loss";

pub fn write_loss_csv<W: Write>(mut out: W, trace: &[f64]) -> std::io::Result<()> {
    writeln!(out, "{LOSS_CSV_HEADER}")?;
    for (e, l) in trace.iter().enumerate() {
        writeln!(out, "{e},{l}")?;
    }
    Ok(())
}
