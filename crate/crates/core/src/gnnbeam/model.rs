use std::io::{Read, Write};

use rand::Rng;

use crate::nncore::{mix, read_f64, read_u32, DenseNet, ForwardCache, NnError};

use super::graph::{FeatureNorm, GraphConfig, InterferenceGraph, EDGE_FEATURES, VERTEX_FEATURES};
use super::GnnError;

/// Message-passing rounds.
pub const LAYERS: usize = 3;
/// Vertex embedding width after every round.
pub const EMBED: usize = 32;
/// Readout hidden width.
pub const READOUT_HIDDEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct GnnLayer {
    /// phi: (x_i, x_j, e_ji) -> message
    pub message: DenseNet,
    /// gamma: (x_i, aggregate) -> new x_i
    pub update: DenseNet,
}

/// Three rounds of max-aggregated message passing followed by a per-vertex
/// scalar readout over (final embedding, raw features, direct-gain scalar).
#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub layers: Vec<GnnLayer>,
    pub readout: DenseNet,
    pub graph_config: GraphConfig,
}

pub(crate) struct LayerCache {
    messages: Vec<(Vec<f64>, ForwardCache)>,
    /// Winning edge per (vertex, dimension); `None` for empty neighbourhoods.
    argmax: Vec<Vec<Option<usize>>>,
    updates: Vec<ForwardCache>,
}

pub(crate) struct GnnCache {
    layers: Vec<LayerCache>,
    readouts: Vec<ForwardCache>,
}

impl GnnCache {
    /// Fingerprint of every ReLU sign and max selection in the pass.
    pub(crate) fn pattern(&self) -> u64 {
        let mut h = 0u64;
        for layer in &self.layers {
            for (_, c) in &layer.messages {
                h = c.fold_pattern(h);
            }
            for row in &layer.argmax {
                for a in row {
                    h = mix(h, a.map_or(u64::MAX, |k| k as u64));
                }
            }
            for c in &layer.updates {
                h = c.fold_pattern(h);
            }
        }
        for c in &self.readouts {
            h = c.fold_pattern(h);
        }
        h
    }
}

impl GnnModel {
    pub fn new<R: Rng + ?Sized>(graph_config: GraphConfig, rng: &mut R) -> Result<Self, GnnError> {
        let mut layers = Vec::with_capacity(LAYERS);
        let mut dim = VERTEX_FEATURES;
        for _ in 0..LAYERS {
            let message = DenseNet::new(&[2 * dim + EDGE_FEATURES, EMBED, EMBED], rng)?;
            let update = DenseNet::new(&[dim + EMBED, EMBED, EMBED], rng)?;
            layers.push(GnnLayer { message, update });
            dim = EMBED;
        }
        let readout = DenseNet::new(&[EMBED + VERTEX_FEATURES + 1, READOUT_HIDDEN, 1], rng)?;
        Ok(Self {
            layers,
            readout,
            graph_config,
        })
    }

    pub fn nets(&self) -> impl Iterator<Item = &DenseNet> {
        self.layers
            .iter()
            .flat_map(|l| [&l.message, &l.update])
            .chain(std::iter::once(&self.readout))
    }

    fn nets_mut(&mut self) -> Vec<&mut DenseNet> {
        let mut v: Vec<&mut DenseNet> = Vec::new();
        for l in &mut self.layers {
            v.push(&mut l.message);
            v.push(&mut l.update);
        }
        v.push(&mut self.readout);
        v
    }

    pub fn param_count(&self) -> usize {
        self.nets().map(DenseNet::param_count).sum()
    }

    /// All parameters, nets in order phi_1, gamma_1, ..., readout.
    pub fn flat_params(&self) -> Vec<f64> {
        self.nets()
            .flat_map(|n| n.params().iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), GnnError> {
        if params.len() != self.param_count() {
            return Err(GnnError::Shape("flat parameter length"));
        }
        let mut off = 0;
        for net in self.nets_mut() {
            let n = net.param_count();
            net.set_params(&params[off..off + n])?;
            off += n;
        }
        Ok(())
    }

    /// Inference pass; same arithmetic as the training pass without the
    /// caches.
    pub fn forward(&self, graph: &InterferenceGraph) -> Result<Vec<f64>, GnnError> {
        let n = graph.vertex_count();
        let mut h: Vec<Vec<f64>> = graph.features.iter().map(|f| f.to_vec()).collect();
        let mut input = Vec::new();
        for layer in &self.layers {
            let mut messages = Vec::with_capacity(graph.edges.len());
            for e in &graph.edges {
                input.clear();
                input.extend_from_slice(&h[e.dst]);
                input.extend_from_slice(&h[e.src]);
                input.push(e.feature);
                messages.push(layer.message.forward(&input)?);
            }
            let width = layer.message.output_width();
            let mut next = Vec::with_capacity(n);
            for i in 0..n {
                input.clear();
                input.extend_from_slice(&h[i]);
                for d in 0..width {
                    let mut best: Option<f64> = None;
                    for &k in &graph.incoming[i] {
                        let v = messages[k][d];
                        if best.is_none_or(|b| v > b) {
                            best = Some(v);
                        }
                    }
                    input.push(best.unwrap_or(0.0));
                }
                next.push(layer.update.forward(&input)?);
            }
            h = next;
        }
        (0..n)
            .map(|i| {
                input.clear();
                input.extend_from_slice(&h[i]);
                input.extend_from_slice(&graph.features[i]);
                input.push(graph.direct_scalar[i]);
                Ok(self.readout.forward(&input)?[0])
            })
            .collect()
    }

    pub(crate) fn forward_cached(
        &self,
        graph: &InterferenceGraph,
    ) -> Result<(Vec<f64>, GnnCache), GnnError> {
        let n = graph.vertex_count();
        let mut h: Vec<Vec<f64>> = graph.features.iter().map(|f| f.to_vec()).collect();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut messages = Vec::with_capacity(graph.edges.len());
            for e in &graph.edges {
                let mut input = Vec::with_capacity(layer.message.input_width());
                input.extend_from_slice(&h[e.dst]);
                input.extend_from_slice(&h[e.src]);
                input.push(e.feature);
                messages.push(layer.message.forward_cached(&input)?);
            }
            let width = layer.message.output_width();
            let mut argmax = vec![vec![None; width]; n];
            let mut next = Vec::with_capacity(n);
            let mut updates = Vec::with_capacity(n);
            for i in 0..n {
                let mut agg = vec![0.0; width];
                for d in 0..width {
                    let mut best: Option<usize> = None;
                    for &k in &graph.incoming[i] {
                        let v = messages[k].0[d];
                        if best.is_none_or(|b| v > messages[b].0[d]) {
                            best = Some(k);
                        }
                    }
                    if let Some(k) = best {
                        agg[d] = messages[k].0[d];
                    }
                    argmax[i][d] = best;
                }
                let mut input = h[i].clone();
                input.extend_from_slice(&agg);
                let (out, cache) = layer.update.forward_cached(&input)?;
                next.push(out);
                updates.push(cache);
            }
            caches.push(LayerCache {
                messages,
                argmax,
                updates,
            });
            h = next;
        }
        let mut outputs = Vec::with_capacity(n);
        let mut readouts = Vec::with_capacity(n);
        for i in 0..n {
            let mut input = h[i].clone();
            input.extend_from_slice(&graph.features[i]);
            input.push(graph.direct_scalar[i]);
            let (out, cache) = self.readout.forward_cached(&input)?;
            outputs.push(out[0]);
            readouts.push(cache);
        }
        Ok((
            outputs,
            GnnCache {
                layers: caches,
                readouts,
            },
        ))
    }

    /// Parameter gradient (flat layout) given dLoss/d(output_i).
    pub(crate) fn backward(
        &self,
        graph: &InterferenceGraph,
        cache: &GnnCache,
        d_outputs: &[f64],
    ) -> Result<Vec<f64>, GnnError> {
        let n = graph.vertex_count();
        if d_outputs.len() != n {
            return Err(GnnError::Shape("output gradient length"));
        }
        let sizes: Vec<usize> = self.nets().map(DenseNet::param_count).collect();
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for s in &sizes {
            offsets.push(total);
            total += s;
        }
        let mut grads = vec![0.0; total];
        let readout_idx = 2 * self.layers.len();
        let mut dh = vec![vec![0.0; EMBED]; n];
        {
            let (o, s) = (offsets[readout_idx], sizes[readout_idx]);
            let g = &mut grads[o..o + s];
            for i in 0..n {
                let dx = self
                    .readout
                    .backward(&cache.readouts[i], &[d_outputs[i]], g)?;
                dh[i].copy_from_slice(&dx[..EMBED]);
            }
        }

        for (k, layer) in self.layers.iter().enumerate().rev() {
            let lc = &cache.layers[k];
            let in_dim = layer.update.input_width() - layer.message.output_width();
            let width = layer.message.output_width();
            let mut dh_prev = vec![vec![0.0; in_dim]; n];
            let mut d_msg = vec![vec![0.0; width]; graph.edges.len()];
            {
                let (o, s) = (offsets[2 * k + 1], sizes[2 * k + 1]);
                let g = &mut grads[o..o + s];
                for i in 0..n {
                    let dx = layer.update.backward(&lc.updates[i], &dh[i], g)?;
                    for (a, b) in dh_prev[i].iter_mut().zip(&dx[..in_dim]) {
                        *a += b;
                    }
                    for d in 0..width {
                        if let Some(e) = lc.argmax[i][d] {
                            d_msg[e][d] += dx[in_dim + d];
                        }
                    }
                }
            }
            {
                let (o, s) = (offsets[2 * k], sizes[2 * k]);
                let g = &mut grads[o..o + s];
                for (e, edge) in graph.edges.iter().enumerate() {
                    if d_msg[e].iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    let dx = layer.message.backward(&lc.messages[e].1, &d_msg[e], g)?;
                    for (a, b) in dh_prev[edge.dst].iter_mut().zip(&dx[..in_dim]) {
                        *a += b;
                    }
                    for (a, b) in dh_prev[edge.src].iter_mut().zip(&dx[in_dim..2 * in_dim]) {
                        *a += b;
                    }
                }
            }
            dh = dh_prev;
        }
        Ok(grads)
    }

    const MAGIC: &'static [u8; 4] = b"CDGN";
    const VERSION: u32 = 1;

    /// Header, graph feature constants, then every net in nncore format.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), GnnError> {
        out.write_all(Self::MAGIC).map_err(NnError::from)?;
        let mut header = Vec::new();
        header.extend_from_slice(&Self::VERSION.to_le_bytes());
        header.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        let cfg = &self.graph_config;
        for v in [
            cfg.norm.gain_mean,
            cfg.norm.gain_std,
            cfg.norm.dist_mean,
            cfg.norm.dist_std,
            cfg.norm.edge_scale,
            cfg.edge_floor,
            cfg.reference_width_deg,
        ] {
            header.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&header).map_err(NnError::from)?;
        for net in self.nets() {
            net.write_to(&mut out)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, GnnError> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).map_err(NnError::from)?;
        if &magic != Self::MAGIC {
            return Err(NnError::Checkpoint("bad gnn magic".into()).into());
        }
        let version = read_u32(&mut input)?;
        if version != Self::VERSION {
            return Err(NnError::Checkpoint(format!("unsupported gnn version {version}")).into());
        }
        let k = read_u32(&mut input)? as usize;
        if k == 0 || k > 16 {
            return Err(NnError::Checkpoint(format!("implausible layer count {k}")).into());
        }
        let mut vals = [0.0; 7];
        for v in &mut vals {
            *v = read_f64(&mut input)?;
        }
        let graph_config = GraphConfig {
            norm: FeatureNorm {
                gain_mean: vals[0],
                gain_std: vals[1],
                dist_mean: vals[2],
                dist_std: vals[3],
                edge_scale: vals[4],
            },
            edge_floor: vals[5],
            reference_width_deg: vals[6],
        };
        let mut layers = Vec::with_capacity(k);
        for _ in 0..k {
            let message = DenseNet::read_from(&mut input)?;
            let update = DenseNet::read_from(&mut input)?;
            layers.push(GnnLayer { message, update });
        }
        let readout = DenseNet::read_from(&mut input)?;
        let model = Self {
            layers,
            readout,
            graph_config,
        };
        model.check_dimensions()?;
        Ok(model)
    }

    /// Adjacent nets agree on their widths.
    pub fn check_dimensions(&self) -> Result<(), GnnError> {
        let mut dim = VERTEX_FEATURES;
        for l in &self.layers {
            if l.message.input_width() != 2 * dim + EDGE_FEATURES {
                return Err(GnnError::Shape("message input width"));
            }
            let m = l.message.output_width();
            if l.update.input_width() != dim + m {
                return Err(GnnError::Shape("update input width"));
            }
            dim = l.update.output_width();
        }
        if self.readout.input_width() != dim + VERTEX_FEATURES + 1
            || self.readout.output_width() != 1
        {
            return Err(GnnError::Shape("readout widths"));
        }
        Ok(())
    }
}
