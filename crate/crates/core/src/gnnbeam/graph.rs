use crate::rfmodel::{cone_gain_at_offset, LinkCoupling, LinkGeometry, RfParams};

use super::GnnError;

/// Raw vertex feature width: normalized direct gain, normalized distance.
pub const VERTEX_FEATURES: usize = 2;
/// Edge feature width: normalized interference gain.
pub const EDGE_FEATURES: usize = 1;

/// Shift/scale constants for graph features, fitted on training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureNorm {
    pub gain_mean: f64,
    pub gain_std: f64,
    pub dist_mean: f64,
    pub dist_std: f64,
    /// Divisor for `log10(cross_gain / floor)`.
    pub edge_scale: f64,
}

impl Default for FeatureNorm {
    fn default() -> Self {
        Self {
            gain_mean: 0.0,
            gain_std: 1.0,
            dist_mean: 0.0,
            dist_std: 1.0,
            edge_scale: 1.0,
        }
    }
}

impl FeatureNorm {
    /// Mean and standard deviation of the raw features over a set of
    /// instances. Degenerate spreads fall back to 1.
    pub fn fit<'a, I>(instances: I, params: &RfParams, cfg: &GraphConfig) -> Result<Self, GnnError>
    where
        I: IntoIterator<Item = &'a [LinkGeometry]>,
    {
        let mut gains = Vec::new();
        let mut dists = Vec::new();
        let mut edges = Vec::new();
        for links in instances {
            let raw = RawFeatures::new(links, params, cfg)?;
            gains.extend(raw.direct_log_gain.iter().copied());
            dists.extend(raw.distance.iter().copied());
            edges.extend(raw.edges.iter().map(|e| e.2));
        }
        let (gain_mean, gain_std) = mean_std(&gains);
        let (dist_mean, dist_std) = mean_std(&dists);
        let edge_scale = if edges.is_empty() {
            1.0
        } else {
            let m = edges.iter().sum::<f64>() / edges.len() as f64;
            if m > 1e-9 {
                m
            } else {
                1.0
            }
        };
        Ok(Self {
            gain_mean,
            gain_std,
            dist_mean,
            dist_std,
            edge_scale,
        })
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 1.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 1e-9 { std } else { 1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphConfig {
    pub norm: FeatureNorm,
    /// Cross gains (relative to transmit power) below this produce no edge.
    pub edge_floor: f64,
    /// Beamwidth at which potential interference is assessed, degrees.
    pub reference_width_deg: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            norm: FeatureNorm::default(),
            // -120 dB
            edge_floor: 1e-12,
            reference_width_deg: f64::from(crate::rfmodel::MAX_BEAMWIDTH_DEG),
        }
    }
}

/// Unnormalized per-link quantities.
struct RawFeatures {
    coupling: LinkCoupling,
    direct_log_gain: Vec<f64>,
    distance: Vec<f64>,
    /// (src j, dst i, log10(cross / floor))
    edges: Vec<(usize, usize, f64)>,
}

impl RawFeatures {
    fn new(links: &[LinkGeometry], params: &RfParams, cfg: &GraphConfig) -> Result<Self, GnnError> {
        if links.is_empty() {
            return Err(GnnError::EmptyInstance);
        }
        let coupling = LinkCoupling::new(links, params)?;
        let n = links.len();
        let direct_log_gain = (0..n)
            .map(|i| (params.tx_power * coupling.path[i][i] / params.noise_power()).log10())
            .collect();
        let distance = links.iter().map(LinkGeometry::distance).collect();
        let w_ref = cfg.reference_width_deg.to_radians();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let cross = cone_gain_at_offset(w_ref, coupling.tx_offset[j][i])
                    * cone_gain_at_offset(w_ref, coupling.rx_offset[j][i])
                    * coupling.path[j][i];
                if cross >= cfg.edge_floor {
                    edges.push((j, i, (cross / cfg.edge_floor).log10()));
                }
            }
        }
        Ok(Self {
            coupling,
            direct_log_gain,
            distance,
            edges,
        })
    }
}

/// Directed interference edge `src -> dst`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub feature: f64,
}

/// One vertex per transmitter-receiver pair; an edge `j -> i` when
/// transmitter `j` can reach receiver `i` through both reference cones.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceGraph {
    pub(crate) features: Vec<[f64; VERTEX_FEATURES]>,
    pub(crate) direct_scalar: Vec<f64>,
    pub(crate) edges: Vec<Edge>,
    /// Incoming edge indices per vertex, ordered by source.
    pub(crate) incoming: Vec<Vec<usize>>,
    pub(crate) coupling: LinkCoupling,
}

impl InterferenceGraph {
    pub fn vertex_count(&self) -> usize {
        self.features.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn features(&self) -> &[[f64; VERTEX_FEATURES]] {
        &self.features
    }

    pub fn direct_scalar(&self) -> &[f64] {
        &self.direct_scalar
    }

    pub fn neighbors(&self, vertex: usize) -> impl Iterator<Item = usize> + '_ {
        self.incoming[vertex]
            .iter()
            .map(move |&e| self.edges[e].src)
    }

    pub fn coupling(&self) -> &LinkCoupling {
        &self.coupling
    }

    /// Assemble a graph from explicit parts; used for synthetic graphs.
    pub fn from_parts(
        features: Vec<[f64; VERTEX_FEATURES]>,
        direct_scalar: Vec<f64>,
        edges: Vec<Edge>,
        coupling: LinkCoupling,
    ) -> Result<Self, GnnError> {
        let n = features.len();
        if n == 0 {
            return Err(GnnError::EmptyInstance);
        }
        if direct_scalar.len() != n || coupling.len() != n {
            return Err(GnnError::Shape("vertex arrays disagree in length"));
        }
        let mut incoming = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                return Err(GnnError::Shape("edge endpoint out of range"));
            }
            if e.src == e.dst {
                return Err(GnnError::Shape("self edge"));
            }
            if !(e.feature >= 0.0) || !e.feature.is_finite() {
                return Err(GnnError::Shape("edge feature must be finite and >= 0"));
            }
            incoming[e.dst].push(k);
        }
        for list in &mut incoming {
            list.sort_by_key(|&k| edges[k].src);
        }
        Ok(Self {
            features,
            direct_scalar,
            edges,
            incoming,
            coupling,
        })
    }

    /// Relabel vertices: vertex `v` of `self` becomes vertex `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GnnError> {
        let n = self.vertex_count();
        if perm.len() != n {
            return Err(GnnError::Shape("permutation length"));
        }
        let mut features = vec![[0.0; VERTEX_FEATURES]; n];
        let mut direct_scalar = vec![0.0; n];
        for v in 0..n {
            features[perm[v]] = self.features[v];
            direct_scalar[perm[v]] = self.direct_scalar[v];
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                src: perm[e.src],
                dst: perm[e.dst],
                feature: e.feature,
            })
            .collect();
        let c = &self.coupling;
        let remap = |m: &Vec<Vec<f64>>| {
            let mut out = vec![vec![0.0; n]; n];
            for j in 0..n {
                for i in 0..n {
                    out[perm[j]][perm[i]] = m[j][i];
                }
            }
            out
        };
        let coupling = LinkCoupling {
            path: remap(&c.path),
            tx_offset: remap(&c.tx_offset),
            rx_offset: remap(&c.rx_offset),
            ..c.clone()
        };
        Self::from_parts(features, direct_scalar, edges, coupling)
    }
}

/// Builds the interference graph of a link set.
pub fn build_graph(
    links: &[LinkGeometry],
    params: &RfParams,
    cfg: &GraphConfig,
) -> Result<InterferenceGraph, GnnError> {
    let raw = RawFeatures::new(links, params, cfg)?;
    let norm = &cfg.norm;
    let features = raw
        .direct_log_gain
        .iter()
        .zip(&raw.distance)
        .map(|(g, d)| {
            [
                (g - norm.gain_mean) / norm.gain_std,
                (d - norm.dist_mean) / norm.dist_std,
            ]
        })
        .collect();
    // absolute SNR level in tens of dB, kept un-centred
    let direct_scalar = raw.direct_log_gain.iter().map(|g| g / 10.0).collect();
    let edges = raw
        .edges
        .iter()
        .map(|&(src, dst, v)| Edge {
            src,
            dst,
            feature: v / norm.edge_scale,
        })
        .collect();
    InterferenceGraph::from_parts(features, direct_scalar, edges, raw.coupling)
}
