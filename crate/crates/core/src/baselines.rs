//! Comparison methods for the beamforming problem: scalar WMMSE power
//! control, exhaustive enumeration of activation and beamwidth for small
//! link counts, and a uniformly random beamwidth choice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rfmodel::{
    cone_gain_at_offset, mainlobe_gain, BeamDecision, LinkCoupling, MAX_BEAMWIDTH_DEG,
    MIN_BEAMWIDTH_DEG,
};

/// Largest link count the exhaustive oracle accepts.
pub const BRUTE_FORCE_MAX_LINKS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("channel matrix: {0}")]
    InvalidChannel(&'static str),
    #[error("wmmse config: {0}")]
    InvalidConfig(&'static str),
    #[error("wmmse produced a non-finite value at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("brute force limited to {limit} links, got {n}")]
    TooManyLinks { n: usize, limit: usize },
    #[error("empty link set")]
    Empty,
}

/// Effective power gains `gains[j][i]` from transmitter `j` to receiver `i`
/// with antenna gains and path loss folded in, plus receiver noise power.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    gains: Vec<Vec<f64>>,
    noise: f64,
}

impl ChannelMatrix {
    pub fn new(gains: Vec<Vec<f64>>, noise: f64) -> Result<Self, BaselineError> {
        let n = gains.len();
        if n == 0 {
            return Err(BaselineError::Empty);
        }
        if gains.iter().any(|row| row.len() != n) {
            return Err(BaselineError::InvalidChannel("matrix must be square"));
        }
        if gains.iter().flatten().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(BaselineError::InvalidChannel(
                "gains must be finite and >= 0",
            ));
        }
        if (0..n).any(|i| gains[i][i] <= 0.0) {
            return Err(BaselineError::InvalidChannel("diagonal must be positive"));
        }
        if !(noise > 0.0) || !noise.is_finite() {
            return Err(BaselineError::InvalidChannel("noise must be positive"));
        }
        Ok(Self { gains, noise })
    }

    /// Channel seen when every link uses aligned cones of the given widths.
    pub fn from_coupling(
        coupling: &LinkCoupling,
        widths_deg: &[f64],
    ) -> Result<Self, BaselineError> {
        let n = coupling.len();
        let mut gains = vec![vec![0.0; n]; n];
        for j in 0..n {
            let wj = widths_deg[j].to_radians();
            for i in 0..n {
                let wi = widths_deg[i].to_radians();
                gains[j][i] = if i == j {
                    let g = mainlobe_gain(wi);
                    g * g * coupling.path[i][i]
                } else {
                    cone_gain_at_offset(wj, coupling.tx_offset[j][i])
                        * cone_gain_at_offset(wi, coupling.rx_offset[j][i])
                        * coupling.path[j][i]
                };
            }
        }
        Self::new(gains, coupling.noise_power)
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn gain(&self, from_tx: usize, to_rx: usize) -> f64 {
        self.gains[from_tx][to_rx]
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn sinr(&self, i: usize, powers: &[f64]) -> f64 {
        let interference: f64 = (0..self.len())
            .filter(|&j| j != i)
            .map(|j| self.gains[j][i] * powers[j])
            .sum();
        self.gains[i][i] * powers[i] / (interference + self.noise)
    }

    /// Spectral-efficiency sum `sum_i log2(1 + SINR_i)`, bit/s/Hz.
    pub fn sum_rate(&self, powers: &[f64]) -> f64 {
        (0..self.len())
            .map(|i| (1.0 + self.sinr(i, powers)).log2())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmmseConfig {
    pub max_iterations: usize,
    /// Stop once the relative sum-rate improvement falls below this.
    pub tolerance: f64,
    pub max_power: f64,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-9,
            max_power: 0.01,
        }
    }
}

impl WmmseConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.max_iterations == 0 {
            return Err(BaselineError::InvalidConfig("max_iterations must be >= 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(BaselineError::InvalidConfig("tolerance must be positive"));
        }
        if !(self.max_power > 0.0) || !self.max_power.is_finite() {
            return Err(BaselineError::InvalidConfig("max_power must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseResult {
    pub powers: Vec<f64>,
    /// Sum rate (bit/s/Hz) at the initial point and after every iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

impl WmmseResult {
    pub fn sum_rate(&self) -> f64 {
        *self.trace.last().expect("trace has the initial point")
    }
}

/// WMMSE from full power, `v_i = sqrt(Pmax)`. At high SNR an interior
/// start grows by only about `noise / (h v)` per iteration.
pub fn wmmse(channel: &ChannelMatrix, cfg: &WmmseConfig) -> Result<WmmseResult, BaselineError> {
    let start = vec![cfg.max_power.sqrt(); channel.len()];
    wmmse_from(channel, cfg, &start)
}

/// Scalar WMMSE: alternating closed-form updates of the receive
/// coefficients, MSE weights and transmit amplitudes.
pub fn wmmse_from(
    channel: &ChannelMatrix,
    cfg: &WmmseConfig,
    start_amplitudes: &[f64],
) -> Result<WmmseResult, BaselineError> {
    cfg.validate()?;
    let n = channel.len();
    if start_amplitudes.len() != n {
        return Err(BaselineError::InvalidConfig("start vector length"));
    }
    let v_max = cfg.max_power.sqrt();
    let sqrt_h: Vec<f64> = (0..n).map(|i| channel.gain(i, i).sqrt()).collect();
    let mut v: Vec<f64> = start_amplitudes
        .iter()
        .map(|a| a.clamp(0.0, v_max))
        .collect();
    let mut u = vec![0.0; n];
    let mut w = vec![0.0; n];
    let powers = |v: &[f64]| v.iter().map(|a| a * a).collect::<Vec<_>>();

    let mut trace = vec![channel.sum_rate(&powers(&v))];
    let mut iterations = 0;
    for it in 1..=cfg.max_iterations {
        let p = powers(&v);
        for i in 0..n {
            let interference: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| channel.gain(j, i) * p[j])
                .sum::<f64>()
                + channel.noise();
            let total = interference + channel.gain(i, i) * p[i];
            u[i] = sqrt_h[i] * v[i] / total;
            // 1 / (1 - u h v) without the cancellation
            w[i] = total / interference;
        }
        for i in 0..n {
            let numerator = w[i] * u[i] * sqrt_h[i];
            v[i] = if numerator == 0.0 {
                0.0
            } else {
                let denom: f64 = (0..n)
                    .map(|j| w[j] * u[j] * u[j] * channel.gain(i, j))
                    .sum();
                (numerator / denom).clamp(0.0, v_max)
            };
        }
        if v.iter().chain(&u).chain(&w).any(|x| !x.is_finite()) {
            return Err(BaselineError::NonFinite { iteration: it });
        }
        let rate = channel.sum_rate(&powers(&v));
        if !rate.is_finite() {
            return Err(BaselineError::NonFinite { iteration: it });
        }
        let prev = *trace.last().expect("non-empty");
        trace.push(rate);
        iterations = it;
        if (rate - prev).abs() <= cfg.tolerance * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(WmmseResult {
        powers: powers(&v),
        trace,
        iterations,
    })
}

/// Global maximiser of the sum capacity over every activation subset and
/// every beamwidth in 1..=15 degrees. Ties go to the lexicographically
/// smallest `(P, A)`; inactive links report beamwidth 1.
pub fn brute_force(coupling: &LinkCoupling) -> Result<(BeamDecision, f64), BaselineError> {
    let n = coupling.len();
    if n == 0 {
        return Err(BaselineError::Empty);
    }
    if n > BRUTE_FORCE_MAX_LINKS {
        return Err(BaselineError::TooManyLinks {
            n,
            limit: BRUTE_FORCE_MAX_LINKS,
        });
    }
    let widths: Vec<u8> = (MIN_BEAMWIDTH_DEG..=MAX_BEAMWIDTH_DEG).collect();
    let nw = widths.len();
    // gain tables indexed [j][i][width index]
    let mut tx = vec![vec![vec![0.0; nw]; n]; n];
    let mut rx = vec![vec![vec![0.0; nw]; n]; n];
    let mut direct = vec![vec![0.0; nw]; n];
    for (k, &a) in widths.iter().enumerate() {
        let w = f64::from(a).to_radians();
        for j in 0..n {
            let g = mainlobe_gain(w);
            direct[j][k] = coupling.tx_power * g * g * coupling.path[j][j];
            for i in 0..n {
                if i != j {
                    tx[j][i][k] = cone_gain_at_offset(w, coupling.tx_offset[j][i]);
                    rx[j][i][k] = cone_gain_at_offset(w, coupling.rx_offset[j][i]);
                }
            }
        }
    }

    let mut best: Option<(Vec<bool>, Vec<u8>, f64)> = None;
    let mut idx = vec![0usize; n];
    // mask bit (n-1-i) is p_i, so increasing masks are lexicographic in P
    for mask in 1u32..(1 << n) {
        let active: Vec<bool> = (0..n).map(|i| mask >> (n - 1 - i) & 1 == 1).collect();
        let free: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
        idx.iter_mut().for_each(|k| *k = 0);
        loop {
            let mut total = 0.0;
            for &i in &free {
                let ki = idx[i];
                let mut interference = 0.0;
                for &j in &free {
                    if j != i {
                        interference += coupling.tx_power
                            * tx[j][i][idx[j]]
                            * rx[j][i][ki]
                            * coupling.path[j][i];
                    }
                }
                let s = direct[i][ki] / (coupling.noise_power + interference);
                total += coupling.bandwidth * (1.0 + s).log2();
            }
            if best.as_ref().is_none_or(|b| total > b.2) {
                best = Some((
                    active.clone(),
                    idx.iter().map(|&k| widths[k]).collect(),
                    total,
                ));
            }
            // odometer over the active links, last one fastest
            let mut advanced = false;
            for &i in free.iter().rev() {
                idx[i] += 1;
                if idx[i] < nw {
                    advanced = true;
                    break;
                }
                idx[i] = 0;
            }
            if !advanced {
                break;
            }
        }
    }
    let (active, widths, value) = best.expect("at least one subset");
    let decision = BeamDecision::new(active, widths).expect("valid by construction");
    Ok((decision, value))
}

/// All links active with independent uniform beamwidths.
pub fn random_decision(n: usize, seed: u64) -> BeamDecision {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = (0..n)
        .map(|_| rng.random_range(MIN_BEAMWIDTH_DEG..=MAX_BEAMWIDTH_DEG))
        .collect();
    BeamDecision::new(vec![true; n], widths).expect("non-empty link set")
}
