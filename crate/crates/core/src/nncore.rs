//! Dense perceptrons with hand-written reverse mode, Adam, and a
//! finite-difference gradient checker.
//!
//! Parameters of a [`DenseNet`] live in one flat vector, layer after layer,
//! each layer stored as its row-major `out x in` weight matrix followed by
//! its bias. Hidden layers use ReLU, the output layer is linear.

use std::io::{self, Read, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("network needs at least an input and an output width, all non-zero")]
    BadWidths,
    #[error("non-finite gradient at parameter {0}")]
    NonFiniteGradient(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn check_len(expected: usize, got: usize) -> Result<(), NnError> {
    if expected != got {
        return Err(NnError::Shape { expected, got });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    widths: Vec<usize>,
    params: Vec<f64>,
    /// Offset of each layer's weight block in `params`.
    offsets: Vec<usize>,
}

/// Values kept from a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    /// Smallest |z| over the hidden pre-activations.
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        let hidden = self.pre.len().saturating_sub(1);
        self.pre[..hidden]
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }

    /// Folds the ReLU on/off pattern into `acc`.
    pub fn fold_pattern(&self, acc: u64) -> u64 {
        let hidden = self.pre.len().saturating_sub(1);
        let mut h = acc;
        for z in self.pre[..hidden].iter().flatten() {
            h = mix(h, u64::from(*z > 0.0));
        }
        h
    }
}

/// FNV-style accumulation for activation-pattern fingerprints.
/// Dot product with eight independent partial sums so the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    const L: usize = 8;
    let mut acc = [0.0; L];
    let split = a.len() - a.len() % L;
    for (x, y) in a[..split].chunks_exact(L).zip(b[..split].chunks_exact(L)) {
        for k in 0..L {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = a[split..].iter().zip(&b[split..]).map(|(x, y)| x * y).sum();
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

pub fn mix(acc: u64, value: u64) -> u64 {
    (acc ^ value.wrapping_add(0x9e37_79b9_7f4a_7c15)).wrapping_mul(0x0000_0100_0000_01b3)
}

impl DenseNet {
    /// Zero-initialised network.
    pub fn zeros(widths: &[usize]) -> Result<Self, NnError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NnError::BadWidths);
        }
        let mut offsets = Vec::with_capacity(widths.len() - 1);
        let mut total = 0;
        for w in widths.windows(2) {
            offsets.push(total);
            total += (w[0] + 1) * w[1];
        }
        Ok(Self {
            widths: widths.to_vec(),
            params: vec![0.0; total],
            offsets,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self, NnError> {
        let mut net = Self::zeros(widths)?;
        for layer in 0..net.layer_count() {
            let (n_in, n_out) = (net.widths[layer], net.widths[layer + 1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let off = net.offsets[layer];
            for w in &mut net.params[off..off + n_in * n_out] {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        check_len(self.params.len(), params.len())?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn layer_slices(&self, layer: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.widths[layer], self.widths[layer + 1]);
        let off = self.offsets[layer];
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + (n_in + 1) * n_out];
        (w, b)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        check_len(self.input_width(), input.len())?;
        let layers = self.layer_count();
        let mut x = input.to_vec();
        for layer in 0..layers {
            let (w, b) = self.layer_slices(layer);
            let n_in = self.widths[layer];
            let relu = layer + 1 < layers;
            x = b
                .iter()
                .enumerate()
                .map(|(o, bias)| {
                    let z = bias + dot(&w[o * n_in..(o + 1) * n_in], &x);
                    if relu {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), NnError> {
        check_len(self.input_width(), input.len())?;
        let layers = self.layer_count();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(layers),
            pre: Vec::with_capacity(layers),
        };
        let mut x = input.to_vec();
        for layer in 0..layers {
            let (w, b) = self.layer_slices(layer);
            let n_in = self.widths[layer];
            let z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bias)| bias + dot(&w[o * n_in..(o + 1) * n_in], &x))
                .collect();
            let out = if layer + 1 < layers {
                z.iter().map(|&v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            cache.inputs.push(std::mem::replace(&mut x, out));
            cache.pre.push(z);
        }
        Ok((x, cache))
    }

    /// Reverse pass. Parameter gradients are accumulated into `grads`
    /// (same layout as [`DenseNet::params`]); the input gradient is returned.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>, NnError> {
        check_len(self.output_width(), upstream.len())?;
        check_len(self.params.len(), grads.len())?;
        check_len(self.layer_count(), cache.pre.len())?;
        let layers = self.layer_count();
        let mut delta = upstream.to_vec();
        for layer in (0..layers).rev() {
            let (n_in, n_out) = (self.widths[layer], self.widths[layer + 1]);
            if layer + 1 < layers {
                // ReLU'(0) = 0
                for (d, z) in delta.iter_mut().zip(&cache.pre[layer]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = &cache.inputs[layer];
            let off = self.offsets[layer];
            let (w, _) = self.layer_slices(layer);
            let mut dx = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let g_row = &mut grads[off + o * n_in..off + (o + 1) * n_in];
                for (g, xi) in g_row.iter_mut().zip(x) {
                    *g += d * xi;
                }
                grads[off + n_in * n_out + o] += d;
                let w_row = &w[o * n_in..(o + 1) * n_in];
                for (dxi, wi) in dx.iter_mut().zip(w_row) {
                    *dxi += d * wi;
                }
            }
            delta = dx;
        }
        Ok(delta)
    }

    const MAGIC: &'static [u8; 4] = b"CDNN";
    const VERSION: u32 = 1;

    /// Versioned header, layer widths, then the flat parameters as
    /// little-endian f64.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), NnError> {
        out.write_all(Self::MAGIC)?;
        out.write_all(&Self::VERSION.to_le_bytes())?;
        out.write_all(&(self.widths.len() as u32).to_le_bytes())?;
        for &w in &self.widths {
            out.write_all(&(w as u32).to_le_bytes())?;
        }
        for p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut input)?;
        if version != Self::VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let n = read_u32(&mut input)? as usize;
        if n > 64 {
            return Err(NnError::Checkpoint(format!("implausible layer count {n}")));
        }
        let widths = (0..n)
            .map(|_| read_u32(&mut input).map(|w| w as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let mut net = Self::zeros(&widths)?;
        for p in net.params.iter_mut() {
            *p = read_f64(&mut input)?;
        }
        Ok(net)
    }
}

pub(crate) fn read_u32<R: Read>(input: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(input: &mut R) -> Result<f64, NnError> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// Bias-corrected Adam update. On a non-finite gradient nothing is
    /// modified.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        check_len(self.first_moment.len(), params.len())?;
        check_len(params.len(), grads.len())?;
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFiniteGradient(i));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Loss value, its gradient, and a fingerprint of every non-smooth branch
/// taken (ReLU signs, max selections) while computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub pattern: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates sampled; all of them when larger than the parameter count.
    pub samples: usize,
    pub seed: u64,
    /// Relative-error denominator floor, scaled by `1 + |loss|`.
    pub floor: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            samples: 64,
            seed: 0,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Coordinates whose finite-difference stencil crossed a kink.
    pub skipped: usize,
    pub passed: bool,
}

/// Compares analytic gradients against central differences on sampled
/// coordinates. A coordinate is skipped when either perturbed evaluation
/// takes a different non-smooth branch than the base point.
pub fn gradcheck<F>(params: &[f64], mut loss: F, config: &GradcheckConfig) -> GradcheckReport
where
    F: FnMut(&[f64]) -> LossEval,
{
    let base = loss(params);
    let n = params.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let coords: Vec<usize> = if config.samples >= n {
        (0..n).collect()
    } else {
        let mut v = sample(&mut rng, n, config.samples).into_vec();
        v.sort_unstable();
        v
    };
    let floor = config.floor * (1.0 + base.value.abs());
    let mut work = params.to_vec();
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst_index: None,
        checked: 0,
        skipped: 0,
        passed: false,
    };
    for i in coords {
        let orig = work[i];
        work[i] = orig + config.step;
        let plus = loss(&work);
        work[i] = orig - config.step;
        let minus = loss(&work);
        work[i] = orig;
        if plus.pattern != base.pattern || minus.pattern != base.pattern {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus.value - minus.value) / (2.0 * config.step);
        let analytic = base.gradient[i];
        let denom = analytic.abs().max(numeric.abs()).max(floor);
        let rel = (analytic - numeric).abs() / denom;
        report.checked += 1;
        if rel > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = rel;
            report.worst_index = Some(i);
        }
    }
    report.passed = report.checked > 0 && report.max_rel_error <= config.tolerance;
    if config.tolerance == 0.0 && report.max_rel_error == 0.0 {
        // exact agreement only happens for degenerate (all-zero) gradients
        report.passed = report.checked > 0 && base.gradient.iter().all(|g| *g == 0.0);
    }
    report
}
