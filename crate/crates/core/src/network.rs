//! Dense surrogate network mapping the two material parameters to the 50
//! observation readings, with input/output normalization, manual
//! backpropagation, and the blockwise SGD/Adam alternation trainer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::elastic::{FEConfig, ParameterBox, ParameterPoint};
use crate::error::{Error, Result};
use crate::geometry::DomainSpec;
use crate::invalid_input;
use crate::linalg::{axpy, matvec_rowmajor, matvec_transpose_rowmajor};
use crate::observe::ObservationConfig;

/// Per-component affine maps taking raw inputs and outputs to the
/// normalized coordinates the network is trained in.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormalizationStats {
    pub input_mean: [f64; 2],
    pub input_scale: [f64; 2],
    pub output_mean: Vec<f64>,
    pub output_scale: Vec<f64>,
}

impl NormalizationStats {
    /// The do-nothing map: zero means, unit scales.
    pub fn identity(output_dim: usize) -> Self {
        NormalizationStats {
            input_mean: [0.0; 2],
            input_scale: [1.0; 2],
            output_mean: vec![0.0; output_dim],
            output_scale: vec![1.0; output_dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scales = self.input_scale.iter().chain(&self.output_scale);
        for s in scales {
            if !(s.is_finite() && *s > 0.0) {
                return Err(invalid_input!("normalization scales must be positive, got {s}"));
            }
        }
        let means = self.input_mean.iter().chain(&self.output_mean);
        if !means.into_iter().all(|m| m.is_finite()) {
            return Err(Error::NonFinite { context: "normalization means".into() });
        }
        if self.output_mean.len() != self.output_scale.len() {
            return Err(Error::ShapeMismatch {
                context: "normalization output vectors",
                expected: self.output_mean.len(),
                got: self.output_scale.len(),
            });
        }
        Ok(())
    }

    pub fn normalize_input(&self, raw: [f64; 2]) -> [f64; 2] {
        [
            (raw[0] - self.input_mean[0]) / self.input_scale[0],
            (raw[1] - self.input_mean[1]) / self.input_scale[1],
        ]
    }

    pub fn denormalize_input(&self, normalized: [f64; 2]) -> [f64; 2] {
        [
            normalized[0] * self.input_scale[0] + self.input_mean[0],
            normalized[1] * self.input_scale[1] + self.input_mean[1],
        ]
    }

    pub fn normalize_output(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.output_mean.iter().zip(&self.output_scale))
            .map(|(y, (m, s))| (y - m) / s)
            .collect()
    }

    pub fn denormalize_output(&self, normalized: &[f64]) -> Vec<f64> {
        normalized
            .iter()
            .zip(self.output_mean.iter().zip(&self.output_scale))
            .map(|(a, (m, s))| a * s + m)
            .collect()
    }
}

/// Fully connected network with softplus hidden layers and identity output,
/// weights stored row-major per layer (`weights[l]` maps activations of
/// layer `l` to pre-activations of layer `l + 1`).
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseNetwork {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub norm: NormalizationStats,
}

/// The default layout: 2 inputs, hidden 200 and 100, 50 outputs.
pub const DEFAULT_LAYOUT: [usize; 4] = [2, 200, 100, 50];

impl DenseNetwork {
    /// Number of weight layers L (the layout has L + 1 entries).
    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated layout is non-empty")
    }

    pub fn parameter_count(&self) -> usize {
        let w: usize = self.weights.iter().map(Vec::len).sum();
        let b: usize = self.biases.iter().map(Vec::len).sum();
        w + b
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(invalid_input!("a network needs at least input and output layers"));
        }
        if self.layer_sizes[0] != 2 {
            return Err(invalid_input!(
                "the input layer carries the two material parameters, got size {}",
                self.layer_sizes[0]
            ));
        }
        if self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(invalid_input!("layer sizes must be positive"));
        }
        let l_count = self.layer_count();
        if self.weights.len() != l_count || self.biases.len() != l_count {
            return Err(Error::ShapeMismatch {
                context: "network layer count",
                expected: l_count,
                got: self.weights.len(),
            });
        }
        for l in 0..l_count {
            let rows = self.layer_sizes[l + 1];
            let cols = self.layer_sizes[l];
            if self.weights[l].len() != rows * cols {
                return Err(Error::ShapeMismatch {
                    context: "weight matrix",
                    expected: rows * cols,
                    got: self.weights[l].len(),
                });
            }
            if self.biases[l].len() != rows {
                return Err(Error::ShapeMismatch {
                    context: "bias vector",
                    expected: rows,
                    got: self.biases[l].len(),
                });
            }
            let finite = self.weights[l].iter().chain(&self.biases[l]).all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite { context: format!("parameters of layer {}", l + 1) });
            }
        }
        self.norm.validate()?;
        if self.norm.output_mean.len() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                context: "output normalization",
                expected: self.output_dim(),
                got: self.norm.output_mean.len(),
            });
        }
        Ok(())
    }
}

/// Pre-activations and activations of one forward pass; `activations[0]`
/// is the normalized input and `activations[L]` the normalized output.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub zs: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Network output before denormalization.
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("a trace holds at least the input activation")
    }
}

/// How a stored dataset was produced: enough to regenerate it exactly.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetProvenance {
    pub domain: DomainSpec,
    pub fe: FEConfig,
    pub observation: ObservationConfig,
    pub parameter_box: ParameterBox,
    pub seed: u64,
}

/// Paired material parameters and observation rows.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    pub inputs: Vec<[f64; 2]>,
    pub outputs: Vec<Vec<f64>>,
    pub provenance: Option<DatasetProvenance>,
}

impl Dataset {
    pub fn new(inputs: Vec<[f64; 2]>, outputs: Vec<Vec<f64>>) -> Result<Self> {
        let ds = Dataset { inputs, outputs, provenance: None };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Width of the output rows; zero for an empty dataset.
    pub fn output_dim(&self) -> usize {
        self.outputs.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.outputs.len() {
            return Err(Error::ShapeMismatch {
                context: "dataset rows",
                expected: self.inputs.len(),
                got: self.outputs.len(),
            });
        }
        let width = self.output_dim();
        for row in &self.outputs {
            if row.len() != width {
                return Err(Error::ShapeMismatch {
                    context: "dataset output row",
                    expected: width,
                    got: row.len(),
                });
            }
            if !row.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { context: "dataset outputs".into() });
            }
        }
        for p in &self.inputs {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::NonFinite { context: "dataset inputs".into() });
            }
        }
        if let Some(prov) = &self.provenance {
            for p in &self.inputs {
                let point = ParameterPoint { young: p[0], poisson: p[1] };
                if !prov.parameter_box.contains(&point) {
                    return Err(invalid_input!(
                        "dataset input ({}, {}) lies outside its parameter box",
                        p[0],
                        p[1]
                    ));
                }
            }
        }
        Ok(())
    }

    /// Splits off a seeded random validation subset of roughly the given
    /// fraction (at least one row on each side); both halves keep the
    /// original row order and the provenance.
    pub fn split_validation(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        if self.len() < 2 {
            return Err(invalid_input!("splitting requires at least two rows"));
        }
        if !(0.0 < fraction && fraction < 1.0) {
            return Err(invalid_input!("validation fraction must be in (0, 1), got {fraction}"));
        }
        let n = self.len();
        let k = ((fraction * n as f64) as usize).clamp(1, n - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        let mut val_idx = idx[..k].to_vec();
        let mut train_idx = idx[k..].to_vec();
        val_idx.sort_unstable();
        train_idx.sort_unstable();
        let pick = |ids: &[usize]| Dataset {
            inputs: ids.iter().map(|&i| self.inputs[i]).collect(),
            outputs: ids.iter().map(|&i| self.outputs[i].clone()).collect(),
            provenance: self.provenance.clone(),
        };
        Ok((pick(&train_idx), pick(&val_idx)))
    }
}

/// Knobs of the blockwise SGD/Adam alternation trainer.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainingConfig {
    pub total_epochs: usize,
    /// Epochs per alternation block; both optimizers run this many.
    pub block_epochs: usize,
    pub batch_size: usize,
    /// Learning-rate endpoints of the geometric epoch schedule.
    pub lr_start: f64,
    pub lr_end: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub rng_seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            total_epochs: 500,
            block_epochs: 50,
            batch_size: 32,
            lr_start: 1e-3,
            lr_end: 5e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            rng_seed: 42,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_epochs == 0 {
            return Err(invalid_input!("block_epochs must be positive"));
        }
        if self.total_epochs % self.block_epochs != 0 {
            return Err(invalid_input!(
                "total_epochs ({}) must be a multiple of block_epochs ({})",
                self.total_epochs,
                self.block_epochs
            ));
        }
        if self.batch_size == 0 {
            return Err(invalid_input!("batch_size must be positive"));
        }
        for rate in [self.lr_start, self.lr_end] {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(invalid_input!("learning rates must be positive, got {rate}"));
            }
        }
        for beta in [self.adam_beta1, self.adam_beta2] {
            if !(0.0..1.0).contains(&beta) {
                return Err(invalid_input!("Adam betas must lie in [0, 1), got {beta}"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(invalid_input!("adam_eps must be positive"));
        }
        Ok(())
    }

    /// Geometric interpolation from `lr_start` (epoch 0) to `lr_end` (last
    /// epoch); monotone because the ratio is applied with a growing power.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if self.total_epochs <= 1 {
            return self.lr_start;
        }
        let t = epoch as f64 / (self.total_epochs - 1) as f64;
        self.lr_start * libm::pow(self.lr_end / self.lr_start, t)
    }
}

/// Which optimizer produced a branch or won a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Branch {
    Sgd,
    Adam,
}

/// Losses after one epoch of one branch.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// One alternation block: both branch curves and the selection.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockRecord {
    pub index: usize,
    pub sgd: Vec<EpochRecord>,
    pub adam: Vec<EpochRecord>,
    pub winner: Branch,
}

impl BlockRecord {
    pub fn branch_final_val(&self, branch: Branch) -> f64 {
        let records = match branch {
            Branch::Sgd => &self.sgd,
            Branch::Adam => &self.adam,
        };
        records.last().map_or(f64::NAN, |r| r.val_loss)
    }

    pub fn winning_val_loss(&self) -> f64 {
        self.branch_final_val(self.winner)
    }
}

/// Full training record: the validation loss before the first update and
/// every block's branch curves.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainingHistory {
    pub initial_val_loss: f64,
    pub blocks: Vec<BlockRecord>,
}

impl TrainingHistory {
    pub fn final_val_loss(&self) -> f64 {
        self.blocks.last().map_or(self.initial_val_loss, BlockRecord::winning_val_loss)
    }

    /// initial/final validation-loss ratio (≥ 1 means progress).
    pub fn validation_reduction(&self) -> f64 {
        self.initial_val_loss / self.final_val_loss()
    }
}

/// Gradient (or moment) container shaped exactly like a network's
/// parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        ParamGrads {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Largest absolute entry, used to detect vanishing/exploding steps.
    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .flat_map(|v| v.iter())
            .fold(0.0_f64, |m, &g| m.max(libm::fabs(g)))
    }
}

/// Adam first/second moments plus the step counter for bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: ParamGrads,
    pub v: ParamGrads,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &DenseNetwork) -> Self {
        AdamState { m: ParamGrads::zeros_like(net), v: ParamGrads::zeros_like(net), t: 0 }
    }
}

/// σ(s) = ln(1 + eˢ), evaluated on the side that never overflows.
pub fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + libm::log1p(libm::exp(-s))
    } else {
        libm::log1p(libm::exp(s))
    }
}

/// σ′(s) = 1/(1 + e^{−s}), the logistic function.
pub fn softplus_derivative(s: f64) -> f64 {
    if s > 0.0 {
        1.0 / (1.0 + libm::exp(-s))
    } else {
        let e = libm::exp(s);
        e / (1.0 + e)
    }
}

/// Runs the network on a raw parameter pair: normalize, propagate through
/// softplus hidden layers and the identity output layer.
fn forward_from_raw(net: &DenseNetwork, raw: [f64; 2]) -> Result<ForwardTrace> {
    let x = net.norm.normalize_input(raw);
    let l_count = net.layer_count();
    let mut activations = Vec::with_capacity(l_count + 1);
    let mut zs = Vec::with_capacity(l_count);
    activations.push(vec![x[0], x[1]]);
    for l in 0..l_count {
        let rows = net.layer_sizes[l + 1];
        let cols = net.layer_sizes[l];
        let mut z = vec![0.0; rows];
        matvec_rowmajor(&net.weights[l], rows, cols, &activations[l], &mut z);
        for (zi, bi) in z.iter_mut().zip(&net.biases[l]) {
            *zi += bi;
        }
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: format!("pre-activation in layer {}", l + 1) });
        }
        let a = if l + 1 == l_count { z.clone() } else { z.iter().map(|&s| softplus(s)).collect() };
        zs.push(z);
        activations.push(a);
    }
    Ok(ForwardTrace { zs, activations })
}

/// Evaluates the network at a parameter point, returning the denormalized
/// output and the trace needed for backpropagation.
pub fn forward(net: &DenseNetwork, p: &ParameterPoint) -> Result<(Vec<f64>, ForwardTrace)> {
    let raw = p.as_array();
    if !(raw[0].is_finite() && raw[1].is_finite()) {
        return Err(Error::NonFinite { context: "network input".into() });
    }
    let trace = forward_from_raw(net, raw)?;
    let out = net.norm.denormalize_output(trace.output());
    Ok((out, trace))
}

/// Mean squared half-error over the dataset, measured in normalized output
/// coordinates: (1/2n) Σ ‖ỹ_i − a^L(x_i)‖².
pub fn loss(net: &DenseNetwork, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(invalid_input!("loss of an empty dataset"));
    }
    let m = net.output_dim();
    let mut acc = 0.0;
    for (x, y) in dataset.inputs.iter().zip(&dataset.outputs) {
        if y.len() != m {
            return Err(Error::ShapeMismatch {
                context: "dataset output row",
                expected: m,
                got: y.len(),
            });
        }
        let trace = forward_from_raw(net, *x)?;
        let a = trace.output();
        let mut s = 0.0;
        for j in 0..m {
            let target = (y[j] - net.norm.output_mean[j]) / net.norm.output_scale[j];
            let d = a[j] - target;
            s += d * d;
        }
        acc += s;
    }
    Ok(acc / (2.0 * dataset.len() as f64))
}

/// Per-component mean and population standard deviation of the given
/// (training) rows; the error names the offending flat column — inputs
/// are columns 0..2, outputs follow.
pub fn fit_normalization(dataset: &Dataset) -> Result<NormalizationStats> {
    dataset.validate()?;
    let n = dataset.len();
    if n < 2 {
        return Err(invalid_input!("normalization needs at least two rows, got {n}"));
    }
    let inv_n = 1.0 / n as f64;
    let mut input_mean = [0.0; 2];
    let mut input_scale = [0.0; 2];
    for j in 0..2 {
        let mean = dataset.inputs.iter().map(|p| p[j]).sum::<f64>() * inv_n;
        let var =
            dataset.inputs.iter().map(|p| (p[j] - mean) * (p[j] - mean)).sum::<f64>() * inv_n;
        if var <= 0.0 {
            return Err(Error::ZeroVariance { column: j });
        }
        input_mean[j] = mean;
        input_scale[j] = libm::sqrt(var);
    }
    let width = dataset.output_dim();
    let mut output_mean = vec![0.0; width];
    let mut output_scale = vec![0.0; width];
    for j in 0..width {
        let mean = dataset.outputs.iter().map(|row| row[j]).sum::<f64>() * inv_n;
        let var =
            dataset.outputs.iter().map(|row| (row[j] - mean) * (row[j] - mean)).sum::<f64>()
                * inv_n;
        if var <= 0.0 {
            return Err(Error::ZeroVariance { column: 2 + j });
        }
        output_mean[j] = mean;
        output_scale[j] = libm::sqrt(var);
    }
    Ok(NormalizationStats { input_mean, input_scale, output_mean, output_scale })
}

/// Gradient of [`loss`] over the given batch with respect to every weight
/// and bias, via the layer recursion δ^l = (W^{l+1})ᵀ δ^{l+1} ∘ σ′(z^l).
pub fn backprop_weights(
    net: &DenseNetwork,
    inputs: &[[f64; 2]],
    targets: &[&[f64]],
) -> Result<ParamGrads> {
    if inputs.is_empty() {
        return Err(invalid_input!("backpropagation over an empty batch"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            context: "batch rows",
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    let l_count = net.layer_count();
    let m = net.output_dim();
    let mut grads = ParamGrads::zeros_like(net);
    let inv_n = 1.0 / inputs.len() as f64;
    for (x, y) in inputs.iter().zip(targets) {
        if y.len() != m {
            return Err(Error::ShapeMismatch {
                context: "batch target row",
                expected: m,
                got: y.len(),
            });
        }
        let trace = forward_from_raw(net, *x)?;
        let mut delta: Vec<f64> = trace.activations[l_count]
            .iter()
            .enumerate()
            .map(|(j, &a)| a - (y[j] - net.norm.output_mean[j]) / net.norm.output_scale[j])
            .collect();
        for l in (0..l_count).rev() {
            let rows = net.layer_sizes[l + 1];
            let cols = net.layer_sizes[l];
            let a_prev = &trace.activations[l];
            for r in 0..rows {
                let dr = delta[r] * inv_n;
                axpy(dr, a_prev, &mut grads.weights[l][r * cols..(r + 1) * cols]);
                grads.biases[l][r] += dr;
            }
            if l > 0 {
                let mut back = vec![0.0; cols];
                matvec_transpose_rowmajor(&net.weights[l], rows, cols, &delta, &mut back);
                for (bi, zi) in back.iter_mut().zip(&trace.zs[l - 1]) {
                    *bi *= softplus_derivative(*zi);
                }
                delta = back;
            }
        }
    }
    Ok(grads)
}

/// θ ← θ − rate·g.
pub fn sgd_step(net: &mut DenseNetwork, grads: &ParamGrads, rate: f64) {
    for (w, g) in net.weights.iter_mut().zip(&grads.weights) {
        axpy(-rate, g, w);
    }
    for (b, g) in net.biases.iter_mut().zip(&grads.biases) {
        axpy(-rate, g, b);
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(
    net: &mut DenseNetwork,
    grads: &ParamGrads,
    rate: f64,
    cfg: &TrainingConfig,
    state: &mut AdamState,
) {
    state.t += 1;
    let b1 = cfg.adam_beta1;
    let b2 = cfg.adam_beta2;
    let bc1 = 1.0 - libm::pow(b1, state.t as f64);
    let bc2 = 1.0 - libm::pow(b2, state.t as f64);
    let update = |theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..theta.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= rate * m_hat / (libm::sqrt(v_hat) + cfg.adam_eps);
        }
    };
    for l in 0..net.weights.len() {
        update(&mut net.weights[l], &grads.weights[l], &mut state.m.weights[l], &mut state.v.weights[l]);
        update(&mut net.biases[l], &grads.biases[l], &mut state.m.biases[l], &mut state.v.biases[l]);
    }
}

/// Fresh network for a layout: weights uniform in ±1/√fan_in, biases zero,
/// identity normalization.
pub fn init_network(layout: &[usize], seed: u64) -> Result<DenseNetwork> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layout.len().saturating_sub(1));
    let mut biases = Vec::with_capacity(layout.len().saturating_sub(1));
    for l in 1..layout.len() {
        let rows = layout[l];
        let cols = layout[l - 1];
        let bound = 1.0 / libm::sqrt(cols as f64);
        let w: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        weights.push(w);
        biases.push(vec![0.0; rows]);
    }
    let net = DenseNetwork {
        layer_sizes: layout.to_vec(),
        weights,
        biases,
        norm: NormalizationStats::identity(layout.last().copied().unwrap_or(0)),
    };
    net.validate()?;
    Ok(net)
}

/// The epoch's minibatch order, derived from the seed and the global epoch
/// index alone so both branches of a block shuffle identically.
fn epoch_permutation(n: usize, seed: u64, global_epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(global_epoch as u64 + 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

fn run_branch(
    start: &DenseNetwork,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainingConfig,
    block: usize,
    perms: &[Vec<usize>],
    branch: Branch,
) -> Result<(DenseNetwork, Vec<EpochRecord>)> {
    let mut net = start.clone();
    let mut adam = AdamState::new(&net);
    let mut records = Vec::with_capacity(cfg.block_epochs);
    for (e, perm) in perms.iter().enumerate() {
        let epoch = block * cfg.block_epochs + e;
        let rate = cfg.learning_rate(epoch);
        for chunk in perm.chunks(cfg.batch_size) {
            let batch_in: Vec<[f64; 2]> = chunk.iter().map(|&i| train_set.inputs[i]).collect();
            let batch_out: Vec<&[f64]> =
                chunk.iter().map(|&i| train_set.outputs[i].as_slice()).collect();
            let grads = backprop_weights(&net, &batch_in, &batch_out)?;
            match branch {
                Branch::Sgd => sgd_step(&mut net, &grads, rate),
                Branch::Adam => adam_step(&mut net, &grads, rate, cfg, &mut adam),
            }
        }
        let train_loss = loss(&net, train_set)?;
        let val_loss = loss(&net, val_set)?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        records.push(EpochRecord { epoch, learning_rate: rate, train_loss, val_loss });
    }
    Ok((net, records))
}

/// Blockwise alternation trainer: each block runs an SGD branch and an Adam
/// branch from the same starting weights over identical shuffles, then
/// keeps the branch with the lower validation loss (SGD wins ties).  Adam
/// moments restart with every block so the branches stay comparable.
pub fn train(
    net: DenseNetwork,
    train_set: &Dataset,
    val_set: &Dataset,
    cfg: &TrainingConfig,
) -> Result<(DenseNetwork, TrainingHistory)> {
    cfg.validate()?;
    net.validate()?;
    train_set.validate()?;
    val_set.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(invalid_input!("training requires non-empty train and validation sets"));
    }
    let initial_val_loss = loss(&net, val_set)?;
    if !initial_val_loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0 });
    }
    let mut current = net;
    let n_blocks = cfg.total_epochs / cfg.block_epochs;
    let mut blocks = Vec::with_capacity(n_blocks);
    for b in 0..n_blocks {
        let perms: Vec<Vec<usize>> = (0..cfg.block_epochs)
            .map(|e| epoch_permutation(train_set.len(), cfg.rng_seed, b * cfg.block_epochs + e))
            .collect();
        let (sgd_net, sgd) = run_branch(&current, train_set, val_set, cfg, b, &perms, Branch::Sgd)?;
        let (adam_net, adam) =
            run_branch(&current, train_set, val_set, cfg, b, &perms, Branch::Adam)?;
        let sgd_val = sgd.last().expect("block_epochs > 0").val_loss;
        let adam_val = adam.last().expect("block_epochs > 0").val_loss;
        let winner = if adam_val < sgd_val { Branch::Adam } else { Branch::Sgd };
        current = match winner {
            Branch::Adam => adam_net,
            Branch::Sgd => sgd_net,
        };
        blocks.push(BlockRecord { index: b, sgd, adam, winner });
    }
    Ok((current, TrainingHistory { initial_val_loss, blocks }))
}
