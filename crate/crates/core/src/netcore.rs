//! Dense feedforward classifier with softmax output.
//!
//! Parameters live in one flat `f64` buffer, layer-major, weights before
//! biases, each weight matrix row-major with shape `(out, in)`. Gradients use
//! the same layout so flat indices are stable across runs.

use rand::Rng;

use crate::error::{LabError, Result};

/// Floor applied to probabilities inside logs and divisions.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layer_sizes: Vec<usize>,
    values: Vec<f64>,
}

/// Where one layer's weights and biases sit in the flat buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpan {
    pub inputs: usize,
    pub outputs: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerSpan {
    pub fn end(&self) -> usize {
        self.bias_offset + self.outputs
    }
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(LabError::config(
            "a network needs at least an input and an output size",
        ));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(LabError::config("layer sizes must be positive"));
    }
    Ok(())
}

/// Total parameter count for the given layer sizes.
pub fn parameter_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl NetworkParams {
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            values: vec![0.0; parameter_count(layer_sizes)],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(layer_sizes)?;
        for span in params.spans() {
            let limit = (6.0 / (span.inputs + span.outputs) as f64).sqrt();
            for w in &mut params.values[span.weight_offset..span.bias_offset] {
                *w = rng.gen_range(-limit..=limit);
            }
        }
        Ok(params)
    }

    pub fn from_values(layer_sizes: &[usize], values: Vec<f64>) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let expected = parameter_count(layer_sizes);
        if values.len() != expected {
            return Err(LabError::input(format!(
                "expected {expected} parameters for layers {layer_sizes:?}, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::input("parameters must be finite"));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            values,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn spans(&self) -> Vec<LayerSpan> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let span = LayerSpan {
                    inputs: w[0],
                    outputs: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset = span.end();
                span
            })
            .collect()
    }

    /// Copy with `direction` added, scaled by `scale`.
    pub fn offset_by(&self, direction: &[f64], scale: f64) -> Self {
        debug_assert_eq!(direction.len(), self.values.len());
        let values = self
            .values
            .iter()
            .zip(direction)
            .map(|(v, d)| v + scale * d)
            .collect();
        Self {
            layer_sizes: self.layer_sizes.clone(),
            values,
        }
    }
}

/// Activations recorded by one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// Pre-activation of every weight layer; the last entry holds the logits.
    pub pre_activations: Vec<Vec<f64>>,
    /// ReLU outputs for hidden layers, softmax output for the last layer.
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn probs(&self) -> &[f64] {
        self.activations
            .last()
            .expect("trace has at least one layer")
    }

    pub fn depth(&self) -> usize {
        self.pre_activations.len()
    }

    /// Smallest |pre-activation| over hidden units, used to keep
    /// finite-difference checks away from ReLU kinks.
    pub fn min_hidden_margin(&self) -> f64 {
        let hidden = self.pre_activations.len().saturating_sub(1);
        self.pre_activations[..hidden]
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

/// Soft (or hard) target over the k classes. Entries are not constrained to
/// the simplex: SLN targets may be negative and the loss is linear in them.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    values: Vec<f64>,
}

impl TargetDistribution {
    pub fn one_hot(k: usize, class: usize) -> Self {
        assert!(class < k, "class {class} out of range for k={k}");
        let mut values = vec![0.0; k];
        values[class] = 1.0;
        Self { values }
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            values: vec![1.0 / k as f64; k],
        }
    }

    /// (1 - eps) * e^class + eps / k.
    pub fn smoothed(k: usize, class: usize, eps: f64) -> Self {
        let mut values = vec![eps / k as f64; k];
        values[class] += 1.0 - eps;
        Self { values }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// a * self + b * other.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }
}

/// Flat gradient aligned with [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn zeros(p: usize) -> Self {
        Self(vec![0.0; p])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// self += c * other
    pub fn add_scaled(&mut self, other: &GradientVector, c: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.0 {
            *a *= c;
        }
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn forward(params: &NetworkParams, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != params.input_dim() {
        return Err(LabError::input(format!(
            "input has {} features, network expects {}",
            x.len(),
            params.input_dim()
        )));
    }
    let spans = params.spans();
    let last = spans.len() - 1;
    let mut pre_activations = Vec::with_capacity(spans.len());
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(spans.len());
    for (l, span) in spans.iter().enumerate() {
        let input: &[f64] = if l == 0 { x } else { &activations[l - 1] };
        let weights = &params.values[span.weight_offset..span.bias_offset];
        let biases = &params.values[span.bias_offset..span.end()];
        let z: Vec<f64> = weights
            .chunks_exact(span.inputs)
            .zip(biases)
            .map(|(row, b)| b + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>())
            .collect();
        let a = if l == last {
            softmax(&z)
        } else {
            z.iter().map(|v| v.max(0.0)).collect()
        };
        pre_activations.push(z);
        activations.push(a);
    }
    Ok(ForwardTrace {
        input: x.to_vec(),
        pre_activations,
        activations,
    })
}

fn check_target(trace: &ForwardTrace, target: &TargetDistribution) {
    assert_eq!(
        trace.probs().len(),
        target.len(),
        "target length must equal the class count"
    );
}

/// −Σ_j target_j · log max(probs_j, 1e-12).
pub fn ce_loss(trace: &ForwardTrace, target: &TargetDistribution) -> f64 {
    check_target(trace, target);
    -trace
        .probs()
        .iter()
        .zip(target.values())
        .map(|(p, t)| t * p.max(PROB_FLOOR).ln())
        .sum::<f64>()
}

/// Gradient of the cross entropy with respect to the logits:
/// (Σ_j t_j) · p − t. Reduces to p − t for targets on the simplex.
pub fn ce_logit_gradient(probs: &[f64], target: &TargetDistribution) -> Vec<f64> {
    let mass: f64 = target.values().iter().sum();
    probs
        .iter()
        .zip(target.values())
        .map(|(p, t)| mass * p - t)
        .collect()
}

/// Backpropagates a logit-space gradient and accumulates `scale` times the
/// parameter gradient into `out`.
pub fn backward_logits_into(
    params: &NetworkParams,
    trace: &ForwardTrace,
    logit_grad: &[f64],
    scale: f64,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), params.len());
    let spans = params.spans();
    let mut delta = logit_grad.to_vec();
    for l in (0..spans.len()).rev() {
        let span = spans[l];
        let input: &[f64] = if l == 0 {
            &trace.input
        } else {
            &trace.activations[l - 1]
        };
        for (o, d) in delta.iter().enumerate() {
            let sd = scale * d;
            if sd == 0.0 {
                continue;
            }
            let row = span.weight_offset + o * span.inputs;
            for (g, a) in out[row..row + span.inputs].iter_mut().zip(input) {
                *g += sd * a;
            }
            out[span.bias_offset + o] += sd;
        }
        if l > 0 {
            let weights = &params.values[span.weight_offset..span.bias_offset];
            let mut prev = vec![0.0; span.inputs];
            for (row, d) in weights.chunks_exact(span.inputs).zip(&delta) {
                if *d == 0.0 {
                    continue;
                }
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            for (p, z) in prev.iter_mut().zip(&trace.pre_activations[l - 1]) {
                if *z <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

/// Exact gradient of [`ce_loss`] with respect to every parameter.
pub fn backward(
    params: &NetworkParams,
    trace: &ForwardTrace,
    target: &TargetDistribution,
) -> GradientVector {
    check_target(trace, target);
    let mut grad = GradientVector::zeros(params.len());
    let logit_grad = ce_logit_gradient(trace.probs(), target);
    backward_logits_into(params, trace, &logit_grad, 1.0, &mut grad.0);
    grad
}

/// Row j is ∇_θ probs_j; one backpropagation per output.
pub fn output_jacobian(params: &NetworkParams, trace: &ForwardTrace) -> Vec<GradientVector> {
    let probs = trace.probs();
    (0..probs.len())
        .map(|j| {
            // d p_j / d z_m = p_j (δ_jm − p_m)
            let logit_grad: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(m, pm)| probs[j] * (if m == j { 1.0 } else { 0.0 } - pm))
                .collect();
            let mut row = GradientVector::zeros(params.len());
            backward_logits_into(params, trace, &logit_grad, 1.0, &mut row.0);
            row
        })
        .collect()
}

/// Momentum SGD with L2 weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub velocity: Vec<f64>,
    pub step: u64,
}

impl SgdState {
    pub fn new(p: usize) -> Self {
        Self {
            velocity: vec![0.0; p],
            step: 0,
        }
    }
}

/// velocity ← momentum·velocity + grad + weight_decay·θ; θ ← θ − lr·velocity.
pub fn sgd_step(
    params: &mut NetworkParams,
    grad: &GradientVector,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    state: &mut SgdState,
) -> Result<()> {
    if !(lr > 0.0) || !(0.0..1.0).contains(&momentum) || !(weight_decay >= 0.0) {
        return Err(LabError::config(format!(
            "invalid SGD settings lr={lr} momentum={momentum} weight_decay={weight_decay}"
        )));
    }
    if grad.len() != params.len() || state.velocity.len() != params.len() {
        return Err(LabError::input(
            "gradient/state length does not match parameters",
        ));
    }
    if !grad.is_finite() {
        return Err(LabError::numeric(
            format!("sgd step {}", state.step),
            "non-finite gradient",
        ));
    }
    for ((theta, v), g) in params
        .values
        .iter_mut()
        .zip(&mut state.velocity)
        .zip(&grad.0)
    {
        *v = momentum * *v + g + weight_decay * *theta;
        *theta -= lr * *v;
    }
    state.step += 1;
    Ok(())
}

/// Cross entropy of the network at `x` against `target`.
pub fn loss_at(params: &NetworkParams, x: &[f64], target: &TargetDistribution) -> Result<f64> {
    Ok(ce_loss(&forward(params, x)?, target))
}

/// Central differences (ℓ(θ + h e_i) − ℓ(θ − h e_i)) / 2h for every coordinate.
pub fn finite_diff_gradient(
    params: &NetworkParams,
    x: &[f64],
    target: &TargetDistribution,
    h: f64,
) -> Result<GradientVector> {
    if !(h > 0.0) {
        return Err(LabError::config("finite-difference step must be positive"));
    }
    let mut probe = params.clone();
    let mut grad = GradientVector::zeros(params.len());
    for i in 0..params.len() {
        let original = probe.values[i];
        probe.values[i] = original + h;
        let plus = loss_at(&probe, x, target)?;
        probe.values[i] = original - h;
        let minus = loss_at(&probe, x, target)?;
        probe.values[i] = original;
        grad.0[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}
