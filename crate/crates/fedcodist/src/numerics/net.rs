//! MLP architecture description, forward pass, losses, and backpropagation.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::params::{ParamLayout, ParamVector};
use super::tensor::{Batch, Tensor};
use crate::error::{Error, Result};

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed in terms of the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Architecture descriptor for a dense classifier: how a flat parameter
/// vector is interpreted as weight matrices and bias vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::ConfigValidationError {
                field: "input_dim".into(),
                reason: "must be positive".into(),
            });
        }
        if self.num_classes < 2 {
            return Err(Error::ConfigValidationError {
                field: "num_classes".into(),
                reason: "must be at least 2".into(),
            });
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::ConfigValidationError {
                field: "hidden_dims".into(),
                reason: "hidden widths must be positive".into(),
            });
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per dense layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.num_classes));
        dims
    }

    /// Total parameter count: sum over layers of `in*out + out`.
    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|(i, o)| i * o + o)
            .sum()
    }

    /// Segment layout: `layerN.weight` (row-major `[in, out]`) then
    /// `layerN.bias` for each dense layer.
    pub fn layout(&self) -> Arc<ParamLayout> {
        let mut parts = Vec::new();
        for (l, (i, o)) in self.layer_dims().into_iter().enumerate() {
            parts.push((format!("layer{l}.weight"), i * o));
            parts.push((format!("layer{l}.bias"), o));
        }
        ParamLayout::from_lengths(parts)
    }

    /// Glorot-uniform weights, zero biases. Deterministic per rng stream.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> ParamVector {
        let layout = self.layout();
        let mut values = Vec::with_capacity(layout.total_len());
        for (fan_in, fan_out) in self.layer_dims() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                values.push(rng.random_range(-limit..limit));
            }
            values.resize(values.len() + fan_out, 0.0);
        }
        ParamVector::from_values(layout, values)
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        let dims = self.layer_dims();
        let segments = params.layout().segments();
        let ok = segments.len() == 2 * dims.len()
            && dims.iter().enumerate().all(|(l, &(i, o))| {
                segments[2 * l].len == i * o && segments[2 * l + 1].len == o
            });
        if ok {
            Ok(())
        } else {
            Err(Error::IncompatibleParams(format!(
                "parameter vector of length {} does not fit a spec with {} parameters",
                params.len(),
                self.param_count()
            )))
        }
    }
}

/// Training loss selector for [`backprop`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Softmax cross-entropy against integer labels.
    CrossEntropy,
    /// KL(targets || student) with temperature-scaled student probabilities.
    KlToTarget,
}

/// Forward pass returning per-layer activations; the last entry holds the
/// logits (no activation on the output layer).
fn forward_full(spec: &MlpSpec, params: &ParamVector, features: &Tensor) -> Vec<Tensor> {
    let n = features.rows();
    let dims = spec.layer_dims();
    let num_layers = dims.len();
    let mut activations = Vec::with_capacity(num_layers + 1);
    activations.push(features.clone());
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let w = params.segment(&format!("layer{l}.weight")).unwrap();
        let b = params.segment(&format!("layer{l}.bias")).unwrap();
        let prev = activations.last().unwrap();
        let mut out = Tensor::zeros(vec![n, fan_out]);
        for r in 0..n {
            let x = prev.row(r);
            let z = out.row_mut(r);
            z.copy_from_slice(b);
            for i in 0..fan_in {
                let xi = x[i];
                let wrow = &w[i * fan_out..(i + 1) * fan_out];
                for (zj, wj) in z.iter_mut().zip(wrow) {
                    *zj += xi * wj;
                }
            }
            if l + 1 < num_layers {
                for zj in z.iter_mut() {
                    *zj = spec.activation.apply(*zj);
                }
            }
        }
        activations.push(out);
    }
    activations
}

/// Computes logits for a feature batch. Pure function of its inputs.
pub fn forward_logits(spec: &MlpSpec, params: &ParamVector, features: &Tensor) -> Result<Tensor> {
    spec.check_params(params)?;
    if features.cols() != spec.input_dim {
        return Err(Error::IncompatibleBatches(format!(
            "features have {} columns, spec expects {}",
            features.cols(),
            spec.input_dim
        )));
    }
    let logits = forward_full(spec, params, features).pop().unwrap();
    if logits.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalError("non-finite logits".into()));
    }
    Ok(logits)
}

/// Temperature-scaled softmax, rowwise: `p_i = exp(z_i/T) / sum_j exp(z_j/T)`.
///
/// The row max is subtracted before exponentiation. `T < 1` sharpens the
/// distribution, `T > 1` smooths it.
pub fn softmax_temp(logits: &Tensor, temperature: f64) -> Result<Tensor> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidTemperature(temperature));
    }
    let mut probs = logits.clone();
    for r in 0..probs.rows() {
        softmax_row_in_place(probs.row_mut(r), temperature);
    }
    Ok(probs)
}

fn softmax_row_in_place(row: &mut [f64], temperature: f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = ((*v - max) / temperature).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Student probabilities are clamped to `[1e-12, 1]` inside the log to avoid
/// `log(0)`; invisible at the tolerances used anywhere in this crate.
const PROB_CLAMP: f64 = 1e-12;

/// Mean over rows of `KL(target || student)`, with the `0 * log(0/q) = 0`
/// convention on zero target entries.
pub fn kl_divergence(target: &Tensor, student: &Tensor) -> Result<f64> {
    if target.shape() != student.shape() {
        return Err(Error::IncompatibleBatches(format!(
            "target shape {:?} vs student shape {:?}",
            target.shape(),
            student.shape()
        )));
    }
    let n = target.rows();
    let mut total = 0.0;
    for r in 0..n {
        for (&t, &s) in target.row(r).iter().zip(student.row(r)) {
            if t > 0.0 {
                let s = s.clamp(PROB_CLAMP, 1.0);
                total += t * (t.ln() - s.ln());
            }
        }
    }
    Ok(total / n as f64)
}

/// Backpropagation through the full network.
///
/// For `CrossEntropy` the batch must carry labels; the loss is the mean
/// negative log-likelihood of the softmax at `T = 1` (the temperature
/// argument is not applied to supervised training).
///
/// For `KlToTarget` the student logits are scaled by `temperature` before
/// the softmax, matching the teacher-side scaling used to build the targets,
/// so a student that equals its targets has exactly zero loss and gradient.
///
/// Returns the scalar loss and a gradient laid out like `params`.
pub fn backprop(
    spec: &MlpSpec,
    params: &ParamVector,
    batch: &Batch,
    loss: LossKind,
    target_probs: Option<&Tensor>,
    temperature: f64,
) -> Result<(f64, ParamVector)> {
    spec.check_params(params)?;
    if !(temperature > 0.0) {
        return Err(Error::InvalidTemperature(temperature));
    }
    let n = batch.len();
    if n == 0 {
        return Err(Error::IncompatibleBatches("empty batch".into()));
    }
    if batch.features.cols() != spec.input_dim {
        return Err(Error::IncompatibleBatches(format!(
            "features have {} columns, spec expects {}",
            batch.features.cols(),
            spec.input_dim
        )));
    }

    let activations = forward_full(spec, params, &batch.features);
    let logits = activations.last().unwrap();
    let k = spec.num_classes;

    // Loss and gradient at the logits.
    let mut loss_value = 0.0;
    let mut delta = Tensor::zeros(vec![n, k]);
    match loss {
        LossKind::CrossEntropy => {
            let labels = batch.labels.as_ref().ok_or_else(|| {
                Error::MissingSupervision("cross_entropy requires labels".into())
            })?;
            for (r, &raw_label) in labels.iter().enumerate() {
                let label = raw_label as usize;
                if label >= k {
                    return Err(Error::IncompatibleBatches(format!(
                        "label {label} out of range for {k} classes"
                    )));
                }
                let z = logits.row(r);
                let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
                loss_value += lse - z[label];
                let d = delta.row_mut(r);
                for (j, dj) in d.iter_mut().enumerate() {
                    let p = (z[j] - lse).exp();
                    *dj = (p - if j == label { 1.0 } else { 0.0 }) / n as f64;
                }
            }
            loss_value /= n as f64;
        }
        LossKind::KlToTarget => {
            let targets = target_probs.ok_or_else(|| {
                Error::MissingSupervision("kl_to_target requires target probabilities".into())
            })?;
            if targets.shape() != [n, k] {
                return Err(Error::IncompatibleBatches(format!(
                    "target shape {:?}, expected [{n}, {k}]",
                    targets.shape()
                )));
            }
            let student_probs = softmax_temp(logits, temperature)?;
            loss_value = kl_divergence(targets, &student_probs)?;
            for r in 0..n {
                let p = student_probs.row(r);
                let t = targets.row(r);
                let d = delta.row_mut(r);
                for j in 0..k {
                    d[j] = (p[j] - t[j]) / (temperature * n as f64);
                }
            }
        }
    }

    // Backward through the dense layers.
    let dims = spec.layer_dims();
    let layout = params.layout();
    let mut grad = ParamVector::zeros(Arc::clone(layout));
    for l in (0..dims.len()).rev() {
        let (fan_in, fan_out) = dims[l];
        let prev = &activations[l];
        let wseg = layout.segment(&format!("layer{l}.weight")).unwrap();
        let bseg = layout.segment(&format!("layer{l}.bias")).unwrap();
        let (woff, boff) = (wseg.offset, bseg.offset);
        for r in 0..n {
            let d = delta.row(r).to_vec();
            let x = prev.row(r);
            let g = grad.values_mut();
            for i in 0..fan_in {
                let xi = x[i];
                let grow = &mut g[woff + i * fan_out..woff + (i + 1) * fan_out];
                for (gj, dj) in grow.iter_mut().zip(&d) {
                    *gj += xi * dj;
                }
            }
            for (gj, dj) in g[boff..boff + fan_out].iter_mut().zip(&d) {
                *gj += dj;
            }
        }
        if l > 0 {
            let w = params.segment(&format!("layer{l}.weight")).unwrap();
            let mut next_delta = Tensor::zeros(vec![n, fan_in]);
            for r in 0..n {
                let d = delta.row(r);
                let a = prev.row(r);
                let nd = next_delta.row_mut(r);
                for i in 0..fan_in {
                    let mut acc = 0.0;
                    let wrow = &w[i * fan_out..(i + 1) * fan_out];
                    for (dj, wj) in d.iter().zip(wrow) {
                        acc += dj * wj;
                    }
                    nd[i] = acc * spec.activation.derivative_from_output(a[i]);
                }
            }
            delta = next_delta;
        }
    }

    if !loss_value.is_finite() {
        return Err(Error::NumericalError("non-finite loss".into()));
    }
    Ok((loss_value, grad))
}

/// Mixes two unlabeled feature batches rowwise: `lambda*a + (1-lambda)*b`
/// with `lambda ~ Beta(beta, beta)` drawn per row.
pub fn mixup(batch_a: &Batch, batch_b: &Batch, beta: f64, rng: &mut ChaCha8Rng) -> Result<Batch> {
    let dist = Beta::new(beta, beta)
        .map_err(|e| Error::NumericalError(format!("invalid mixup beta {beta}: {e}")))?;
    let lambdas: Vec<f64> = (0..batch_a.len()).map(|_| dist.sample(rng)).collect();
    mixup_with_lambdas(batch_a, batch_b, &lambdas)
}

/// Deterministic mixup kernel with caller-provided per-row coefficients.
pub fn mixup_with_lambdas(batch_a: &Batch, batch_b: &Batch, lambdas: &[f64]) -> Result<Batch> {
    if batch_a.features.shape() != batch_b.features.shape() {
        return Err(Error::IncompatibleBatches(format!(
            "mixup operands have shapes {:?} and {:?}",
            batch_a.features.shape(),
            batch_b.features.shape()
        )));
    }
    assert_eq!(lambdas.len(), batch_a.len(), "one lambda per row");
    let mut features = batch_a.features.clone();
    for (r, &lambda) in lambdas.iter().enumerate() {
        let b = batch_b.features.row(r).to_vec();
        for (f, bv) in features.row_mut(r).iter_mut().zip(b) {
            *f = lambda * *f + (1.0 - lambda) * bv;
        }
    }
    Ok(Batch::unlabeled(features))
}
