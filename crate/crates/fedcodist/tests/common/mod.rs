//! Shared test oracles.

use fedcodist::numerics::{
    forward_logits, kl_divergence, softmax_temp, Batch, LossKind, MlpSpec, ParamVector, Tensor,
};

/// Loss evaluated through the forward path only; no gradient code involved.
pub fn loss_at(
    spec: &MlpSpec,
    params: &ParamVector,
    batch: &Batch,
    loss: LossKind,
    targets: Option<&Tensor>,
    temperature: f64,
) -> f64 {
    let logits = forward_logits(spec, params, &batch.features).unwrap();
    match loss {
        LossKind::CrossEntropy => {
            let labels = batch.labels.as_ref().unwrap();
            let n = batch.len();
            let mut total = 0.0;
            for r in 0..n {
                let z = logits.row(r);
                let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
                total += lse - z[labels[r] as usize];
            }
            total / n as f64
        }
        LossKind::KlToTarget => {
            let student = softmax_temp(&logits, temperature).unwrap();
            kl_divergence(targets.unwrap(), &student).unwrap()
        }
    }
}

/// Central finite differences of `loss_at` with step `h`, per coordinate.
pub fn finite_difference_grad(
    spec: &MlpSpec,
    params: &ParamVector,
    batch: &Batch,
    loss: LossKind,
    targets: Option<&Tensor>,
    temperature: f64,
    h: f64,
) -> Vec<f64> {
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let mut plus = params.clone();
        plus.values_mut()[i] += h;
        let mut minus = params.clone();
        minus.values_mut()[i] -= h;
        let lp = loss_at(spec, &plus, batch, loss, targets, temperature);
        let lm = loss_at(spec, &minus, batch, loss, targets, temperature);
        grad.push((lp - lm) / (2.0 * h));
    }
    grad
}

/// Largest per-coordinate relative error, with a small floor on the
/// denominator so near-zero coordinates compare absolutely.
pub fn max_rel_error(analytic: &[f64], reference: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(reference)
        .map(|(a, r)| (a - r).abs() / a.abs().max(r.abs()).max(floor))
        .fold(0.0, f64::max)
}
