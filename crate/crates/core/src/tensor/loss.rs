use super::Tensor;
use crate::error::{contract_err, shape_err, Result};

/// Scores are clamped into `[BCE_EPS, 1 − BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy of `score` against 0/1 `label`, both `[N, 1]`.
pub fn binary_cross_entropy(score: &Tensor, label: &Tensor) -> Result<Tensor> {
    if score.shape() != label.shape() {
        return Err(shape_err!(
            "binary_cross_entropy: score {:?} vs label {:?}",
            score.shape(),
            label.shape()
        ));
    }
    if score.is_empty() {
        return Err(contract_err!("binary_cross_entropy on an empty batch"));
    }
    if let Some(bad) = label.values().iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(contract_err!("label {bad} outside {{0, 1}}"));
    }
    score.check_finite("binary_cross_entropy")?;
    let n = score.len() as f64;
    let total: f64 = score
        .values()
        .iter()
        .zip(label.values())
        .map(|(&s, &y)| {
            let s = s.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(y * s.ln() + (1.0 - y) * (1.0 - s).ln())
        })
        .sum();
    Tensor::from_op("binary_cross_entropy", Vec::new(), vec![total / n], &[score, label], move |g, inputs| {
        let gs = inputs[0]
            .values()
            .iter()
            .zip(inputs[1].values())
            .map(|(&s, &y)| {
                if s < BCE_EPS || s > 1.0 - BCE_EPS {
                    0.0
                } else {
                    g[0] * (s - y) / (s * (1.0 - s)) / n
                }
            })
            .collect();
        vec![Some(gs), None]
    })
}

/// Mean squared error over the entries where `mask` is 1.
///
/// Normalized by the number of unmasked entries (at least 1). Masked entries
/// contribute nothing to the value and receive an exactly zero gradient.
pub fn masked_mse(pred: &Tensor, target: &[f64], mask: &[f64]) -> Result<Tensor> {
    if pred.len() != target.len() || pred.len() != mask.len() {
        return Err(shape_err!(
            "masked_mse: pred has {} values, target {}, mask {}",
            pred.len(),
            target.len(),
            mask.len()
        ));
    }
    let count = mask.iter().sum::<f64>().max(1.0);
    let total: f64 = pred
        .values()
        .iter()
        .zip(target)
        .zip(mask)
        .map(|((p, t), m)| if *m != 0.0 { m * (p - t).powi(2) } else { 0.0 })
        .sum();
    let (target, mask) = (target.to_vec(), mask.to_vec());
    Tensor::from_op("masked_mse", Vec::new(), vec![total / count], &[pred], move |g, inputs| {
        let gp = inputs[0]
            .values()
            .iter()
            .zip(&target)
            .zip(&mask)
            .map(|((p, t), m)| if *m != 0.0 { g[0] * 2.0 * m * (p - t) / count } else { 0.0 })
            .collect();
        vec![Some(gp)]
    })
}
