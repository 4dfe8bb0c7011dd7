use std::collections::BTreeMap;

use super::config::Optimizer;
use crate::error::{Error, Result};
use crate::nn::ParamStore;

/// First-order optimizer over the trainable parameters of a [`ParamStore`].
/// Parameters with gradient tracking disabled are never touched.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    grad_clip: f64,
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, grad_clip: f64) -> Self {
        OptimizerState {
            kind,
            grad_clip,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    /// Applies one update with learning rate `lr` from the gradients
    /// currently stored on the parameters. Returns the pre-clip gradient norm.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<f64> {
        let grads: Vec<(String, Vec<f64>)> = store
            .iter()
            .filter(|p| p.tensor.requires_grad())
            .map(|p| (p.name.clone(), p.tensor.grad_or_zeros()))
            .collect();
        let norm = grads
            .iter()
            .flat_map(|(_, g)| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() {
            return Err(Error::numeric("optimizer", "non-finite gradient norm"));
        }
        let clip = if self.grad_clip > 0.0 && norm > self.grad_clip {
            self.grad_clip / norm
        } else {
            1.0
        };
        self.step += 1;
        let t = self.step as i32;
        for (name, g) in grads {
            let values = store.get(&name)?.values().to_vec();
            let m = self.first.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let updated: Vec<f64> = match self.kind {
                Optimizer::Adam { beta1, beta2, eps } => {
                    let v = self.second.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
                    let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
                    values
                        .iter()
                        .zip(&g)
                        .zip(m.iter_mut().zip(v.iter_mut()))
                        .map(|((&w, &gi), (mi, vi))| {
                            let gi = gi * clip;
                            *mi = beta1 * *mi + (1.0 - beta1) * gi;
                            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                            w - lr * (*mi / c1) / ((*vi / c2).sqrt() + eps)
                        })
                        .collect()
                }
                Optimizer::Sgd { momentum } => values
                    .iter()
                    .zip(&g)
                    .zip(m.iter_mut())
                    .map(|((&w, &gi), mi)| {
                        *mi = momentum * *mi + gi * clip;
                        w - lr * *mi
                    })
                    .collect(),
            };
            store.set_values(&name, updated)?;
        }
        Ok(norm)
    }
}
