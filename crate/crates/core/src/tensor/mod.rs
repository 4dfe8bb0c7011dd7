//! Minimal reverse-mode differentiable tensor engine.
//!
//! A [`Tensor`] is an immutable, reference-counted node holding row-major
//! `f64` values. Operations on tensors that require gradients record a
//! backward closure together with their inputs; [`Tensor::backward`] walks
//! the recorded graph from a scalar loss and accumulates gradients into the
//! leaf tensors.
//!
//! Node ids are allocated from a global monotonic counter, so every node is
//! created after all of its inputs. Visiting reachable nodes in descending id
//! order is therefore a valid reverse topological order, and it is the same
//! order on every run.

mod conv;
mod elementwise;
mod linear;
mod loss;
mod pool;
mod shape_ops;

pub use conv::conv2d;
pub use linear::dense;
pub use loss::{binary_cross_entropy, masked_mse, BCE_EPS};
pub use pool::{avg_pool2d, global_avg_pool, max_pool2d};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{contract_err, Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

type BackwardFn = Box<dyn Fn(&[f64], &[Tensor]) -> Vec<Option<Vec<f64>>> + Send + Sync>;

struct GradFn {
    inputs: Vec<Tensor>,
    backward: BackwardFn,
}

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f64>>>,
    grad_fn: Option<GradFn>,
    backward_done: AtomicBool,
}

/// N-dimensional array participating in reverse-mode gradient computation.
#[derive(Clone)]
pub struct Tensor {
    node: Arc<Node>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .field("len", &self.node.data.len())
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, grad_fn: Option<GradFn>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                grad_fn,
                backward_done: AtomicBool::new(false),
            }),
        }
    }

    /// Leaf tensor without gradient tracking.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} holds {} values, got {}",
                shape,
                numel(shape),
                data.len()
            )));
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// Leaf tensor that accumulates a gradient during [`Tensor::backward`].
    pub fn parameter(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let t = Self::new(shape, data)?;
        Ok(t.with_requires_grad(true))
    }

    pub fn scalar(value: f64) -> Self {
        Self::build(Vec::new(), vec![value], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::build(shape.to_vec(), vec![value; numel(shape)], false, None)
    }

    /// A new leaf sharing this tensor's values, with gradient tracking set as requested.
    pub fn with_requires_grad(&self, requires_grad: bool) -> Self {
        Self::build(self.node.shape.clone(), self.node.data.clone(), requires_grad, None)
    }

    /// A new leaf with the same values and no history.
    pub fn detach(&self) -> Self {
        self.with_requires_grad(false)
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.node.data
    }

    pub fn len(&self) -> usize {
        self.node.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn item(&self) -> f64 {
        self.node.data[0]
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    /// Accumulated gradient, if any has been written.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.node.grad.lock().expect("grad lock").clone()
    }

    /// Gradient or zeros when this tensor was not reached by backward.
    pub fn grad_or_zeros(&self) -> Vec<f64> {
        self.grad().unwrap_or_else(|| vec![0.0; self.len()])
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock().expect("grad lock") = None;
    }

    /// Builds the result of an operation. The backward closure is only kept
    /// when at least one input requires a gradient.
    pub(crate) fn from_op<F>(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        inputs: &[&Tensor],
        backward: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64], &[Tensor]) -> Vec<Option<Vec<f64>>> + Send + Sync + 'static,
    {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(
                op,
                format!("non-finite value {} at flat index {pos}", data[pos]),
            ));
        }
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let grad_fn = requires_grad.then(|| GradFn {
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            backward: Box::new(backward),
        });
        Ok(Self::build(shape, data, requires_grad, grad_fn))
    }

    pub(crate) fn check_finite(&self, op: &'static str) -> Result<()> {
        match self.values().iter().position(|v| !v.is_finite()) {
            Some(pos) => Err(Error::numeric(op, format!("non-finite input at flat index {pos}"))),
            None => Ok(()),
        }
    }

    /// Reverse-mode pass from a rank-0 loss.
    ///
    /// Fills the gradient buffer of every reachable leaf that requires a
    /// gradient. A second call on the same loss, or a call while a reachable
    /// leaf still holds a gradient from an earlier pass, is rejected: reset
    /// with [`Tensor::zero_grad`] (or `ParamStore::zero_grad`) first.
    pub fn backward(&self) -> Result<()> {
        if !self.shape().is_empty() {
            return Err(contract_err!(
                "backward needs a rank-0 loss, got shape {:?}",
                self.shape()
            ));
        }
        if !self.requires_grad() {
            return Err(contract_err!("loss has no recorded computation history"));
        }
        if self.node.backward_done.swap(true, Ordering::SeqCst) {
            return Err(contract_err!(
                "backward already ran on this loss; rebuild the graph"
            ));
        }

        // Collect reachable nodes requiring grad.
        let mut nodes: BTreeMap<u64, Tensor> = BTreeMap::new();
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.id()) {
                continue;
            }
            if let Some(gf) = &t.node.grad_fn {
                for inp in &gf.inputs {
                    if inp.requires_grad() && !seen.contains(&inp.id()) {
                        stack.push(inp.clone());
                    }
                }
            }
            nodes.insert(t.id(), t);
        }

        let stale = nodes
            .values()
            .filter(|t| t.node.grad_fn.is_none() && t.node.grad.lock().expect("grad lock").is_some())
            .count();
        if stale > 0 {
            self.node.backward_done.store(false, Ordering::SeqCst);
            return Err(contract_err!(
                "{stale} leaf tensor(s) still hold gradients from an earlier backward; call zero_grad first"
            ));
        }

        let mut pending: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        pending.insert(self.id(), vec![1.0]);
        for (id, t) in nodes.iter().rev() {
            let Some(g) = pending.remove(id) else { continue };
            match &t.node.grad_fn {
                None => {
                    let mut slot = t.node.grad.lock().expect("grad lock");
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        None => *slot = Some(g),
                    }
                }
                Some(gf) => {
                    let input_grads = (gf.backward)(&g, &gf.inputs);
                    debug_assert_eq!(input_grads.len(), gf.inputs.len());
                    for (inp, ig) in gf.inputs.iter().zip(input_grads) {
                        let Some(ig) = ig else { continue };
                        if !inp.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(ig.len(), inp.len());
                        match pending.get_mut(&inp.id()) {
                            Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(inp.id(), ig);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let x = Tensor::parameter(&[2, 3], (0..6).map(|v| v as f64 * 0.3 - 1.0).collect()).unwrap();
        let loss = x.sum().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn half_square_gives_identity() {
        let vals = vec![0.5, -1.25, 3.0, 0.0];
        let x = Tensor::parameter(&[4], vals.clone()).unwrap();
        let loss = x.mul(&x).unwrap().sum().unwrap().scale(0.5).unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vals);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let x = Tensor::parameter(&[2], vec![1.0, 2.0]).unwrap();
        let y = x.scale(2.0).unwrap();
        assert!(matches!(y.backward(), Err(Error::Contract(_))));
    }

    #[test]
    fn detached_loss_rejected() {
        let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let loss = x.sum().unwrap();
        assert!(matches!(loss.backward(), Err(Error::Contract(_))));
    }

    #[test]
    fn second_backward_without_reset_rejected() {
        let x = Tensor::parameter(&[2], vec![1.0, 2.0]).unwrap();
        let loss = x.sum().unwrap();
        loss.backward().unwrap();
        assert!(loss.backward().is_err());

        let loss2 = x.sum().unwrap();
        assert!(loss2.backward().is_err(), "stale leaf gradient must be rejected");
        x.zero_grad();
        loss2.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn shared_input_accumulates() {
        let a = Tensor::parameter(&[1], vec![3.0]).unwrap();
        let c = a.mul(&a).unwrap().sum().unwrap();
        c.backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![6.0]);
    }

    #[test]
    fn shape_mismatch_on_new() {
        assert!(matches!(Tensor::new(&[2, 2], vec![0.0; 3]), Err(Error::Shape(_))));
    }
}
