//! Dynamic computation graph with reverse-mode differentiation.
//!
//! Every operator application creates a node holding its forward value, its
//! parents and a backward closure. Nodes carry a creation counter, so sorting
//! the reachable nodes by that counter in descending order is a reverse
//! topological order of the graph: a node is always created after all of its
//! parents.
//!
//! When no input of an operator requires a gradient the result is recorded as
//! a constant with no parents, and intermediate values are freed as soon as the
//! caller drops them. Inference on long records relies on this.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

/// Backward rule of an operator: maps the upstream gradient to one optional
/// gradient per parent (`None` for parents that do not require one).
pub type BackwardFn = Box<dyn Fn(&Tensor, &[Var]) -> Vec<Option<Tensor>>>;

struct Node {
    id: u64,
    value: Tensor,
    requires_grad: bool,
    grad: RefCell<Option<Tensor>>,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
}

/// Handle to a node of the computation graph.
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.0.value.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Var {
    fn make(value: Tensor, requires_grad: bool, parents: Vec<Var>, backward: Option<BackwardFn>) -> Self {
        Var(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value,
            requires_grad,
            grad: RefCell::new(None),
            parents,
            backward,
        }))
    }

    /// A leaf whose gradient is accumulated by [`Var::backward`].
    pub fn parameter(value: Tensor) -> Self {
        Self::make(value, true, Vec::new(), None)
    }

    /// A leaf that takes no part in differentiation.
    pub fn constant(value: Tensor) -> Self {
        Self::make(value, false, Vec::new(), None)
    }

    /// Records a custom operator. The backward closure is kept only if some
    /// parent requires a gradient.
    pub fn from_op(value: Tensor, parents: Vec<Var>, backward: BackwardFn) -> Self {
        if parents.iter().any(Var::requires_grad) {
            Self::make(value, true, parents, Some(backward))
        } else {
            Self::constant(value)
        }
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.backward.is_none()
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self) -> Option<Tensor> {
        self.0.grad.borrow().clone()
    }

    pub fn take_grad(&self) -> Option<Tensor> {
        self.0.grad.borrow_mut().take()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Backpropagates from a single-element output with seed gradient 1.
    pub fn backward(&self) -> Result<()> {
        if self.value().numel() != 1 {
            return Err(TensorError::NonScalarBackward(self.shape().to_vec()));
        }
        self.backward_with(Tensor::full(self.shape(), 1.0))
    }

    /// Backpropagates an explicit upstream gradient `seed` (same shape as
    /// this node) to every reachable leaf that requires a gradient.
    ///
    /// Gradients from several consumers of one node are summed before the
    /// node's own backward rule runs, and every node is visited exactly once.
    pub fn backward_with(&self, seed: Tensor) -> Result<()> {
        if seed.shape() != self.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "backward",
                detail: format!("seed {:?} vs output {:?}", seed.shape(), self.shape()),
            });
        }
        if !self.requires_grad() {
            return Ok(());
        }

        let order = self.reverse_topological_order();
        let mut pending: HashMap<u64, Tensor> = HashMap::new();
        pending.insert(self.id(), seed);

        for node in order {
            let Some(grad) = pending.remove(&node.id()) else {
                continue;
            };
            match &node.0.backward {
                None => {
                    let mut slot = node.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.add_assign(&grad),
                        None => *slot = Some(grad),
                    }
                }
                Some(backward) => {
                    let parent_grads = backward(&grad, &node.0.parents);
                    debug_assert_eq!(parent_grads.len(), node.0.parents.len());
                    for (parent, g) in node.0.parents.iter().zip(parent_grads) {
                        let Some(g) = g else { continue };
                        if !parent.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(g.shape(), parent.shape());
                        match pending.get_mut(&parent.id()) {
                            Some(acc) => acc.add_assign(&g),
                            None => {
                                pending.insert(parent.id(), g);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Nodes reachable from `self` that require gradients, newest first.
    fn reverse_topological_order(&self) -> Vec<Var> {
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        let mut nodes = Vec::new();
        seen.insert(self.id());
        while let Some(v) = stack.pop() {
            for p in &v.0.parents {
                if p.requires_grad() && seen.insert(p.id()) {
                    stack.push(p.clone());
                }
            }
            nodes.push(v);
        }
        nodes.sort_unstable_by_key(|n| std::cmp::Reverse(n.id()));
        nodes
    }

    /// Number of graph nodes (including `self`) that a backward pass from
    /// here would visit.
    pub fn graph_size(&self) -> usize {
        self.reverse_topological_order().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scale(x: &Var, k: f64) -> Var {
        let value = x.value().map(|v| v * k);
        Var::from_op(
            value,
            vec![x.clone()],
            Box::new(move |g, _| vec![Some(g.map(|v| v * k))]),
        )
    }

    #[test]
    fn gradients_sum_over_consumers() {
        let x = Var::parameter(Tensor::from_vec(vec![1.0, 2.0]));
        let a = scale(&x, 2.0);
        let b = scale(&x, 3.0);
        let c = scale(&a, 1.0);
        // two paths: x -> a -> c and x -> b
        let sum = Var::from_op(
            Tensor::from_vec(vec![0.0, 0.0]),
            vec![c, b],
            Box::new(|g, _| vec![Some(g.clone()), Some(g.clone())]),
        );
        sum.backward_with(Tensor::from_vec(vec![1.0, 1.0])).unwrap();
        assert_eq!(x.grad().unwrap().data(), &[5.0, 5.0]);
    }

    #[test]
    fn each_node_visited_once() {
        use std::cell::Cell;
        let calls = Rc::new(Cell::new(0));
        let x = Var::parameter(Tensor::scalar(1.0));
        let counter = calls.clone();
        let shared = Var::from_op(
            Tensor::scalar(1.0),
            vec![x.clone()],
            Box::new(move |g, _| {
                counter.set(counter.get() + 1);
                vec![Some(g.clone())]
            }),
        );
        let out = Var::from_op(
            Tensor::scalar(2.0),
            vec![shared.clone(), shared.clone()],
            Box::new(|g, _| vec![Some(g.clone()), Some(g.clone())]),
        );
        out.backward().unwrap();
        assert_eq!(calls.get(), 1);
        assert_eq!(x.grad().unwrap().data(), &[2.0]);
    }

    #[test]
    fn constants_record_no_graph() {
        let x = Var::constant(Tensor::scalar(1.0));
        let y = scale(&x, 2.0);
        assert!(!y.requires_grad());
        assert!(y.is_leaf());
    }

    #[test]
    fn backward_needs_scalar() {
        let x = Var::parameter(Tensor::from_vec(vec![1.0, 2.0]));
        let y = scale(&x, 1.0);
        assert!(matches!(y.backward(), Err(TensorError::NonScalarBackward(_))));
    }

    #[test]
    fn leaf_gradients_accumulate_across_passes() {
        let x = Var::parameter(Tensor::scalar(1.0));
        scale(&x, 2.0).backward().unwrap();
        scale(&x, 2.0).backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[4.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }
}
