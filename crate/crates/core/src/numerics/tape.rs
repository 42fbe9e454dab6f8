//! Reverse-mode differentiation over a linear operation record.
//!
//! A [`Tape`] owns every intermediate value produced during a forward pass.
//! Values are addressed by [`Var`] handles; nodes are appended in execution
//! order, so reverse index order is a valid reverse topological order.
//! Trainable tensors are bound by reference with [`Tape::param`] and their
//! gradients come back in a [`Gradients`] table that callers fold into the
//! tensors' own accumulators.

use std::cell::{Ref, RefCell};

use crate::error::{Error, Result};

use super::{Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) type BackwardFn<'a, T> = Box<dyn Fn(&[T], &Values<'_, 'a, T>, &mut Grads<T>) + 'a>;

enum Value<'a, T> {
    Borrowed(&'a Tensor<T>),
    Owned(Tensor<T>),
}

impl<T> Value<'_, T> {
    fn get(&self) -> &Tensor<T> {
        match self {
            Value::Borrowed(t) => t,
            Value::Owned(t) => t,
        }
    }
}

struct Node<'a, T> {
    value: Value<'a, T>,
    requires_grad: bool,
    backward: Option<BackwardFn<'a, T>>,
}

/// Read access to recorded values from inside a backward function.
pub(crate) struct Values<'n, 'a, T>(&'n [Node<'a, T>]);

impl<T> Values<'_, '_, T> {
    pub(crate) fn get(&self, v: Var) -> &Tensor<T> {
        self.0[v.0].value.get()
    }
}

/// Gradient slots during a backward sweep. Slots are allocated lazily and
/// only for nodes that require a gradient.
pub(crate) struct Grads<T> {
    slots: Vec<Option<Vec<T>>>,
    sizes: Vec<usize>,
    requires: Vec<bool>,
}

impl<T: Scalar> Grads<T> {
    pub(crate) fn requires(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    /// Mutable gradient buffer of `v`, or `None` if `v` is not differentiable.
    pub(crate) fn slot(&mut self, v: Var) -> Option<&mut [T]> {
        if !self.requires[v.0] {
            return None;
        }
        let n = self.sizes[v.0];
        Some(self.slots[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    pub(crate) fn add(&mut self, v: Var, g: &[T]) {
        if let Some(s) = self.slot(v) {
            for (a, b) in s.iter_mut().zip(g) {
                *a += *b;
            }
        }
    }
}

/// Gradients of a scalar with respect to the tape's leaves.
#[derive(Debug, Clone)]
pub struct Gradients<T = f32> {
    slots: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.slots.get(v.0).and_then(|s| s.as_deref())
    }

    /// Adds the gradient of `v` (if any) into `tensor`'s accumulator.
    pub fn accumulate_into(&self, v: Var, tensor: &mut Tensor<T>) -> Result<()> {
        match self.get(v) {
            Some(g) => tensor.accumulate_grad(g),
            None => Ok(()),
        }
    }
}

/// Operation record for one forward/backward pass.
pub struct Tape<'a, T: Scalar = f32> {
    nodes: RefCell<Vec<Node<'a, T>>>,
    grad_enabled: bool,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), grad_enabled: true }
    }

    /// A tape that records values only; every node is a constant.
    pub fn no_grad() -> Self {
        Self { nodes: RefCell::new(Vec::new()), grad_enabled: false }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Binds a tensor by reference; it is differentiable if it was marked
    /// with `requires_grad` and the tape records gradients.
    pub fn param(&self, t: &'a Tensor<T>) -> Var {
        let rg = self.grad_enabled && t.requires_grad();
        self.push_node(Value::Borrowed(t), rg, None)
    }

    /// An owned leaf that never receives a gradient.
    pub fn constant(&self, t: Tensor<T>) -> Var {
        self.push_node(Value::Owned(t), false, None)
    }

    /// An owned differentiable leaf.
    pub fn variable(&self, t: Tensor<T>) -> Var {
        let rg = self.grad_enabled;
        self.push_node(Value::Owned(t), rg, None)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| n[v.0].value.get())
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.value(v).shape().to_vec()
    }

    /// Copies a recorded value out of the tape.
    pub fn detach(&self, v: Var) -> Tensor<T> {
        let t = self.value(v);
        let mut out = Tensor::new(t.shape().to_vec(), t.data().to_vec()).expect("consistent shape");
        out.set_requires_grad(false);
        out
    }

    /// Scalar value of a one-element node.
    pub fn item(&self, v: Var) -> T {
        self.value(v).data()[0]
    }

    fn push_node(&self, value: Value<'a, T>, requires_grad: bool, backward: Option<BackwardFn<'a, T>>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, requires_grad, backward });
        Var(nodes.len() - 1)
    }

    /// Records the result of an operation. The backward function is kept
    /// only when some parent is differentiable.
    pub(crate) fn push_op<F>(&self, value: Tensor<T>, parents: &[Var], backward: F) -> Var
    where
        F: Fn(&[T], &Values<'_, 'a, T>, &mut Grads<T>) + 'a,
    {
        let rg = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.0].requires_grad)
        };
        let bw: Option<BackwardFn<'a, T>> = if rg { Some(Box::new(backward)) } else { None };
        self.push_node(Value::Owned(value), rg, bw)
    }

    /// Back-propagates from a one-element `loss`.
    ///
    /// Returns the gradients of every differentiable leaf reachable from
    /// `loss`. Calling it twice yields the same table twice; accumulating
    /// both into the parameters doubles their gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let n_loss = nodes[loss.0].value.get().numel();
        if n_loss != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got {n_loss} elements"
            )));
        }
        let mut grads = Grads {
            slots: (0..nodes.len()).map(|_| None).collect(),
            sizes: nodes.iter().map(|n| n.value.get().numel()).collect(),
            requires: nodes.iter().map(|n| n.requires_grad).collect(),
        };
        if !nodes[loss.0].requires_grad {
            return Ok(Gradients { slots: grads.slots });
        }
        grads.slots[loss.0] = Some(vec![T::one()]);
        let values = Values(&nodes[..]);
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            let Some(bw) = node.backward.as_ref() else { continue };
            if let Some(g) = grads.slots[i].take() {
                bw(&g, &values, &mut grads);
            }
        }
        Ok(Gradients { slots: grads.slots })
    }
}
