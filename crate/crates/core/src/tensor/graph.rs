use std::cell::RefCell;
use std::sync::Arc;

use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Position of a node in its graph. Nodes are numbered in execution order.
pub type NodeId = usize;

/// Reverse-mode rule of a recorded operation.
pub trait Backward<T: Element> {
    fn name(&self) -> &'static str;

    /// Returns the gradient contribution for each input, in recording
    /// order. Entries may be `None` where `needs[i]` is false.
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad: &[T],
        needs: &[bool],
    ) -> Vec<Option<Vec<T>>>;
}

struct Node<T: Element> {
    value: Arc<Tensor<T>>,
    inputs: Vec<NodeId>,
    op: Option<Box<dyn Backward<T> + Send>>,
    requires_grad: bool,
    label: Option<String>,
}

/// Tape of executed operations.
///
/// Every value produced through a [`Var`] is appended in execution order,
/// so walking the node list backwards is a valid reverse topological order.
pub struct Graph<T: Element> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a value recorded on a [`Graph`].
pub struct Var<'g, T: Element> {
    graph: &'g Graph<T>,
    id: NodeId,
}

impl<T: Element> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Element> Copy for Var<'_, T> {}

impl<T: Element> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{} {:?})", self.id, self.shape())
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    fn push(&self, node: Node<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Differentiable input.
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf_shared(Arc::new(value), None)
    }

    /// Differentiable input sharing storage with the caller, with an
    /// optional label used in error messages.
    pub fn leaf_shared(&self, value: Arc<Tensor<T>>, label: Option<String>) -> Var<'_, T> {
        self.push(Node {
            value,
            inputs: Vec::new(),
            op: None,
            requires_grad: true,
            label,
        })
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.constant_shared(Arc::new(value))
    }

    pub fn constant_shared(&self, value: Arc<Tensor<T>>) -> Var<'_, T> {
        self.push(Node {
            value,
            inputs: Vec::new(),
            op: None,
            requires_grad: false,
            label: None,
        })
    }

    /// Records the result of an operation. The backward rule is only kept
    /// when at least one input requires a gradient.
    pub fn record<B>(&self, value: Tensor<T>, inputs: &[Var<'_, T>], op: B) -> Var<'_, T>
    where
        B: Backward<T> + Send + 'static,
    {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| {
                debug_assert!(std::ptr::eq(v.graph, self), "vars from another graph");
                nodes[v.id].requires_grad
            })
        };
        self.push(Node {
            value: Arc::new(value),
            inputs: inputs.iter().map(|v| v.id).collect(),
            op: requires_grad.then(|| Box::new(op) as Box<dyn Backward<T> + Send>),
            requires_grad,
            label: None,
        })
    }

    pub fn value(&self, id: NodeId) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes.borrow()[id].value)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Name of the operation that produced each node (`"leaf"`/`"constant"` for inputs).
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes
            .borrow()
            .iter()
            .map(|n| match (&n.op, n.inputs.is_empty(), n.requires_grad) {
                (Some(op), _, _) => op.name(),
                (None, true, true) => "leaf",
                _ => "constant",
            })
            .collect()
    }

    /// Propagates `d loss / d node` to every differentiable leaf reachable from `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
        }
        if !root.value.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }

        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.id + 1);
        grads.resize_with(loss.id + 1, || None);
        let mut visit_order = Vec::new();
        if root.requires_grad {
            grads[loss.id] = Some(vec![T::one()]);
        }

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(op) = &node.op else { continue };
            let Some(grad) = grads[id].take() else { continue };
            visit_order.push(id);

            let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|&i| nodes[i].value.as_ref()).collect();
            let needs: Vec<bool> = node.inputs.iter().map(|&i| nodes[i].requires_grad).collect();
            let contributions = op.backward(&inputs, &node.value, &grad, &needs);
            debug_assert_eq!(contributions.len(), node.inputs.len(), "{}", op.name());

            for ((&input, contribution), need) in node.inputs.iter().zip(contributions).zip(needs) {
                let (Some(g), true) = (contribution, need) else { continue };
                debug_assert_eq!(g.len(), nodes[input].value.len(), "{} grad length", op.name());
                match &mut grads[input] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a = *a + *b),
                    slot @ None => *slot = Some(g),
                }
            }
        }

        let mut leaves = Vec::new();
        for (id, slot) in grads.into_iter().enumerate() {
            let node = &nodes[id];
            if node.op.is_some() || !node.requires_grad {
                continue;
            }
            if let Some(g) = slot {
                if g.iter().any(|v| !v.is_finite()) {
                    let what = node.label.clone().unwrap_or_else(|| format!("node #{id}"));
                    return Err(Error::NonFinite(format!("gradient of {what}")));
                }
                leaves.push((id, Tensor::new(node.value.shape().to_vec(), g)?));
            }
        }
        Ok(Gradients { leaves, visit_order })
    }
}

impl<'g, T: Element> Var<'g, T> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn value(&self) -> Arc<Tensor<T>> {
        self.graph.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    /// Value of a one-element var.
    pub fn item(&self) -> Result<T> {
        self.value().item()
    }

    /// Same value, cut off from gradient flow.
    pub fn detach(&self) -> Var<'g, T> {
        self.graph.constant_shared(self.value())
    }
}

/// Leaf gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T: Element> {
    leaves: Vec<(NodeId, Tensor<T>)>,
    visit_order: Vec<NodeId>,
}

impl<T: Element> Gradients<T> {
    /// Gradient of a leaf; `None` if the loss does not depend on it.
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.get_id(var.id)
    }

    pub fn get_id(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.leaves
            .binary_search_by_key(&id, |(i, _)| *i)
            .ok()
            .map(|i| &self.leaves[i].1)
    }

    /// `(leaf id, gradient)` pairs in ascending id order.
    pub fn into_leaves(self) -> Vec<(NodeId, Tensor<T>)> {
        self.leaves
    }

    /// Nodes whose backward rule ran, in the order they ran.
    pub fn visit_order(&self) -> &[NodeId] {
        &self.visit_order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new([2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
        let loss = x.sum();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn product_rule() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.leaf(Tensor::scalar(4.0));
        let loss = x.mul(y).unwrap();
        assert_eq!(loss.item().unwrap(), 12.0);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[4.0]);
        assert_eq!(grads.get(y).unwrap().data(), &[3.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let g = Graph::<f32>::new();
        let x = g.leaf(Tensor::zeros([2]));
        assert!(matches!(g.backward(x.relu()), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn shared_input_accumulates_both_branches() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new([3], vec![1.0, 2.0, -1.0]).unwrap());
        // loss = sum(3x) + sum(x^2)  =>  d/dx = 3 + 2x
        let a = x.scale(3.0).sum();
        let b = x.square().sum();
        let loss = a.add(b).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[5.0, 7.0, 1.0]);
    }

    #[test]
    fn visit_order_is_reverse_of_recording() {
        let g = Graph::<f32>::new();
        let x = g.leaf(Tensor::full([4], 0.5));
        let y = x.relu().tanh().scale(2.0).sum();
        let grads = g.backward(y).unwrap();
        let order = grads.visit_order().to_vec();
        let mut sorted = order.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(order, sorted);
        assert_eq!(order.len(), 4);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let g = Graph::<f32>::new();
        let c = g.constant(Tensor::full([2], 1.0));
        let x = g.leaf(Tensor::full([2], 2.0));
        let loss = c.mul(x).unwrap().sum();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0]);
        assert_eq!(g.op_names()[0], "constant");
    }

    #[test]
    fn non_finite_gradient_names_the_leaf() {
        let g = Graph::<f64>::new();
        // finite loss (w * MAX * 10 with tiny w) but d loss / d w = 10 * MAX overflows
        let w = g.leaf_shared(Arc::new(Tensor::scalar(1e-300)), Some("w".into()));
        let big = g.constant(Tensor::scalar(f64::MAX));
        let loss = w.mul(big).unwrap().scale(10.0);
        assert!(loss.item().unwrap().is_finite());
        let err = g.backward(loss).unwrap_err();
        assert!(err.to_string().contains("gradient of w"), "{err}");
    }
}
