use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::{AutodiffError, Tensor};

/// What a backward rule sees: the upstream gradient, the forward inputs and
/// output, and which inputs need a gradient at all.
pub struct BackwardArgs<'a> {
    pub grad: &'a Tensor,
    pub inputs: &'a [Rc<Tensor>],
    pub output: &'a Tensor,
    pub needs: &'a [bool],
}

pub(crate) type Backward = Box<dyn Fn(&BackwardArgs) -> Vec<Option<Tensor>>>;

/// A differentiable operation defined outside this crate. `backward` returns
/// one gradient per input, each shaped like that input; entries for inputs
/// with `needs[i] == false` may be `None`.
pub trait CustomOp {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor, AutodiffError>;
    fn backward(&self, args: &BackwardArgs) -> Vec<Option<Tensor>>;
}

struct Node {
    value: Rc<Tensor>,
    parents: Vec<usize>,
    backward: Option<Backward>,
    requires_grad: bool,
}

/// Records one forward pass. Single-threaded; use one tape per thread.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({} nodes)", self.len())
    }
}

/// Handle to a node of a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// An input. Gradients are accumulated for it only when `requires_grad`.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push_node(Node {
            value: Rc::new(value),
            parents: vec![],
            backward: None,
            requires_grad,
        })
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    fn push_node(&self, node: Node) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn push(&self, value: Tensor, parents: &[Var<'_>], backward: Backward) -> Var<'_> {
        let ids: Vec<usize> = parents.iter().map(|p| p.id).collect();
        let requires_grad = {
            let nodes = self.nodes.borrow();
            ids.iter().any(|&i| nodes[i].requires_grad)
        };
        self.push_node(Node {
            value: Rc::new(value),
            parents: ids,
            backward: requires_grad.then_some(backward),
            requires_grad,
        })
    }

    pub fn value(&self, v: Var<'_>) -> Rc<Tensor> {
        self.nodes.borrow()[v.id].value.clone()
    }

    /// Applies a [`CustomOp`] to `inputs`.
    pub fn custom<'t>(&'t self, op: Rc<dyn CustomOp>, inputs: &[Var<'t>]) -> Result<Var<'t>, AutodiffError> {
        let values: Vec<Rc<Tensor>> = inputs.iter().map(|v| v.value()).collect();
        let refs: Vec<&Tensor> = values.iter().map(|v| v.as_ref()).collect();
        let out = op.forward(&refs)?;
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        let backward = move |args: &BackwardArgs| {
            let grads = op.backward(args);
            debug_assert!(grads
                .iter()
                .zip(&shapes)
                .all(|(g, s)| g.as_ref().is_none_or(|g| g.shape() == s.as_slice())));
            grads
        };
        Ok(self.push(out, inputs, Box::new(backward)))
    }

    /// Gradient of the scalar `loss` with respect to every node that requires one.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, AutodiffError> {
        let nodes = self.nodes.borrow();
        let shape = nodes[loss.id].value.shape().to_vec();
        if nodes[loss.id].value.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Tensor::ones(&shape));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let (Some(backward), Some(grad)) = (&node.backward, grads[id].as_ref()) else {
                continue;
            };
            let inputs: Vec<Rc<Tensor>> = node.parents.iter().map(|&p| nodes[p].value.clone()).collect();
            let needs: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
            let parent_grads = backward(&BackwardArgs {
                grad,
                inputs: &inputs,
                output: &node.value,
                needs: &needs,
            });
            // Intermediate gradients are no longer needed once propagated.
            if !node.parents.is_empty() {
                grads[id] = None;
            }
            for ((&p, g), need) in node.parents.iter().zip(parent_grads).zip(needs) {
                let Some(g) = g.filter(|_| need) else { continue };
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(*self)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }
}

/// Gradients of one backward pass, indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a leaf; `None` if the loss does not depend on it.
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient for a leaf, zeros if the loss does not depend on it.
    pub fn get_or_zeros(&self, v: Var<'_>) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(&v.shape()))
    }
}
