//! Reverse-mode gradient tape.
//!
//! Operations append nodes to a shared tape; each node stores its forward
//! value and, per differentiable parent, a closure mapping the upstream
//! gradient to that parent's contribution. [`Value::backward`] seeds the
//! (scalar) output with 1 and walks the tape in reverse, accumulating into
//! each reachable node.
//!
//! Nodes know whether anything differentiable feeds them; constants and
//! subgraphs built purely from constants carry no closures and cost nothing
//! at backward time. [`Value::detach`] re-enters a value as a constant leaf,
//! which is how stop-gradient boundaries (frozen discriminators, real-branch
//! encoder outputs) are expressed.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use super::Tensor;
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};

pub(crate) type GradFn = Box<dyn Fn(&Tensor) -> Tensor>;

pub(crate) struct Parent {
    pub id: usize,
    pub grad: GradFn,
}

struct Node {
    value: Tensor,
    parents: Vec<Parent>,
    needs_grad: bool,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, usize>,
}

/// Recording context for one forward/backward pass.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone)]
pub struct Value {
    tape: Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a constant: no gradient flows to or through it.
    pub fn input(&self, t: Tensor) -> Value {
        self.push_node(t, Vec::new(), false)
    }

    /// Records a differentiable leaf. Its gradient is retrievable from the
    /// backward result via [`Gradients::wrt`].
    pub fn var(&self, t: Tensor) -> Value {
        self.push_node(t, Vec::new(), true)
    }

    /// Records a parameter leaf bound to `id`. Repeated calls for the same
    /// parameter return the same node, so shared use accumulates gradient.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Value {
        if let Some(&node) = self.inner.borrow().param_nodes.get(&id) {
            return Value {
                tape: self.clone(),
                id: node,
            };
        }
        let v = self.push_node(store.get(id).clone(), Vec::new(), true);
        self.inner.borrow_mut().param_nodes.insert(id, v.id);
        v
    }

    pub(crate) fn push_node(&self, value: Tensor, parents: Vec<Parent>, leaf: bool) -> Value {
        let mut inner = self.inner.borrow_mut();
        let needs_grad = leaf || parents.iter().any(|p| inner.nodes[p.id].needs_grad);
        // Parents that cannot receive gradient keep the graph edge but would
        // only waste work in backward; drop them.
        let parents = parents
            .into_iter()
            .filter(|p| inner.nodes[p.id].needs_grad)
            .collect();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            value,
            parents,
            needs_grad,
        });
        Value {
            tape: self.clone(),
            id,
        }
    }

    pub(crate) fn value_of(&self, id: usize) -> Tensor {
        self.inner.borrow().nodes[id].value.clone()
    }

    pub(crate) fn needs_grad(&self, id: usize) -> bool {
        self.inner.borrow().nodes[id].needs_grad
    }
}

impl Value {
    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub(crate) fn id(&self) -> usize {
        self.id
    }

    /// Forward value (cheap: storage is shared).
    pub fn tensor(&self) -> Tensor {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tensor().shape().to_vec()
    }

    /// Scalar forward value.
    pub fn item(&self) -> f64 {
        self.tensor().item()
    }

    /// True when some differentiable leaf feeds this value.
    pub fn needs_grad(&self) -> bool {
        self.tape.needs_grad(self.id)
    }

    /// Same forward value re-entered as a constant: gradient stops here.
    pub fn detach(&self) -> Value {
        self.tape.input(self.tensor())
    }

    /// Runs reverse accumulation from this scalar.
    pub fn backward(&self) -> Result<Gradients> {
        let inner = self.tape.inner.borrow();
        let out = &inner.nodes[self.id].value;
        if out.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("output must be scalar, got shape {:?}", out.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..inner.nodes.len()).map(|_| None).collect();
        grads[self.id] = Some(Tensor::scalar(1.0));
        for id in (0..=self.id).rev() {
            let Some(g) = grads[id].clone() else {
                continue;
            };
            for p in &inner.nodes[id].parents {
                let contrib = (p.grad)(&g);
                debug_assert_eq!(
                    contrib.shape(),
                    inner.nodes[p.id].value.shape(),
                    "gradient shape mismatch into node {}",
                    p.id
                );
                grads[p.id] = Some(match grads[p.id].take() {
                    None => contrib,
                    Some(acc) => acc.add_tensor(&contrib)?,
                });
            }
        }
        Ok(Gradients {
            grads,
            param_nodes: inner.param_nodes.clone(),
        })
    }
}

/// Gradients of one backward pass, addressable by leaf handle or parameter.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    param_nodes: HashMap<ParamId, usize>,
}

impl Gradients {
    /// Gradient with respect to any recorded value, `None` if the value does
    /// not influence the output (or was recorded as a constant).
    pub fn wrt(&self, v: &Value) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.param_nodes
            .get(&id)
            .and_then(|&n| self.grads[n].as_ref())
    }

    /// Parameter gradient, densified to zeros when the parameter is absent
    /// from the graph.
    pub fn param_or_zeros(&self, id: ParamId, shape: &[usize]) -> Tensor {
        match self.param(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape),
        }
    }
}
