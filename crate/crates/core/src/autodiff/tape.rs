use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::error::{invalid, Result};
use crate::imagebuf::Grid;

/// Denominators smaller than this in magnitude are replaced by `±DIV_GUARD`.
pub const DIV_GUARD: f64 = 1e-12;

pub(crate) type BackwardFn = Box<dyn Fn(&Grid) -> Vec<Grid>>;

struct Node {
    value: Rc<Grid>,
    requires_grad: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
}

/// Recording of a computation. Single-threaded; build one per evaluation.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    fingerprint: Cell<u64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), fingerprint: Cell::new(0xcbf2_9ce4_8422_2325) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Grid) -> Var<'_> {
        self.push_node(Rc::new(value), true, Vec::new(), None)
    }

    /// A constant input; it never receives a gradient.
    pub fn constant(&self, value: Grid) -> Var<'_> {
        self.push_node(Rc::new(value), false, Vec::new(), None)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Grid::scalar(value))
    }

    fn push_node(
        &self,
        value: Rc<Grid>,
        requires_grad: bool,
        parents: Vec<usize>,
        backward: Option<BackwardFn>,
    ) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, requires_grad, parents, backward });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// Records an operation. `backward` maps the output gradient to one
    /// gradient per parent (same shapes as the parents' values). It is
    /// dropped when no parent requires a gradient.
    pub fn op<'t>(
        &'t self,
        value: Grid,
        parents: &[Var<'t>],
        backward: impl Fn(&Grid) -> Vec<Grid> + 'static,
    ) -> Var<'t> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.id].requires_grad)
        };
        let bw: Option<BackwardFn> = if requires_grad { Some(Box::new(backward)) } else { None };
        self.push_node(Rc::new(value), requires_grad, parents.iter().map(|p| p.id).collect(), bw)
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Grid> {
        self.nodes.borrow()[id].value.clone()
    }

    pub(crate) fn requires_grad_of(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Folds a discrete decision into the tape fingerprint.
    pub fn note(&self, x: u64) {
        let h = (self.fingerprint.get() ^ x).wrapping_mul(0x0000_0100_0000_01b3);
        self.fingerprint.set(h.rotate_left(17));
    }

    /// Hash of every discrete choice recorded so far. Two evaluations with
    /// equal fingerprints took the same branch everywhere.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint.get()
    }

    /// Gradients of a scalar `loss` with respect to every differentiable leaf.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.len() != 1 {
            return Err(invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Grid>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Grid::scalar(1.0));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(bw) = node.backward.as_ref() else { continue };
            let Some(g) = grads[id].take() else { continue };
            let parent_grads = bw(&g);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&pid, pg) in node.parents.iter().zip(parent_grads) {
                if !nodes[pid].requires_grad {
                    continue;
                }
                match &mut grads[pid] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(pg.data()) {
                            *a += b;
                        }
                    }
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        // Interior gradients were consumed above; what is left belongs to leaves.
        let shapes = nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Grid>>,
    shapes: Vec<(usize, usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` is unreachable from the loss.
    pub fn wrt(&self, v: Var<'_>) -> Grid {
        match self.grads.get(v.id).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => {
                let (h, w, c) = self.shapes[v.id];
                Grid::zeros(h, w, c)
            }
        }
    }

    pub fn is_reachable(&self, v: Var<'_>) -> bool {
        matches!(self.grads.get(v.id), Some(Some(_)))
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Grid> {
        self.tape.value_of(self.id)
    }

    /// Value of a scalar node.
    pub fn item(&self) -> f64 {
        self.value().as_scalar()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.value().shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad_of(self.id)
    }

    /// Same value, but gradients stop here.
    pub fn stop_gradient(self) -> Var<'t> {
        let v = (*self.value()).clone();
        self.tape.constant(v)
    }
}
