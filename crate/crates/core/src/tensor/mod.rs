//! Reverse-mode automatic differentiation over dense f64 tensors.
//!
//! A [`Tensor`] is a cheap handle onto a graph node holding a flat value
//! buffer, an optional gradient buffer and the operation that produced it.
//! Forward ops build the graph; [`Tensor::backward`] walks it in reverse
//! topological order and accumulates gradients into every tensor that
//! requires them. Gradients accumulate across calls — callers zero them
//! between optimizer steps.

mod gradcheck;
mod ops;

pub use gradcheck::{grad_check, grad_check_at, grad_check_sampled, GradCheckResult};
pub use ops::{concat, cross_entropy_loss, embedding_lookup, Activation};

use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use ops::Op;
use thiserror::Error;

/// Errors raised by tensor construction and forward/backward ops.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape {shape:?} implies {expected} elements, got {got}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected a rank-{expected} tensor, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("conv1d: input has {time} timesteps, shorter than kernel width {width}")]
    InputShorterThanKernel { time: usize, width: usize },
    #[error("conv1d: stride must be positive")]
    ZeroStride,
    #[error("max_pool1d: window {window} exceeds input length {time}")]
    WindowTooLarge { window: usize, time: usize },
    #[error("max_pool1d: window must be positive")]
    ZeroWindow,
    #[error("global_avg_pool: empty time axis")]
    EmptyTimeAxis,
    #[error("concat: no inputs")]
    EmptyConcat,
    #[error("concat: input {index} has shape {shape:?}, incompatible with {expected:?} along axis {axis}")]
    ConcatMismatch {
        index: usize,
        shape: Vec<usize>,
        expected: Vec<usize>,
        axis: usize,
    },
    #[error("{op}: invalid axis {axis} for shape {shape:?}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("embedding_lookup: id {id} at position {position} out of range for vocab size {vocab}")]
    IdOutOfRange {
        id: u32,
        position: usize,
        vocab: usize,
    },
    #[error("dropout: rate {rate} outside [0, 1)")]
    InvalidDropoutRate { rate: f64 },
    #[error("cross_entropy_loss: label {label} at row {row} out of range for {classes} classes")]
    LabelOutOfRange {
        label: usize,
        row: usize,
        classes: usize,
    },
    #[error("cross_entropy_loss: got {labels} labels for a batch of {rows} rows")]
    LabelCountMismatch { labels: usize, rows: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("softmax requires a nonempty last dimension, got shape {shape:?}")]
    EmptySoftmaxDim { shape: Vec<usize> },
    #[error("{op}: slice {start}..{end} out of bounds for size {size}")]
    SliceOutOfBounds {
        op: &'static str,
        start: usize,
        end: usize,
        size: usize,
    },
    #[error("mean: empty tensor")]
    EmptyMean,
}

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

pub(crate) struct Node {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Option<Op>,
}

/// Handle onto an autodiff graph node. Clones share the node.
#[derive(Clone)]
pub struct Tensor {
    node: Rc<RefCell<Node>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.node.borrow();
        f.debug_struct("Tensor")
            .field("id", &n.id)
            .field("shape", &n.shape)
            .field("requires_grad", &n.requires_grad)
            .finish()
    }
}

fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn new_node(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: Option<Op>) -> Tensor {
        Tensor {
            node: Rc::new(RefCell::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                grad: None,
                requires_grad,
                op,
            })),
        }
    }

    pub(crate) fn from_op(data: Vec<f64>, shape: Vec<usize>, op: Op) -> Tensor {
        let requires_grad = op.parents().iter().any(|p| p.requires_grad());
        Tensor::new_node(data, shape, requires_grad, Some(op))
    }

    /// Constant leaf tensor (no gradient tracking).
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Tensor, TensorError> {
        let expected = numel_of(shape);
        if data.len() != expected {
            return Err(TensorError::DataLength {
                shape: shape.to_vec(),
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor::new_node(data, shape.to_vec(), false, None))
    }

    /// Trainable leaf tensor.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Tensor, TensorError> {
        let t = Tensor::from_vec(data, shape)?;
        t.node.borrow_mut().requires_grad = true;
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::new_node(vec![0.0; numel_of(shape)], shape.to_vec(), false, None)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::new_node(vec![v], vec![1], false, None)
    }

    pub fn id(&self) -> u64 {
        self.node.borrow().id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.node.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.node.borrow().data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.borrow().requires_grad
    }

    /// Copy of the value buffer.
    pub fn value(&self) -> Vec<f64> {
        self.node.borrow().data.clone()
    }

    /// Value of a single-element tensor.
    ///
    /// Panics on non-scalar tensors; misuse is a programming error.
    pub fn item(&self) -> f64 {
        let n = self.node.borrow();
        assert_eq!(n.data.len(), 1, "item() on tensor of shape {:?}", n.shape);
        n.data[0]
    }

    /// Copy of the gradient buffer, if one has been accumulated.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.node.borrow().grad.clone()
    }

    /// Clears the accumulated gradient.
    pub fn zero_grad(&self) {
        self.node.borrow_mut().grad = None;
    }

    /// Replaces the value buffer; the shape must match.
    pub fn set_data(&self, data: Vec<f64>) -> Result<(), TensorError> {
        let mut n = self.node.borrow_mut();
        if data.len() != n.data.len() {
            return Err(TensorError::DataLength {
                shape: n.shape.clone(),
                expected: n.data.len(),
                got: data.len(),
            });
        }
        n.data = data;
        Ok(())
    }

    /// In-place mutation hook for optimizers and finite differences.
    pub fn update_data(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.node.borrow_mut().data);
    }

    /// Adds `delta` to a single element.
    pub fn nudge(&self, index: usize, delta: f64) {
        self.node.borrow_mut().data[index] += delta;
    }

    pub(crate) fn with_data<R>(&self, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.node.borrow().data)
    }

    /// Accumulates gradients of this scalar with respect to every tensor in
    /// its graph that has `requires_grad` set.
    ///
    /// Each call adds one full gradient contribution per tensor, so calling
    /// twice without zeroing doubles every gradient exactly.
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: self.shape(),
            });
        }
        let order = topo_order(self);
        let mut buffers: HashMap<u64, Vec<f64>> = HashMap::new();
        buffers.insert(self.id(), vec![1.0]);

        // Reverse topological order: every node's buffer is complete before
        // its op distributes to the parents.
        for tensor in order.iter().rev() {
            let n = tensor.node.borrow();
            if !n.requires_grad {
                continue;
            }
            let Some(out_grad) = buffers.get(&n.id).cloned() else {
                continue;
            };
            if let Some(op) = &n.op {
                op.distribute(&n.data, &out_grad, &mut buffers);
            }
        }

        for tensor in &order {
            let mut n = tensor.node.borrow_mut();
            if !n.requires_grad {
                continue;
            }
            if let Some(buf) = buffers.get(&n.id) {
                let len = n.data.len();
                let grad = n.grad.get_or_insert_with(|| vec![0.0; len]);
                for (g, b) in grad.iter_mut().zip(buf.iter()) {
                    *g += b;
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn accumulate(buffers: &mut HashMap<u64, Vec<f64>>, target: &Tensor, delta: &[f64]) {
    if !target.requires_grad() {
        return;
    }
    let buf = buffers
        .entry(target.id())
        .or_insert_with(|| vec![0.0; delta.len()]);
    for (b, d) in buf.iter_mut().zip(delta.iter()) {
        *b += d;
    }
}

/// Post-order DFS over the graph reachable from `root`, deduplicated by id.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    // (tensor, children_pushed)
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        let id = t.id();
        if expanded {
            order.push(t);
            continue;
        }
        if !seen.insert(id) {
            continue;
        }
        let parents = {
            let n = t.node.borrow();
            n.op.as_ref().map(|op| op.parents()).unwrap_or_default()
        };
        stack.push((t, true));
        for p in parents {
            if !seen.contains(&p.id()) {
                stack.push((p, false));
            }
        }
    }
    order
}

thread_local! {
    // Minimum distance to a relu/max-pool kink seen since the last reset.
    // Gradient tests use this to reject draws where finite differences
    // straddle a non-differentiable point.
    static KINK_MARGIN: Cell<f64> = const { Cell::new(f64::INFINITY) };
}

/// Resets the per-thread kink-margin tracker.
pub fn reset_kink_margin() {
    KINK_MARGIN.with(|m| m.set(f64::INFINITY));
}

/// Smallest |pre-activation| at a relu, or max-vs-runner-up gap in a pool
/// window, observed on this thread since the last reset.
pub fn kink_margin() -> f64 {
    KINK_MARGIN.with(|m| m.get())
}

pub(crate) fn note_kink_margin(margin: f64) {
    KINK_MARGIN.with(|m| {
        if margin < m.get() {
            m.set(margin);
        }
    });
}
