use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use crate::element::Element;
use crate::error::{shape_err, Result, TensorError};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Whether operations on this thread currently record a backward graph.
pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Disables graph recording on the current thread until dropped.
pub struct NoGradGuard {
    prev: bool,
}

impl NoGradGuard {
    pub fn new() -> Self {
        let prev = GRAD_ENABLED.with(|g| g.replace(false));
        NoGradGuard { prev }
    }
}

impl Default for NoGradGuard {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.prev));
    }
}

/// Runs `f` with graph recording disabled.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let _guard = NoGradGuard::new();
    f()
}

/// Vector-Jacobian product of one recorded operation.
///
/// Receives the gradient of the operation's output and, per parent, whether
/// that parent wants a gradient. Returns one entry per parent.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>> + Send + Sync>;

struct GradFn<T: Element> {
    op: &'static str,
    parents: Vec<Tensor<T>>,
    backward: BackwardFn<T>,
}

struct Node<T: Element> {
    id: u64,
    shape: Vec<usize>,
    data: RwLock<Arc<Vec<T>>>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<T>>>,
    grad_fn: Option<GradFn<T>>,
}

/// N-dimensional row-major array that participates in reverse-mode
/// differentiation.
///
/// Cloning is cheap and yields a handle to the same node. Element buffers
/// are shared copy-on-write, so reshapes and target-network syncs do not
/// copy, and an optimizer update never alters a buffer still referenced by
/// another tensor.
pub struct Tensor<T: Element = f32> {
    node: Arc<Node<T>>,
}

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor { node: Arc::clone(&self.node) }
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.node.shape).field("requires_grad", &self.node.requires_grad);
        if let Some(g) = &self.node.grad_fn {
            s.field("op", &g.op);
        }
        if self.numel() <= 16 {
            s.field("data", &self.to_vec());
        }
        s.finish()
    }
}

fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Element> Tensor<T> {
    fn new_node(data: Arc<Vec<T>>, shape: Vec<usize>, requires_grad: bool, grad_fn: Option<GradFn<T>>) -> Self {
        debug_assert_eq!(numel_of(&shape), data.len());
        Tensor {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RwLock::new(data),
                requires_grad,
                grad: Mutex::new(None),
                grad_fn,
            }),
        }
    }

    /// Constant tensor (no gradient).
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        if numel_of(shape) != data.len() {
            return shape_err(
                "from_vec",
                format!("shape {:?} holds {} elements, got {}", shape, numel_of(shape), data.len()),
            );
        }
        Ok(Self::new_node(Arc::new(data), shape.to_vec(), false, None))
    }

    /// Trainable leaf tensor.
    pub fn parameter(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let t = Self::from_vec(data, shape)?;
        Ok(Self::new_node(t.data(), shape.to_vec(), true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::new_node(Arc::new(vec![value; numel_of(shape)]), shape.to_vec(), false, None)
    }

    pub fn scalar(value: T) -> Self {
        Self::new_node(Arc::new(vec![value]), Vec::new(), false, None)
    }

    /// Records the result of an operation, attaching `backward` only when
    /// graph recording is on and some parent requires a gradient.
    pub(crate) fn from_op(
        op: &'static str,
        data: Vec<T>,
        shape: Vec<usize>,
        parents: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Self {
        Self::from_op_shared(op, Arc::new(data), shape, parents, backward)
    }

    pub(crate) fn from_op_shared(
        op: &'static str,
        data: Arc<Vec<T>>,
        shape: Vec<usize>,
        parents: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Self {
        let track = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if !track {
            return Self::new_node(data, shape, false, None);
        }
        Self::new_node(data, shape, true, Some(GradFn { op, parents, backward }))
    }

    /// True when recording is on and any input requires a gradient; ops use
    /// it to skip building backward closures (and saving inputs) otherwise.
    pub(crate) fn tracking(parents: &[&Tensor<T>]) -> bool {
        grad_enabled() && parents.iter().any(|p| p.requires_grad())
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn rank(&self) -> usize {
        self.node.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel_of(&self.node.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.node.grad_fn.is_none()
    }

    /// Name of the operation that produced this tensor, if recorded.
    pub fn op_name(&self) -> Option<&'static str> {
        self.node.grad_fn.as_ref().map(|g| g.op)
    }

    /// Shared handle to the element buffer.
    pub fn data(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.node.data.read().expect("tensor data lock"))
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data().as_ref().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        let d = self.data();
        assert_eq!(d.len(), 1, "item() on tensor with {} elements", d.len());
        d[0]
    }

    /// Mutates the element buffer in place (copying first if it is shared).
    /// Intended for optimizers, checkpoint loading and initialization.
    pub fn update_data(&self, f: impl FnOnce(&mut [T])) {
        let mut guard = self.node.data.write().expect("tensor data lock");
        f(Arc::make_mut(&mut guard).as_mut_slice());
    }

    /// Makes this tensor's buffer share `src`'s current buffer.
    pub fn assign(&self, src: &Tensor<T>) -> Result<()> {
        if src.shape() != self.shape() {
            return shape_err("assign", format!("destination {:?} vs source {:?}", self.shape(), src.shape()));
        }
        let data = src.data();
        *self.node.data.write().expect("tensor data lock") = data;
        Ok(())
    }

    /// Leaf copy sharing this tensor's buffer, cut from the graph.
    pub fn detach(&self) -> Self {
        Self::new_node(self.data(), self.shape().to_vec(), false, None)
    }

    /// Independent leaf with its own buffer and the same `requires_grad`.
    pub fn deep_clone(&self) -> Self {
        Self::new_node(Arc::new(self.to_vec()), self.shape().to_vec(), self.requires_grad(), None)
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.node.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock().expect("grad lock") = None;
    }

    fn accumulate_grad(&self, g: Vec<T>) {
        let mut slot = self.node.grad.lock().expect("grad lock");
        match slot.as_mut() {
            Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, v)| *e += *v),
            None => *slot = Some(g),
        }
    }

    /// Reverse-mode sweep from a scalar loss.
    ///
    /// Gradients accumulate into `grad` of every reachable tensor that
    /// requires one; callers zero leaf gradients between sweeps.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NotScalar(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Err(TensorError::NoGradPath);
        }
        let order = self.topological_order();
        let mut pending: HashMap<u64, Vec<T>> = HashMap::new();
        pending.insert(self.id(), vec![T::one()]);

        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.id()) else {
                continue;
            };
            if let Some(gf) = &t.node.grad_fn {
                let wants: Vec<bool> = gf.parents.iter().map(|p| p.requires_grad()).collect();
                let parent_grads = (gf.backward)(&g, &wants);
                debug_assert_eq!(parent_grads.len(), gf.parents.len(), "{}", gf.op);
                for ((p, pg), want) in gf.parents.iter().zip(parent_grads).zip(wants) {
                    let Some(pg) = pg else { continue };
                    if !want {
                        continue;
                    }
                    debug_assert_eq!(pg.len(), p.numel(), "{} gradient length", gf.op);
                    match pending.get_mut(&p.id()) {
                        Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, v)| *a += *v),
                        None => {
                            pending.insert(p.id(), pg);
                        }
                    }
                }
            }
            t.accumulate_grad(g);
        }
        Ok(())
    }

    /// Nodes reachable through requires-grad edges, parents before children.
    fn topological_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        // Iterative post-order DFS; the backbones are deep enough that
        // recursion would be fragile.
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(gf) = &t.node.grad_fn {
                for p in gf.parents.iter().rev() {
                    if p.requires_grad() && !visited.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }

    /// Reinterprets the buffer under a new shape of equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel_of(shape) != self.numel() {
            return shape_err(
                "reshape",
                format!("cannot view {:?} ({} elements) as {:?}", self.shape(), self.numel(), shape),
            );
        }
        Ok(Self::from_op_shared(
            "reshape",
            self.data(),
            shape.to_vec(),
            vec![self.clone()],
            Box::new(|g, _| vec![Some(g.to_vec())]),
        ))
    }

    pub(crate) fn check_rank(&self, op: &'static str, rank: usize) -> Result<()> {
        if self.rank() != rank {
            return shape_err(op, format!("expected rank {rank}, got shape {:?}", self.shape()));
        }
        Ok(())
    }
}
