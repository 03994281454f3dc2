use std::cell::{Cell, Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

use ndarray::{ArrayD, IxDyn};

use crate::Scalar;

thread_local! {
    static RECORDING: Cell<bool> = const { Cell::new(true) };
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

/// Run `f` with gradient recording disabled on this thread.
///
/// Ops called inside produce constant tensors with no backward graph; used
/// for evaluation passes and weight updates.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = RECORDING.with(|r| r.replace(false));
    let out = f();
    RECORDING.with(|r| r.set(prev));
    out
}

pub(crate) fn recording() -> bool {
    RECORDING.with(Cell::get)
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

type BackwardFn<T> = Box<dyn Fn(&ArrayD<T>)>;

struct Inner<T: Scalar> {
    id: u64,
    data: RefCell<ArrayD<T>>,
    grad: RefCell<Option<ArrayD<T>>>,
    requires_grad: bool,
    parents: Vec<Tensor<T>>,
    backward: Option<BackwardFn<T>>,
}

/// A node in the computation graph: an n-dimensional array plus the
/// bookkeeping reverse-mode autodiff needs.
///
/// Cloning is cheap (shared handle). Graphs are built single-threaded; ops
/// record a backward closure only while recording is enabled and at least
/// one input is on a gradient path.
pub struct Tensor<T: Scalar> {
    inner: Rc<Inner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> Tensor<T> {
    /// Trainable leaf tensor (parameter).
    pub fn param(data: ArrayD<T>) -> Self {
        Self::leaf(data, true)
    }

    /// Non-trainable leaf tensor (input data, labels, masks).
    pub fn constant(data: ArrayD<T>) -> Self {
        Self::leaf(data, false)
    }

    pub fn scalar(v: T) -> Self {
        Self::constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    fn leaf(data: ArrayD<T>, requires_grad: bool) -> Self {
        Tensor {
            inner: Rc::new(Inner {
                id: next_id(),
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                parents: Vec::new(),
                backward: None,
            }),
        }
    }

    pub(crate) fn from_op(
        data: ArrayD<T>,
        parents: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Self {
        Tensor {
            inner: Rc::new(Inner {
                id: next_id(),
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: false,
                parents,
                backward: Some(backward),
            }),
        }
    }

    pub fn data(&self) -> Ref<'_, ArrayD<T>> {
        self.inner.data.borrow()
    }

    /// Replace the stored value in place. Only meaningful for leaves; the
    /// optimizer uses it to apply updates.
    pub fn set_data(&self, data: ArrayD<T>) {
        *self.inner.data.borrow_mut() = data;
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.data.borrow().shape().to_vec()
    }

    pub fn len(&self) -> usize {
        self.inner.data.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// True if gradients must flow to or through this node.
    pub(crate) fn on_grad_path(&self) -> bool {
        self.inner.requires_grad || self.inner.backward.is_some()
    }

    pub fn grad(&self) -> Option<ArrayD<T>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Single scalar value of a 0-d or 1-element tensor.
    pub fn item(&self) -> T {
        let d = self.inner.data.borrow();
        assert_eq!(d.len(), 1, "item() requires a 1-element tensor");
        *d.iter().next().expect("non-empty")
    }

    /// A constant tensor sharing this one's current value but cut off from
    /// the graph.
    pub fn detach(&self) -> Tensor<T> {
        Self::constant(self.inner.data.borrow().clone())
    }

    pub(crate) fn accumulate_grad(&self, g: &ArrayD<T>) {
        if !self.on_grad_path() {
            return;
        }
        debug_assert_eq!(
            g.shape(),
            self.inner.data.borrow().shape(),
            "gradient shape mismatch"
        );
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(cur) => *cur += g,
            None => *slot = Some(g.clone()),
        }
    }

    pub(crate) fn accumulate_grad_owned(&self, g: ArrayD<T>) {
        if !self.on_grad_path() {
            return;
        }
        debug_assert_eq!(
            g.shape(),
            self.inner.data.borrow().shape(),
            "gradient shape mismatch"
        );
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(cur) => *cur += &g,
            None => *slot = Some(g),
        }
    }

    /// Run reverse-mode accumulation from this scalar node.
    ///
    /// Gradients accumulate into every leaf with `requires_grad`; calling
    /// backward twice (e.g. across accumulation micro-batches) adds up.
    /// Interior gradients are dropped as soon as they have been consumed.
    pub fn backward(&self) {
        assert_eq!(self.len(), 1, "backward() requires a scalar loss");
        let order = self.topo_order();
        let seed = ArrayD::from_elem(self.inner.data.borrow().raw_dim(), T::one());
        self.accumulate_grad_owned(seed);
        for node in order.iter().rev() {
            let Some(back) = &node.inner.backward else {
                continue;
            };
            let grad = node.inner.grad.borrow_mut().take();
            if let Some(g) = grad {
                back(&g);
            }
        }
    }

    fn topo_order(&self) -> Vec<Tensor<T>> {
        // Iterative post-order DFS; graphs can be a few thousand nodes deep
        // once tile batches are chunked, so no recursion.
        let mut order = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor<T>, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.inner.id);
        while let Some((node, child)) = stack.pop() {
            if child < node.inner.parents.len() {
                let parent = node.inner.parents[child].clone();
                stack.push((node, child + 1));
                if parent.inner.backward.is_some() && visited.insert(parent.inner.id) {
                    stack.push((parent, 0));
                }
            } else {
                order.push(node);
            }
        }
        order
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.shape())
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops;

    #[test]
    fn backward_accumulates_into_leaves() {
        let a = Tensor::param(ArrayD::from_elem(IxDyn(&[2]), 3.0f64));
        let b = Tensor::param(ArrayD::from_elem(IxDyn(&[2]), 4.0f64));
        let y = ops::sum_all(&ops::mul(&a, &b));
        y.backward();
        assert_eq!(y.item(), 24.0);
        assert_eq!(a.grad().unwrap(), ArrayD::from_elem(IxDyn(&[2]), 4.0));
        assert_eq!(b.grad().unwrap(), ArrayD::from_elem(IxDyn(&[2]), 3.0));
    }

    #[test]
    fn shared_node_gradients_add() {
        let a = Tensor::param(ArrayD::from_elem(IxDyn(&[]), 2.0f64));
        let y = ops::sum_all(&ops::mul(&a, &a));
        y.backward();
        // d(a*a)/da accumulates once per use of the shared node: 2a
        assert_eq!(a.grad().unwrap().sum(), 4.0);
    }

    #[test]
    fn no_grad_builds_no_graph() {
        let a = Tensor::param(ArrayD::from_elem(IxDyn(&[2]), 1.0f64));
        let y = no_grad(|| ops::sum_all(&ops::mul(&a, &a)));
        assert!(!y.on_grad_path());
    }

    #[test]
    fn constants_do_not_record() {
        let a = Tensor::constant(ArrayD::from_elem(IxDyn(&[2]), 1.0f64));
        let b = Tensor::constant(ArrayD::from_elem(IxDyn(&[2]), 2.0f64));
        assert!(!ops::add(&a, &b).on_grad_path());
    }
}
