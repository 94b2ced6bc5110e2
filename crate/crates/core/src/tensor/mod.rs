//! A small dense-tensor reverse-mode autodiff engine.
//!
//! Tensors are reference counted and cheap to clone. Operations on tensors
//! that track gradients record a graph node pointing at their inputs;
//! [`Tensor::backward`] walks that graph once, writes gradients into the
//! parameter leaves and frees the graph.

mod backward;
pub mod checkpoint;
mod conv;
pub mod gradcheck;
mod ops;
pub mod optim;

use std::cell::Cell;
use std::fmt;
use std::iter::Sum;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

pub use backward::GradStore;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use gradcheck::finite_difference_gradient;
pub use ops::{forward_op, OpKind};
pub use optim::{OptimizerState, RmsPropConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("invalid shape {0:?}: dims must be positive and match the data length")]
    InvalidShape(Vec<usize>),
    #[error("dropout probability must lie in [0, 1), got {0}")]
    InvalidDropout(f64),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("the computation graph behind this tensor was already consumed by backward")]
    GraphFreed,
    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("{0} expects {1} input(s)")]
    Arity(&'static str, usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Scalar types a [`Tensor`] can hold.
pub trait Element:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + fmt::Debug
    + fmt::Display
    + Sum
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a · b + beta * c` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }
}

fn strided_extent(rows: usize, cols: usize, (rs, cs): (isize, isize)) -> usize {
    assert!(rs >= 0 && cs >= 0, "negative strides are not supported");
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
    }
}

macro_rules! impl_element {
    ($t:ty, $gemm:path) => {
        impl Element for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                assert!(a.len() >= strided_extent(m, k, a_strides));
                assert!(b.len() >= strided_extent(k, n, b_strides));
                assert!(c.len() >= strided_extent(m, n, c_strides));
                // SAFETY: the asserts above keep every strided access inside
                // the three slices, and `c` is exclusively borrowed.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
                    );
                }
            }
        }
    };
}

impl_element!(f32, matrixmultiply::sgemm);
impl_element!(f64, matrixmultiply::dgemm);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording graph nodes on this thread.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let out = f();
    GRAD_ENABLED.with(|g| g.set(prev));
    out
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(Cell::get)
}

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

/// Gradient rule of a recorded operation.
pub trait BackwardOp<T: Element>: Send + Sync {
    fn name(&self) -> &'static str;

    /// Returns one gradient per input (or `None` where the input receives
    /// none), given the gradient of the loss with respect to the output.
    fn backward(&self, grad_out: &[T], output: &[T], inputs: &[Tensor<T>]) -> Vec<Option<Vec<T>>>;
}

pub(crate) struct GraphNode<T: Element> {
    pub(crate) inputs: Vec<Tensor<T>>,
    pub(crate) op: Box<dyn BackwardOp<T>>,
}

pub(crate) struct Inner<T: Element> {
    id: usize,
    shape: Vec<usize>,
    data: RwLock<Vec<T>>,
    grad: Mutex<Option<Vec<T>>>,
    requires_grad: bool,
    node: Mutex<Option<GraphNode<T>>>,
    has_graph: AtomicBool,
    freed: AtomicBool,
}

/// Dense row-major tensor.
pub struct Tensor<T: Element = f32>(Arc<Inner<T>>);

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Self(Arc::clone(&self.0))
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish_non_exhaustive()
    }
}

fn check_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) || shape.iter().product::<usize>() != len {
        return Err(TensorError::InvalidShape(shape.to_vec()));
    }
    Ok(())
}

impl<T: Element> Tensor<T> {
    fn build(
        shape: Vec<usize>,
        data: Vec<T>,
        requires_grad: bool,
        node: Option<GraphNode<T>>,
    ) -> Self {
        Self(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data: RwLock::new(data),
            grad: Mutex::new(None),
            requires_grad,
            has_graph: AtomicBool::new(node.is_some()),
            node: Mutex::new(node),
            freed: AtomicBool::new(false),
        }))
    }

    /// Constant tensor (no gradient).
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        check_shape(shape, data.len())?;
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// Learnable leaf whose gradient is accumulated by [`Tensor::backward`].
    pub fn parameter(shape: &[usize], data: Vec<T>) -> Result<Self> {
        check_shape(shape, data.len())?;
        Ok(Self::build(shape.to_vec(), data, true, None))
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let n = shape.iter().product();
        Self::from_vec(shape, vec![value; n])
    }

    pub fn scalar(value: T) -> Self {
        Self::build(vec![1], vec![value], false, None)
    }

    /// Output of a custom differentiable operation. A graph node is recorded
    /// when gradient recording is on and some input tracks gradients.
    pub fn from_op(
        shape: &[usize],
        data: Vec<T>,
        inputs: Vec<Tensor<T>>,
        op: impl BackwardOp<T> + 'static,
    ) -> Result<Self> {
        check_shape(shape, data.len())?;
        let node = (grad_enabled() && inputs.iter().any(Tensor::tracks_grad)).then(|| GraphNode {
            inputs,
            op: Box::new(op),
        });
        Ok(Self::build(shape.to_vec(), data, false, node))
    }

    pub fn id(&self) -> usize {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// True for parameters and for outputs of recorded operations.
    pub fn tracks_grad(&self) -> bool {
        self.0.requires_grad || self.0.has_graph.load(Ordering::Acquire)
    }

    pub fn data(&self) -> RwLockReadGuard<'_, Vec<T>> {
        self.0.data.read().expect("tensor data lock poisoned")
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data().clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        let d = self.data();
        if d.len() != 1 {
            return Err(TensorError::NotScalar(self.0.shape.clone()));
        }
        Ok(d[0])
    }

    /// Overwrites the values in place, keeping the shape.
    pub fn set_data(&self, data: Vec<T>) -> Result<()> {
        if data.len() != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "set_data",
                detail: format!("{} values for shape {:?}", data.len(), self.shape()),
            });
        }
        *self.0.data.write().expect("tensor data lock poisoned") = data;
        Ok(())
    }

    pub(crate) fn update_data(&self, f: impl FnOnce(&mut [T])) {
        let mut d = self.0.data.write().expect("tensor data lock poisoned");
        f(&mut d);
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock poisoned") = None;
    }

    /// Adds `g` to the gradient accumulator, creating it if absent.
    pub fn accumulate_grad(&self, g: &[T]) -> Result<()> {
        if g.len() != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "accumulate_grad",
                detail: format!("{} values for shape {:?}", g.len(), self.shape()),
            });
        }
        let mut slot = self.0.grad.lock().expect("grad lock poisoned");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
            None => *slot = Some(g.to_vec()),
        }
        Ok(())
    }

    /// Copy of the values with no gradient tracking.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape.clone(), self.to_vec(), false, None)
    }

    /// Same values under a new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        ops::reshape(self, shape)
    }
}
