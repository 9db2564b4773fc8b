//! Dense f64 n-dimensional arrays with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a cheap-to-clone handle onto an immutable value node. Ops
//! build a dynamic graph per forward pass (the tape); [`Tensor::backward`]
//! replays it in reverse and accumulates gradients into every `requires_grad`
//! leaf. Parameters are ordinary leaf tensors that the optimizer replaces with
//! fresh leaves each step, so the previous step's graph is dropped wholesale.
//!
//! Broadcasting follows trailing-dimension alignment with size-1 expansion.
//! Every op checks that its output is finite and returns a domain error
//! otherwise.

mod adam;
mod io;
mod ops;

pub use adam::{cosine_lr, Adam};

use crate::error::{Error, Result};
use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Gradient function: maps the node's output adjoint to one optional adjoint
/// per parent (dense, parent-shaped). `None` marks a parent that needs no
/// gradient.
pub(crate) type Vjp = Box<dyn Fn(&[f64]) -> Vec<Option<Vec<f64>>>>;

pub(crate) struct TensorInner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    parents: Vec<Tensor>,
    vjp: Option<Vjp>,
}

/// Handle onto one node of the computation graph.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<TensorInner>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = &self.inner.data;
        let head: Vec<f64> = d.iter().take(6).copied().collect();
        write!(
            f,
            "Tensor{{shape: {:?}, requires_grad: {}, data: {:?}{}}}",
            self.inner.shape,
            self.inner.requires_grad,
            head,
            if d.len() > 6 { ", .." } else { "" }
        )
    }
}

fn product(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn all_finite(data: &[f64]) -> bool {
    data.iter().all(|v| v.is_finite())
}

impl Tensor {
    fn make(
        shape: Vec<usize>,
        data: Vec<f64>,
        requires_grad: bool,
        parents: Vec<Tensor>,
        vjp: Option<Vjp>,
    ) -> Tensor {
        Tensor {
            inner: Rc::new(TensorInner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: RefCell::new(None),
                parents,
                vjp,
            }),
        }
    }

    /// Internal constructor for op results: prunes the graph when no parent
    /// needs gradients and rejects non-finite outputs.
    pub(crate) fn node(
        op: &str,
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        vjp: Vjp,
    ) -> Result<Tensor> {
        debug_assert_eq!(product(&shape), data.len());
        if !all_finite(&data) {
            return Err(Error::Domain(format!("{op}: non-finite value in result")));
        }
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if requires_grad {
            Ok(Tensor::make(shape, data, true, parents, Some(vjp)))
        } else {
            Ok(Tensor::make(shape, data, false, Vec::new(), None))
        }
    }

    /// New constant tensor. Errors when the data length does not match the
    /// shape or the data is non-finite.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        if product(shape) != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                product(shape),
                data.len()
            )));
        }
        if !all_finite(&data) {
            return Err(Error::Domain("from_vec: non-finite input".into()));
        }
        Ok(Tensor::make(shape.to_vec(), data, false, Vec::new(), None))
    }

    /// New learnable leaf; gradients accumulate here after `backward`.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::from_vec(shape, data)?;
        Ok(Tensor::make(t.inner.shape.clone(), t.inner.data.clone(), true, Vec::new(), None))
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::make(vec![], vec![v], false, Vec::new(), None)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::make(shape.to_vec(), vec![0.0; product(shape)], false, Vec::new(), None)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Tensor {
        Tensor::make(shape.to_vec(), vec![v; product(shape)], false, Vec::new(), None)
    }

    /// Standard normal samples (Box-Muller over the given RNG stream).
    pub fn randn<R: rand::Rng>(shape: &[usize], rng: &mut R) -> Tensor {
        let n = product(shape);
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let u1: f64 = loop {
                let v: f64 = rng.gen();
                if v > 0.0 {
                    break v;
                }
            };
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt();
            let th = 2.0 * std::f64::consts::PI * u2;
            data.push(r * th.cos());
            if data.len() < n {
                data.push(r * th.sin());
            }
        }
        Tensor::make(shape.to_vec(), data, false, Vec::new(), None)
    }

    /// Uniform samples in [0, 1).
    pub fn rand_uniform<R: rand::Rng>(shape: &[usize], rng: &mut R) -> Tensor {
        let n = product(shape);
        let data: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        Tensor::make(shape.to_vec(), data, false, Vec::new(), None)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn len(&self) -> usize {
        self.inner.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.data.is_empty()
    }

    /// Borrow the raw row-major values.
    pub fn values(&self) -> &[f64] {
        &self.inner.data
    }

    /// Clone out the raw row-major values.
    pub fn data(&self) -> Vec<f64> {
        self.inner.data.clone()
    }

    /// Extract a single-element tensor's value.
    pub fn item(&self) -> Result<f64> {
        if self.len() != 1 {
            return Err(Error::Contract(format!(
                "item: expected a single element, shape is {:?}",
                self.shape()
            )));
        }
        Ok(self.inner.data[0])
    }

    /// Rows/cols of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        if self.rank() != 2 {
            return Err(Error::Dimension(format!(
                "expected rank-2 tensor, got shape {:?}",
                self.shape()
            )));
        }
        Ok((self.inner.shape[0], self.inner.shape[1]))
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.id
    }

    /// Accumulated gradient of a leaf, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Same values, cut off from the graph. Gradients do not flow past it.
    pub fn detach(&self) -> Tensor {
        Tensor::make(self.inner.shape.clone(), self.inner.data.clone(), false, Vec::new(), None)
    }

    /// Reverse-mode sweep from a scalar loss. Every `requires_grad` leaf
    /// reachable from `self` gets its gradient accumulated. The graph built
    /// during the forward pass is not reusable for a second independent loss;
    /// drop the loss (and intermediates) to release it.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(Error::Contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.shape()
            )));
        }
        // Iterative post-order DFS; parents visited in construction order so
        // accumulation order is structural and deterministic.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: std::collections::HashSet<u64> = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.id());
        while let Some((node, child)) = stack.pop() {
            if child < node.inner.parents.len() {
                let next = node.inner.parents[child].clone();
                stack.push((node, child + 1));
                if next.requires_grad() && visited.insert(next.id()) {
                    stack.push((next, 0));
                }
            } else {
                order.push(node);
            }
        }

        let mut grads: std::collections::HashMap<u64, Vec<f64>> = std::collections::HashMap::new();
        grads.insert(self.id(), vec![1.0]);

        for node in order.iter().rev() {
            let g = match grads.remove(&node.id()) {
                Some(g) => g,
                None => continue,
            };
            if !all_finite(&g) {
                return Err(Error::Domain("backward: non-finite gradient".into()));
            }
            match &node.inner.vjp {
                Some(vjp) => {
                    let partials = vjp(&g);
                    debug_assert_eq!(partials.len(), node.inner.parents.len());
                    for (parent, pg) in node.inner.parents.iter().zip(partials) {
                        if let Some(pg) = pg {
                            if parent.requires_grad() {
                                debug_assert_eq!(pg.len(), parent.len());
                                let slot = grads.entry(parent.id()).or_insert_with(|| vec![0.0; parent.len()]);
                                for (s, v) in slot.iter_mut().zip(&pg) {
                                    *s += v;
                                }
                            }
                        }
                    }
                }
                None => {
                    // Leaf: accumulate into its grad slot.
                    let mut slot = node.inner.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => {
                            for (a, v) in acc.iter_mut().zip(&g) {
                                *a += v;
                            }
                        }
                        None => *slot = Some(g),
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0]).is_err());
        assert!(Tensor::from_vec(&[2, 2], vec![1.0; 4]).is_ok());
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let w = Tensor::param(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = w.mul(&w).unwrap();
        match y.backward() {
            Err(Error::Contract(_)) => {}
            other => panic!("expected contract error, got {other:?}"),
        }
    }

    #[test]
    fn backward_sum_gives_ones() {
        let w = Tensor::param(&[4], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let loss = w.sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn backward_sum_of_squares_gives_2w() {
        let w = Tensor::param(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let loss = w.mul(&w).unwrap().sum_all().unwrap();
        loss.backward().unwrap();
        let g = w.grad().unwrap();
        for (gi, wi) in g.iter().zip(w.values()) {
            assert!((gi - 2.0 * wi).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_accumulates_across_backward_calls() {
        let w = Tensor::param(&[2], vec![1.0, 1.0]).unwrap();
        w.sum_all().unwrap().backward().unwrap();
        w.sum_all().unwrap().backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![2.0, 2.0]);
        w.zero_grad();
        assert!(w.grad().is_none());
    }

    #[test]
    fn same_seed_reproduces_bit_identical_values() {
        let mut r1 = ChaCha8Rng::seed_from_u64(99);
        let mut r2 = ChaCha8Rng::seed_from_u64(99);
        let a = Tensor::randn(&[16], &mut r1);
        let b = Tensor::randn(&[16], &mut r2);
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn non_finite_result_is_a_domain_error() {
        let a = Tensor::from_vec(&[1], vec![1e308]).unwrap();
        match a.add(&a) {
            Err(Error::Domain(_)) => {}
            other => panic!("expected domain error, got {other:?}"),
        }
    }
}
