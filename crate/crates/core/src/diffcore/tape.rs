//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation as it executes; [`DiffValue`] is a
//! handle to one recorded node. Calling [`DiffValue::backward`] on a scalar
//! result sweeps the tape once in reverse and returns the gradient of that
//! scalar with respect to every recorded value that requires gradients.
//!
//! The tape is rebuilt from scratch each training step, so node storage is a
//! plain grow-only vector. Values are reference-counted so a handle stays
//! usable while the tape keeps growing; consequently the whole structure is
//! single-threaded by construction (`Rc`/`RefCell`), which matches the
//! one-sample-stream training loop this crate targets.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};

use super::array::Array;
use super::kernels;
use super::scalar::Real;
use super::special;

/// How a node's value was produced; operands are node indices, which are
/// always smaller than the node's own index.
#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Exp(usize),
    Ln(usize),
    Abs(usize),
    Relu(usize),
    Softplus(usize),
    Tanh(usize),
    Digamma(usize),
    LnGamma(usize),
    AddScalar(usize, T),
    MulScalar(usize, T),
    RsubScalar(T, usize),
    RdivScalar(T, usize),
    ClampMin(usize, T),
    ClampMax(usize, T),
    SumAll(usize),
    MeanAll(usize),
    SumAxes { src: usize, axes: Vec<usize> },
    ExpandAxis { src: usize, axis: usize },
    Narrow { src: usize, axis: usize, start: usize },
    Softmax { src: usize, axis: usize },
    Conv2d { input: usize, kernel: usize, stride: usize, padding: usize },
    BiasAdd { src: usize, bias: usize },
}

struct Node<T> {
    value: Rc<Array<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Operation recorder. Create one per training step, record the forward
/// pass through [`DiffValue`] methods, then call `backward` on the loss.
pub struct Tape<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()) }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a differentiable input (a parameter).
    pub fn var(&self, value: Array<T>) -> DiffValue<'_, T> {
        self.push(value, Op::Leaf, true)
    }

    /// Records a non-differentiable input (data, labels, frozen targets).
    pub fn constant(&self, value: Array<T>) -> DiffValue<'_, T> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Array<T>, op: Op<T>, requires_grad: bool) -> DiffValue<'_, T> {
        let value = Rc::new(value);
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value: Rc::clone(&value), op, requires_grad });
        DiffValue { tape: self, id, value, requires_grad }
    }
}

/// Handle to one value recorded on a [`Tape`].
pub struct DiffValue<'t, T: Real> {
    tape: &'t Tape<T>,
    id: usize,
    value: Rc<Array<T>>,
    requires_grad: bool,
}

impl<'t, T: Real> Clone for DiffValue<'t, T> {
    fn clone(&self) -> Self {
        DiffValue {
            tape: self.tape,
            id: self.id,
            value: Rc::clone(&self.value),
            requires_grad: self.requires_grad,
        }
    }
}

/// Gradients of one scalar with respect to every recorded node, indexed by
/// the [`DiffValue`] handles that produced them.
pub struct Gradients<T: Real> {
    grads: Vec<Option<Array<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for `value`, if it participated in the backward pass.
    pub fn get(&self, value: &DiffValue<'_, T>) -> Option<&Array<T>> {
        self.grads.get(value.id).and_then(|g| g.as_ref())
    }

    /// Removes and returns the gradient for `value`.
    pub fn take(&mut self, value: &DiffValue<'_, T>) -> Option<Array<T>> {
        self.grads.get_mut(value.id).and_then(|g| g.take())
    }
}

/// Adds `contrib` into the gradient slot of node `id`, summing the
/// contribution down to a single element first when the operand was a
/// broadcast scalar.
fn accumulate<T: Real>(
    grads: &mut [Option<Array<T>>],
    nodes: &[Node<T>],
    id: usize,
    contrib: Array<T>,
) -> Result<()> {
    if !nodes[id].requires_grad {
        return Ok(());
    }
    let target = nodes[id].value.shape();
    let contrib = if contrib.shape() == target {
        contrib
    } else if nodes[id].value.is_scalar() {
        Array::from_vec(target.to_vec(), vec![contrib.sum()])?
    } else {
        return Err(Error::Shape(format!(
            "gradient shape {:?} does not fit operand shape {:?}",
            contrib.shape(),
            target
        )));
    };
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&contrib)?,
        slot @ None => *slot = Some(contrib),
    }
    Ok(())
}

/// Numerically stable logistic function, the softplus derivative.
fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<'t, T: Real> DiffValue<'t, T> {
    pub fn value(&self) -> &Array<T> {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// The scalar payload of a one-element value.
    pub fn item(&self) -> Result<T> {
        self.value.item()
    }

    /// Re-records this value as a constant leaf: same data, no gradient
    /// flow. This is the stop-gradient primitive the consistency losses use
    /// to freeze the guide branch.
    pub fn detach(&self) -> DiffValue<'t, T> {
        let value = Rc::clone(&self.value);
        let mut nodes = self.tape.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node { value: Rc::clone(&value), op: Op::Leaf, requires_grad: false });
        DiffValue { tape: self.tape, id, value, requires_grad: false }
    }

    fn same_tape(&self, other: &DiffValue<'t, T>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::Contract("cannot combine values from different tapes".into()))
        }
    }

    fn unary(&self, value: Array<T>, op: Op<T>) -> DiffValue<'t, T> {
        self.tape.push(value, op, self.requires_grad)
    }

    fn binary(
        &self,
        other: &DiffValue<'t, T>,
        value: Array<T>,
        op: Op<T>,
    ) -> DiffValue<'t, T> {
        self.tape.push(value, op, self.requires_grad || other.requires_grad)
    }

    pub fn add(&self, other: &DiffValue<'t, T>) -> Result<DiffValue<'t, T>> {
        self.same_tape(other)?;
        let value = self.value.zip(&other.value, |a, b| a + b)?;
        Ok(self.binary(other, value, Op::Add(self.id, other.id)))
    }

    pub fn sub(&self, other: &DiffValue<'t, T>) -> Result<DiffValue<'t, T>> {
        self.same_tape(other)?;
        let value = self.value.zip(&other.value, |a, b| a - b)?;
        Ok(self.binary(other, value, Op::Sub(self.id, other.id)))
    }

    pub fn mul(&self, other: &DiffValue<'t, T>) -> Result<DiffValue<'t, T>> {
        self.same_tape(other)?;
        let value = self.value.zip(&other.value, |a, b| a * b)?;
        Ok(self.binary(other, value, Op::Mul(self.id, other.id)))
    }

    pub fn div(&self, other: &DiffValue<'t, T>) -> Result<DiffValue<'t, T>> {
        self.same_tape(other)?;
        let value = self.value.zip(&other.value, |a, b| a / b)?;
        Ok(self.binary(other, value, Op::Div(self.id, other.id)))
    }

    pub fn neg(&self) -> DiffValue<'t, T> {
        self.unary(self.value.map(|x| -x), Op::Neg(self.id))
    }

    pub fn exp(&self) -> DiffValue<'t, T> {
        self.unary(self.value.map(|x| x.exp()), Op::Exp(self.id))
    }

    /// Natural logarithm; callers clamp away zero first where needed.
    pub fn ln(&self) -> DiffValue<'t, T> {
        self.unary(self.value.map(|x| x.ln()), Op::Ln(self.id))
    }

    pub fn abs(&self) -> DiffValue<'t, T> {
        self.unary(self.value.map(|x| x.abs()), Op::Abs(self.id))
    }

    pub fn relu(&self) -> DiffValue<'t, T> {
        self.unary(
            self.value.map(|x| if x > T::zero() { x } else { T::zero() }),
            Op::Relu(self.id),
        )
    }

    pub fn tanh(&self) -> DiffValue<'t, T> {
        self.unary(self.value.map(|x| x.tanh()), Op::Tanh(self.id))
    }

    /// `ln(1 + eˣ)`, computed overflow-free as `max(x,0) + ln(1 + e^-|x|)`.
    pub fn softplus(&self) -> DiffValue<'t, T> {
        self.unary(
            self.value.map(|x| {
                let floor = if x > T::zero() { x } else { T::zero() };
                floor + (-x.abs()).exp().ln_1p()
            }),
            Op::Softplus(self.id),
        )
    }

    /// Elementwise digamma ψ(x); arguments must stay positive.
    pub fn digamma(&self) -> DiffValue<'t, T> {
        self.unary(self.value.map(special::digamma), Op::Digamma(self.id))
    }

    /// Elementwise ln Γ(x); arguments must stay positive.
    pub fn ln_gamma(&self) -> DiffValue<'t, T> {
        self.unary(self.value.map(special::ln_gamma), Op::LnGamma(self.id))
    }

    pub fn add_scalar(&self, c: T) -> DiffValue<'t, T> {
        self.unary(self.value.map(|x| x + c), Op::AddScalar(self.id, c))
    }

    pub fn mul_scalar(&self, c: T) -> DiffValue<'t, T> {
        self.unary(self.value.map(|x| x * c), Op::MulScalar(self.id, c))
    }

    /// `c - x`, elementwise.
    pub fn rsub_scalar(&self, c: T) -> DiffValue<'t, T> {
        self.unary(self.value.map(|x| c - x), Op::RsubScalar(c, self.id))
    }

    /// `c / x`, elementwise.
    pub fn rdiv_scalar(&self, c: T) -> DiffValue<'t, T> {
        self.unary(self.value.map(|x| c / x), Op::RdivScalar(c, self.id))
    }

    pub fn clamp_min(&self, c: T) -> DiffValue<'t, T> {
        self.unary(
            self.value.map(|x| if x < c { c } else { x }),
            Op::ClampMin(self.id, c),
        )
    }

    pub fn clamp_max(&self, c: T) -> DiffValue<'t, T> {
        self.unary(
            self.value.map(|x| if x > c { c } else { x }),
            Op::ClampMax(self.id, c),
        )
    }

    /// Sum of all elements, as a one-element value.
    pub fn sum_all(&self) -> DiffValue<'t, T> {
        self.unary(Array::scalar(self.value.sum()), Op::SumAll(self.id))
    }

    /// Mean of all elements, as a one-element value.
    pub fn mean_all(&self) -> DiffValue<'t, T> {
        let n = T::of(self.value.numel() as f64);
        self.unary(Array::scalar(self.value.sum() / n), Op::MeanAll(self.id))
    }

    /// Sum over `axes`, keeping them as size 1 when `keepdim`.
    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Result<DiffValue<'t, T>> {
        let value = self.value.sum_axes(axes, keepdim)?;
        Ok(self.unary(value, Op::SumAxes { src: self.id, axes: axes.to_vec() }))
    }

    /// Tiles a size-1 axis up to length `n`.
    pub fn expand_axis(&self, axis: usize, n: usize) -> Result<DiffValue<'t, T>> {
        let value = self.value.expand_axis(axis, n)?;
        Ok(self.unary(value, Op::ExpandAxis { src: self.id, axis }))
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<DiffValue<'t, T>> {
        let value = self.value.narrow(axis, start, len)?;
        Ok(self.unary(value, Op::Narrow { src: self.id, axis, start }))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<DiffValue<'t, T>> {
        let value = kernels::softmax(&self.value, axis)?;
        Ok(self.unary(value, Op::Softmax { src: self.id, axis }))
    }

    /// Cross-correlates `self [B,C,H,W]` with `kernel [O,C,kH,kW]`.
    pub fn conv2d(
        &self,
        kernel: &DiffValue<'t, T>,
        stride: usize,
        padding: usize,
    ) -> Result<DiffValue<'t, T>> {
        self.same_tape(kernel)?;
        let value = kernels::conv2d_forward(&self.value, &kernel.value, stride, padding)?;
        Ok(self.binary(
            kernel,
            value,
            Op::Conv2d { input: self.id, kernel: kernel.id, stride, padding },
        ))
    }

    /// Adds a per-channel bias `[C]` onto a `[B,C,H,W]` map.
    pub fn bias_add(&self, bias: &DiffValue<'t, T>) -> Result<DiffValue<'t, T>> {
        self.same_tape(bias)?;
        let value = kernels::bias_add(&self.value, &bias.value)?;
        Ok(self.binary(bias, value, Op::BiasAdd { src: self.id, bias: bias.id }))
    }

    /// Reverse sweep from this (scalar) value. Returns the gradient of the
    /// value with respect to every gradient-requiring node recorded so far.
    pub fn backward(&self) -> Result<Gradients<T>> {
        if self.value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward() needs a scalar, got shape {:?}",
                self.value.shape()
            )));
        }
        let nodes = self.tape.nodes.borrow();
        let mut grads: Vec<Option<Array<T>>> = Vec::with_capacity(self.id + 1);
        grads.resize_with(self.id + 1, || None);
        grads[self.id] = Some(Array::full(self.value.shape(), T::one()));

        for id in (0..=self.id).rev() {
            if !nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let out = &nodes[id].value;
            match &nodes[id].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, &nodes, *a, g.clone())?;
                    accumulate(&mut grads, &nodes, *b, g.clone())?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, &nodes, *a, g.clone())?;
                    accumulate(&mut grads, &nodes, *b, g.map(|x| -x))?;
                }
                Op::Mul(a, b) => {
                    let ga = g.zip(&nodes[*b].value, |g, b| g * b)?;
                    let gb = g.zip(&nodes[*a].value, |g, a| g * a)?;
                    accumulate(&mut grads, &nodes, *a, ga)?;
                    accumulate(&mut grads, &nodes, *b, gb)?;
                }
                Op::Div(a, b) => {
                    let ga = g.zip(&nodes[*b].value, |g, b| g / b)?;
                    let gb = g
                        .zip(&nodes[*a].value, |g, a| g * a)?
                        .zip(&nodes[*b].value, |x, b| -x / (b * b))?;
                    accumulate(&mut grads, &nodes, *a, ga)?;
                    accumulate(&mut grads, &nodes, *b, gb)?;
                }
                Op::Neg(a) => accumulate(&mut grads, &nodes, *a, g.map(|x| -x))?,
                Op::Exp(a) => {
                    accumulate(&mut grads, &nodes, *a, g.zip(out, |g, y| g * y)?)?;
                }
                Op::Ln(a) => {
                    let ga = g.zip(&nodes[*a].value, |g, x| g / x)?;
                    accumulate(&mut grads, &nodes, *a, ga)?;
                }
                Op::Abs(a) => {
                    let ga = g.zip(&nodes[*a].value, |g, x| {
                        if x > T::zero() {
                            g
                        } else if x < T::zero() {
                            -g
                        } else {
                            T::zero()
                        }
                    })?;
                    accumulate(&mut grads, &nodes, *a, ga)?;
                }
                Op::Relu(a) => {
                    let ga = g.zip(&nodes[*a].value, |g, x| {
                        if x > T::zero() {
                            g
                        } else {
                            T::zero()
                        }
                    })?;
                    accumulate(&mut grads, &nodes, *a, ga)?;
                }
                Op::Softplus(a) => {
                    let ga = g.zip(&nodes[*a].value, |g, x| g * sigmoid(x))?;
                    accumulate(&mut grads, &nodes, *a, ga)?;
                }
                Op::Tanh(a) => {
                    let ga = g.zip(out, |g, y| g * (T::one() - y * y))?;
                    accumulate(&mut grads, &nodes, *a, ga)?;
                }
                Op::Digamma(a) => {
                    let ga = g.zip(&nodes[*a].value, |g, x| g * special::trigamma(x))?;
                    accumulate(&mut grads, &nodes, *a, ga)?;
                }
                Op::LnGamma(a) => {
                    let ga = g.zip(&nodes[*a].value, |g, x| g * special::digamma(x))?;
                    accumulate(&mut grads, &nodes, *a, ga)?;
                }
                Op::AddScalar(a, _) => accumulate(&mut grads, &nodes, *a, g.clone())?,
                Op::MulScalar(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, &nodes, *a, g.map(|x| x * c))?;
                }
                Op::RsubScalar(_, a) => accumulate(&mut grads, &nodes, *a, g.map(|x| -x))?,
                Op::RdivScalar(c, a) => {
                    let c = *c;
                    let ga = g.zip(&nodes[*a].value, |g, x| -g * c / (x * x))?;
                    accumulate(&mut grads, &nodes, *a, ga)?;
                }
                Op::ClampMin(a, c) => {
                    let c = *c;
                    let ga =
                        g.zip(&nodes[*a].value, |g, x| if x >= c { g } else { T::zero() })?;
                    accumulate(&mut grads, &nodes, *a, ga)?;
                }
                Op::ClampMax(a, c) => {
                    let c = *c;
                    let ga =
                        g.zip(&nodes[*a].value, |g, x| if x <= c { g } else { T::zero() })?;
                    accumulate(&mut grads, &nodes, *a, ga)?;
                }
                Op::SumAll(a) => {
                    let ga = Array::full(nodes[*a].value.shape(), g.item()?);
                    accumulate(&mut grads, &nodes, *a, ga)?;
                }
                Op::MeanAll(a) => {
                    let n = T::of(nodes[*a].value.numel() as f64);
                    let ga = Array::full(nodes[*a].value.shape(), g.item()? / n);
                    accumulate(&mut grads, &nodes, *a, ga)?;
                }
                Op::SumAxes { src, axes } => {
                    let src_shape = nodes[*src].value.shape();
                    let mut kept = src_shape.to_vec();
                    for &ax in axes {
                        kept[ax] = 1;
                    }
                    // Re-inserting the reduced axes as size 1 leaves the
                    // row-major layout unchanged, so this is a free reshape.
                    let mut ga = Array::from_vec(kept, g.data().to_vec())?;
                    for &ax in axes {
                        if src_shape[ax] != 1 {
                            ga = ga.expand_axis(ax, src_shape[ax])?;
                        }
                    }
                    accumulate(&mut grads, &nodes, *src, ga)?;
                }
                Op::ExpandAxis { src, axis } => {
                    let ga = g.sum_axes(&[*axis], true)?;
                    accumulate(&mut grads, &nodes, *src, ga)?;
                }
                Op::Narrow { src, axis, start } => {
                    let mut ga = Array::zeros(nodes[*src].value.shape());
                    ga.narrow_add_assign(&g, *axis, *start)?;
                    accumulate(&mut grads, &nodes, *src, ga)?;
                }
                Op::Softmax { src, axis } => {
                    let ga = kernels::softmax_backward(out, &g, *axis)?;
                    accumulate(&mut grads, &nodes, *src, ga)?;
                }
                Op::Conv2d { input, kernel, stride, padding } => {
                    if nodes[*input].requires_grad {
                        let ga = kernels::conv2d_backward_input(
                            &nodes[*kernel].value,
                            &g,
                            nodes[*input].value.shape(),
                            *stride,
                            *padding,
                        )?;
                        accumulate(&mut grads, &nodes, *input, ga)?;
                    }
                    if nodes[*kernel].requires_grad {
                        let gk = kernels::conv2d_backward_kernel(
                            &nodes[*input].value,
                            &g,
                            nodes[*kernel].value.shape(),
                            *stride,
                            *padding,
                        )?;
                        accumulate(&mut grads, &nodes, *kernel, gk)?;
                    }
                }
                Op::BiasAdd { src, bias } => {
                    if nodes[*bias].requires_grad {
                        accumulate(&mut grads, &nodes, *bias, kernels::bias_backward(&g)?)?;
                    }
                    accumulate(&mut grads, &nodes, *src, g.clone())?;
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tape<f64>;

    fn arr(shape: &[usize], data: &[f64]) -> Array<f64> {
        Array::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    /// Central difference of a scalar function of one flat parameter vector.
    fn numeric_grad(f: impl Fn(&[f64]) -> f64, at: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..at.len())
            .map(|i| {
                let mut p = at.to_vec();
                p[i] = at[i] + h;
                let fp = f(&p);
                p[i] = at[i] - h;
                let fm = f(&p);
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    fn assert_grads_close(analytic: &[f64], numeric: &[f64], tol: f64) {
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            let err = (a - n).abs();
            let scale = a.abs().max(n.abs()).max(1.0);
            assert!(err <= tol * scale, "grad[{i}]: analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn forward_values_and_hand_gradient() {
        // f = sum((a * b + c)²) with a,b,c length-3 vectors.
        let tape = T64::new();
        let a = tape.var(arr(&[3], &[1.0, -2.0, 3.0]));
        let b = tape.var(arr(&[3], &[4.0, 5.0, -6.0]));
        let c = tape.var(arr(&[3], &[0.5, 0.0, -0.5]));
        let ab = a.mul(&b).unwrap();
        let s = ab.add(&c).unwrap();
        let f = s.mul(&s).unwrap().sum_all();
        // s = [4.5, -10, -18.5], f = 20.25 + 100 + 342.25
        assert!((f.item().unwrap() - 462.5).abs() < 1e-12);
        let grads = f.backward().unwrap();
        // df/da = 2 s b, df/db = 2 s a, df/dc = 2 s
        let s_vals = [4.5, -10.0, -18.5];
        let ga = grads.get(&a).unwrap();
        let gb = grads.get(&b).unwrap();
        let gc = grads.get(&c).unwrap();
        for i in 0..3 {
            assert!((ga.data()[i] - 2.0 * s_vals[i] * b.value().data()[i]).abs() < 1e-12);
            assert!((gb.data()[i] - 2.0 * s_vals[i] * a.value().data()[i]).abs() < 1e-12);
            assert!((gc.data()[i] - 2.0 * s_vals[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_broadcast_reduces_gradient() {
        // f = sum(v * s) where s is a broadcast scalar: df/ds = sum(v).
        let tape = T64::new();
        let v = tape.var(arr(&[4], &[1.0, 2.0, 3.0, 4.0]));
        let s = tape.var(Array::scalar(2.0));
        let f = v.mul(&s).unwrap().sum_all();
        assert!((f.item().unwrap() - 20.0).abs() < 1e-12);
        let grads = f.backward().unwrap();
        assert_eq!(grads.get(&s).unwrap().shape(), &[1]);
        assert!((grads.get(&s).unwrap().data()[0] - 10.0).abs() < 1e-12);
        assert_eq!(grads.get(&v).unwrap().data(), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn elementwise_chain_matches_finite_difference() {
        let at = [0.3, 1.7, 2.4, 0.9];
        let f = |p: &[f64]| {
            let tape = T64::new();
            let x = tape.var(arr(&[4], p));
            // Exercise softplus, tanh, exp-family, logs and the gamma
            // functions.
            let a = x.softplus().add(&x.tanh()).unwrap();
            let b = a.add_scalar(1.0);
            let c = b.digamma().mul(&b.ln_gamma()).unwrap();
            let d = x.mul_scalar(0.5).exp().add(&c).unwrap();
            d.ln().mean_all().item().unwrap()
        };
        let tape = T64::new();
        let x = tape.var(arr(&[4], &at));
        let a = x.softplus().add(&x.tanh()).unwrap();
        let b = a.add_scalar(1.0);
        let c = b.digamma().mul(&b.ln_gamma()).unwrap();
        let d = x.mul_scalar(0.5).exp().add(&c).unwrap();
        let loss = d.ln().mean_all();
        let grads = loss.backward().unwrap();
        assert_grads_close(grads.get(&x).unwrap().data(), &numeric_grad(f, &at), 1e-6);
    }

    #[test]
    fn division_and_reciprocal_match_finite_difference() {
        let at = [1.5, 0.8, 2.2, 3.1, 0.4, 1.0];
        let f = |p: &[f64]| {
            let tape = T64::new();
            let x = tape.var(arr(&[2, 3], p));
            let s = x.sum_axes(&[1], true).unwrap();
            let sx = s.expand_axis(1, 3).unwrap();
            let ratio = x.div(&sx).unwrap();
            let inv = x.rdiv_scalar(2.0);
            ratio.add(&inv).unwrap().rsub_scalar(1.0).mul(&ratio).unwrap().sum_all().item().unwrap()
        };
        let tape = T64::new();
        let x = tape.var(arr(&[2, 3], &at));
        let s = x.sum_axes(&[1], true).unwrap();
        let sx = s.expand_axis(1, 3).unwrap();
        let ratio = x.div(&sx).unwrap();
        let inv = x.rdiv_scalar(2.0);
        let loss =
            ratio.add(&inv).unwrap().rsub_scalar(1.0).mul(&ratio).unwrap().sum_all();
        let grads = loss.backward().unwrap();
        assert_grads_close(grads.get(&x).unwrap().data(), &numeric_grad(f, &at), 1e-6);
    }

    #[test]
    fn softmax_narrow_and_abs_match_finite_difference() {
        let at = [0.2, -1.1, 0.7, 1.9, -0.3, 0.05, -0.6, 1.2];
        let f = |p: &[f64]| {
            let tape = T64::new();
            let x = tape.var(arr(&[2, 4], p));
            let sm = x.softmax(1).unwrap();
            let left = sm.narrow(1, 0, 2).unwrap();
            let right = sm.narrow(1, 2, 2).unwrap();
            left.sub(&right).unwrap().abs().mean_all().item().unwrap()
        };
        let tape = T64::new();
        let x = tape.var(arr(&[2, 4], &at));
        let sm = x.softmax(1).unwrap();
        let left = sm.narrow(1, 0, 2).unwrap();
        let right = sm.narrow(1, 2, 2).unwrap();
        let loss = left.sub(&right).unwrap().abs().mean_all();
        let grads = loss.backward().unwrap();
        assert_grads_close(grads.get(&x).unwrap().data(), &numeric_grad(f, &at), 1e-6);
    }

    #[test]
    fn conv_bias_relu_stack_matches_finite_difference() {
        // Tiny conv net: conv(3x3, pad 1) + bias + relu + mean.
        let input = [
            0.5, -0.2, 0.8, 0.1, -0.7, 0.3, 0.9, -0.4, 0.6, -0.1, 0.2, 0.4, -0.9, 0.7, -0.3,
            0.05,
        ];
        let kernel0: Vec<f64> = (0..18).map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0).collect();
        let bias0 = [0.1, -0.2];
        // Pack all parameters into one flat vector for the numeric check.
        let mut flat = Vec::new();
        flat.extend_from_slice(&kernel0);
        flat.extend_from_slice(&bias0);
        let eval = |p: &[f64]| -> (f64, Option<(Vec<f64>, Vec<f64>)>) {
            let tape = T64::new();
            let x = tape.constant(arr(&[1, 1, 4, 4], &input));
            let k = tape.var(arr(&[2, 1, 3, 3], &p[..18]));
            let b = tape.var(arr(&[2], &p[18..]));
            let y = x.conv2d(&k, 1, 1).unwrap().bias_add(&b).unwrap().relu();
            let loss = y.mul(&y).unwrap().mean_all();
            let v = loss.item().unwrap();
            let grads = loss.backward().unwrap();
            let gk = grads.get(&k).unwrap().data().to_vec();
            let gb = grads.get(&b).unwrap().data().to_vec();
            (v, Some((gk, gb)))
        };
        let (_, analytic) = eval(&flat);
        let (gk, gb) = analytic.unwrap();
        let numeric = numeric_grad(|p| eval(p).0, &flat);
        assert_grads_close(&gk, &numeric[..18], 1e-6);
        assert_grads_close(&gb, &numeric[18..], 1e-6);
    }

    #[test]
    fn detach_freezes_the_guide_branch() {
        // f = sum(detach(x) * x): gradient is x, not 2x.
        let tape = T64::new();
        let x = tape.var(arr(&[3], &[1.0, 2.0, 3.0]));
        let frozen = x.detach();
        assert!(!frozen.requires_grad());
        let f = frozen.mul(&x).unwrap().sum_all();
        let grads = f.backward().unwrap();
        assert_eq!(grads.get(&x).unwrap().data(), &[1.0, 2.0, 3.0]);
        assert!(grads.get(&frozen).is_none());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = T64::new();
        let x = tape.var(arr(&[2], &[1.0, 2.0]));
        let c = tape.constant(arr(&[2], &[3.0, 4.0]));
        let f = x.mul(&c).unwrap().sum_all();
        let grads = f.backward().unwrap();
        assert!(grads.get(&c).is_none());
        assert_eq!(grads.get(&x).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn clamp_gates_gradient_flow() {
        let tape = T64::new();
        let x = tape.var(arr(&[4], &[0.5, 2.0, -1.0, 3.0]));
        let f = x.clamp_min(1.0).clamp_max(2.5).sum_all();
        assert!((f.item().unwrap() - (1.0 + 2.0 + 1.0 + 2.5)).abs() < 1e-12);
        let grads = f.backward().unwrap();
        // 0.5 and -1.0 are floored, 3.0 is capped; only 2.0 passes both gates.
        assert_eq!(grads.get(&x).unwrap().data(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn sum_axes_gradient_broadcasts_back() {
        let tape = T64::new();
        let x = tape.var(arr(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let f = x.sum_axes(&[0], false).unwrap().mul_scalar(2.0).sum_all();
        let grads = f.backward().unwrap();
        assert_eq!(grads.get(&x).unwrap().data(), &[2.0; 6]);
    }

    #[test]
    fn value_reuse_accumulates_gradients() {
        // f = sum(x) + mean(x): df/dx_i = 1 + 1/n.
        let tape = T64::new();
        let x = tape.var(arr(&[4], &[1.0, 2.0, 3.0, 4.0]));
        let f = x.sum_all().add(&x.mean_all()).unwrap();
        let grads = f.backward().unwrap();
        assert_eq!(grads.get(&x).unwrap().data(), &[1.25; 4]);
    }

    #[test]
    fn backward_rejects_non_scalars() {
        let tape = T64::new();
        let x = tape.var(arr(&[2], &[1.0, 2.0]));
        assert!(matches!(x.backward(), Err(Error::Contract(_))));
    }

    #[test]
    fn mixing_tapes_is_an_error() {
        let t1 = T64::new();
        let t2 = T64::new();
        let a = t1.var(arr(&[1], &[1.0]));
        let b = t2.var(arr(&[1], &[2.0]));
        assert!(matches!(a.add(&b), Err(Error::Contract(_))));
    }

    #[test]
    fn gradients_survive_for_intermediate_nodes() {
        // The sweep keeps per-node gradients so diagnostics can read them.
        let tape = T64::new();
        let x = tape.var(arr(&[2], &[1.0, 2.0]));
        let y = x.mul_scalar(3.0);
        let f = y.sum_all();
        let grads = f.backward().unwrap();
        assert_eq!(grads.get(&y).unwrap().data(), &[1.0, 1.0]);
        assert_eq!(grads.get(&x).unwrap().data(), &[3.0, 3.0]);
    }
}
