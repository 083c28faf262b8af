//! Reverse-mode differentiation over a recorded tape of tensor primitives.
//!
//! A [`Tape`] records each primitive application together with enough state
//! to run its backward rule. Parameters can be borrowed onto the tape, so a
//! forward pass does not copy weights. [`Tape::backward`] walks the records
//! in reverse and returns gradients for every leaf that requires them.

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::num_like::Element;
use crate::tensor::{Shape4, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value<'a, T> {
    Owned(Tensor<T>),
    Borrowed(&'a Tensor<T>),
}

impl<T> Value<'_, T> {
    fn get(&self) -> &Tensor<T> {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var },
    ConvTranspose { x: Var, w: Var, b: Var },
    MaxPool { x: Var, route: Vec<usize> },
    Concat { parts: Vec<Var> },
    Relu(Var),
    Sigmoid(Var),
    Mul(Var, Var),
    Sum(Var),
    Bce { pred: Var, target: Var },
    BceLogits { logits: Var, target: Var },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose { .. } => "conv2d_transpose",
            Op::MaxPool { .. } => "maxpool2",
            Op::Concat { .. } => "concat",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Mul(..) => "mul",
            Op::Sum(_) => "sum",
            Op::Bce { .. } => "bce",
            Op::BceLogits { .. } => "bce_with_logits",
        }
    }
}

struct Node<'a, T> {
    value: Value<'a, T>,
    op: Op,
    requires_grad: bool,
}

/// Records primitive applications for one forward/backward pass.
///
/// A tape is single-owner; backward may run once, after which the tape must
/// be [`reset`](Tape::reset) before it is reused.
pub struct Tape<'a, T> {
    nodes: Vec<Node<'a, T>>,
    consumed: bool,
}

impl<T: Element> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by leaf [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl<'a, T: Element> Tape<'a, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Clears every record so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        self.nodes[var.0].value.get()
    }

    fn push(&mut self, value: Value<'a, T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor<T>, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Value::Owned(value), op, requires_grad)
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Differentiable leaf owned by the tape.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(Value::Owned(value), Op::Leaf, true)
    }

    /// Non-differentiable input (data, targets).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(Value::Owned(value), Op::Leaf, false)
    }

    /// Differentiable leaf borrowed from a parameter store.
    pub fn param(&mut self, value: &'a Tensor<T>) -> Var {
        self.push(Value::Borrowed(value), Op::Leaf, true)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = ops::conv2d(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push_op(out, Op::Conv2d { x, w, b }, &[x, w, b]))
    }

    pub fn conv2d_transpose(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = ops::conv2d_transpose(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push_op(out, Op::ConvTranspose { x, w, b }, &[x, w, b]))
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let (out, route) = ops::maxpool2(self.value(x))?;
        Ok(self.push_op(out, Op::MaxPool { x, route }, &[x]))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|&v| self.value(v)).collect();
        let out = ops::concat_channels(&tensors)?;
        Ok(self.push_op(out, Op::Concat { parts: parts.to_vec() }, parts))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu(self.value(x));
        self.push_op(out, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = ops::sigmoid(self.value(x));
        self.push_op(out, Op::Sigmoid(x), &[x])
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::contract(format!(
                "mul: shapes {} and {} differ",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::from_vec(ta.shape(), data)?;
        Ok(self.push_op(out, Op::Mul(a, b), &[a, b]))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push_op(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Mean binary cross-entropy of probabilities (clamped).
    pub fn bce(&mut self, pred: Var, target: Var) -> Result<Var> {
        let loss = ops::bce(self.value(pred), self.value(target))?;
        Ok(self.push_op(Tensor::scalar(T::from_f64(loss)), Op::Bce { pred, target }, &[pred]))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)`, fused for stability.
    pub fn bce_with_logits(&mut self, logits: Var, target: Var) -> Result<Var> {
        let loss = ops::bce_with_logits(self.value(logits), self.value(target))?;
        Ok(self.push_op(
            Tensor::scalar(T::from_f64(loss)),
            Op::BceLogits { logits, target },
            &[logits],
        ))
    }

    /// Runs the backward pass from a scalar `loss`.
    ///
    /// Gradients are returned for every differentiable leaf that `loss`
    /// depends on. Calling this twice without [`reset`](Tape::reset) is an
    /// error.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::contract("backward already ran on this tape; reset it first"));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::contract("loss is not recorded on this tape"));
        }
        if !self.value(loss).is_scalar() {
            return Err(Error::contract(format!(
                "loss must be scalar, got shape {}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::ONE));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            log::trace!("backward {} #{idx}", node.op.name());
            for (var, contrib) in self.backward_node(node, &g) {
                accumulate(&mut grads[var.0], contrib);
            }
        }

        // only leaf gradients survive; intermediates were consumed above
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node<'a, T>, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b } => {
                let (gx, gw, gb) = ops::conv2d_backward(self.value(*x), self.value(*w), g, self.needs(*x));
                if let Some(gx) = gx {
                    out.push((*x, gx));
                }
                self.push_param_grads(&mut out, *w, gw, *b, gb);
            }
            Op::ConvTranspose { x, w, b } => {
                let (gx, gw, gb) = ops::conv2d_transpose_backward(self.value(*x), self.value(*w), g, self.needs(*x));
                if let Some(gx) = gx {
                    out.push((*x, gx));
                }
                self.push_param_grads(&mut out, *w, gw, *b, gb);
            }
            Op::MaxPool { x, route } => {
                if self.needs(*x) {
                    out.push((*x, ops::maxpool2_backward(self.value(*x).shape(), route, g)));
                }
            }
            Op::Concat { parts } => {
                let channels: Vec<usize> = parts.iter().map(|&p| self.value(p).shape().c).collect();
                let split = ops::split_channels(g, &channels).expect("concat gradient split");
                for (&p, gp) in parts.iter().zip(split) {
                    if self.needs(p) {
                        out.push((p, gp));
                    }
                }
            }
            Op::Relu(x) => out.push((*x, ops::relu_backward(self.value(*x), g))),
            Op::Sigmoid(x) => out.push((*x, ops::sigmoid_backward(node.value.get(), g))),
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let prod = |t: &Tensor<T>| {
                    let d = t.data().iter().zip(g.data()).map(|(&v, &gv)| v * gv).collect();
                    Tensor::from_vec(t.shape(), d).expect("same shape")
                };
                if self.needs(*a) {
                    out.push((*a, prod(tb)));
                }
                if self.needs(*b) {
                    out.push((*b, prod(ta)));
                }
            }
            Op::Sum(x) => {
                let gv = g.data()[0];
                out.push((*x, Tensor::full(self.value(*x).shape(), gv)));
            }
            Op::Bce { pred, target } => out.push((
                *pred,
                ops::bce_backward(self.value(*pred), self.value(*target), g.data()[0]),
            )),
            Op::BceLogits { logits, target } => out.push((
                *logits,
                ops::bce_with_logits_backward(self.value(*logits), self.value(*target), g.data()[0]),
            )),
        }
        out
    }

    fn push_param_grads(&self, out: &mut Vec<(Var, Tensor<T>)>, w: Var, gw: Tensor<T>, b: Var, gb: Tensor<T>) {
        if self.needs(w) {
            out.push((w, gw));
        }
        if self.needs(b) {
            let shape: Shape4 = self.value(b).shape();
            out.push((b, gb.reshape(shape).expect("bias gradient shape")));
        }
    }
}

fn accumulate<T: Element>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_loss_gradient_is_input() {
        let x = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![2., -1., 0.5]).unwrap();
        let w = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![0.3, 0.1, -4.]).unwrap();
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let wv = tape.leaf(w);
        let p = tape.mul(wv, xv).unwrap();
        let loss = tape.sum(p);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(wv).unwrap(), &x);
        assert!(grads.get(xv).is_none());
    }

    #[test]
    fn sigmoid_chain_rule_at_zero() {
        let mut tape = Tape::<f64>::new();
        let w = tape.leaf(Tensor::scalar(0.0));
        let s = tape.sigmoid(w);
        let loss = tape.sum(s);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[0.25]);
    }

    #[test]
    fn backward_twice_is_rejected_until_reset() {
        let mut tape = Tape::<f32>::new();
        let w = tape.leaf(Tensor::scalar(1.0));
        let loss = tape.sum(w);
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(Error::Contract(_))));
        tape.reset();
        let w = tape.leaf(Tensor::scalar(1.0));
        let loss = tape.sum(w);
        assert!(tape.backward(loss).is_ok());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::<f32>::new();
        let w = tape.leaf(Tensor::zeros([1, 1, 2, 2]));
        assert!(matches!(tape.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn reused_value_accumulates() {
        // loss = sum(w * w) -> d/dw = 2w
        let mut tape = Tape::<f64>::new();
        let w = tape.leaf(Tensor::from_vec([1, 1, 1, 2], vec![3., -2.]).unwrap());
        let sq = tape.mul(w, w).unwrap();
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[6., -4.]);
    }

    #[test]
    fn borrowed_params_get_gradients_of_same_shape() {
        let w = Tensor::<f32>::full([2, 1, 3, 3], 0.1);
        let b = Tensor::<f32>::zeros([2, 1, 1, 1]);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full([1, 1, 4, 4], 1.0));
        let wv = tape.param(&w);
        let bv = tape.param(&b);
        let y = tape.conv2d(x, wv, bv).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(wv).unwrap().shape(), w.shape());
        assert_eq!(grads.get(bv).unwrap().shape(), b.shape());
        assert_eq!(grads.get(bv).unwrap().data(), &[16.0, 16.0]);
    }
}
