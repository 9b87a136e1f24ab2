//! Tape-based reverse-mode differentiation over whole-tensor operations.
//!
//! A [`Tape`] is built fresh for every forward pass. Parameters are bound
//! lazily from a [`ParamStore`] the first time a layer asks for them, and
//! [`Tape::backward`] returns one gradient per bound parameter.

use crate::error::{Error, Result};
use crate::ops::attention::{self, add_position_bias, merge_heads, split_heads};
use crate::ops::conv::{conv2d_backward, conv2d_forward, ConvGeometry};
use crate::ops::dense::{self, bmm};
use crate::ops::elementwise::{activation, activation_backward, Activation};
use crate::ops::loss::{self, DiceSums};
use crate::ops::norm::{self, NormStats};
use crate::ops::spatial;
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geometry: ConvGeometry,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Add(Var, Var),
    Scale(Var, T),
    MulGate {
        x: Var,
        gate: Var,
    },
    Activation(Var, Activation),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        stats: NormStats<T>,
    },
    ChannelStats {
        x: Var,
        argmax: Vec<usize>,
    },
    SliceChannels {
        x: Var,
        start: usize,
    },
    Concat(Vec<Var>),
    Roll {
        x: Var,
        dy: isize,
        dx: isize,
    },
    WindowPartition {
        x: Var,
        m: usize,
    },
    WindowReverse {
        x: Var,
        m: usize,
    },
    Upsample(Var),
    Reshape(Var),
    SplitHeads {
        x: Var,
        offset: usize,
        heads: usize,
        dh: usize,
    },
    MergeHeads {
        x: Var,
        heads: usize,
    },
    Bmm {
        a: Var,
        b: Var,
        transpose_b: bool,
    },
    PositionBias {
        scores: Var,
        table: Var,
        index: Vec<usize>,
        heads: usize,
    },
    Sum(Var),
    Dot {
        x: Var,
        weights: Tensor<T>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Tensor<T>,
    },
    Dice {
        logits: Var,
        targets: Vec<usize>,
        probs: Tensor<T>,
        sums: DiceSums<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recorded computation; confined to the thread that builds it.
#[derive(Debug)]
pub struct Tape<'s, T: Scalar> {
    store: &'s ParamStore<T>,
    nodes: Vec<Node<T>>,
    bound: Vec<Option<Var>>,
    weight_grad_fault: Option<T>,
    branches: Option<Vec<u32>>,
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    bound: Vec<Option<Var>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads[var.0].as_ref()
    }

    /// Gradient of a parameter, or `None` when it did not take part.
    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.bound
            .get(id.0)
            .copied()
            .flatten()
            .and_then(|v| self.grads[v.0].as_ref())
    }

    /// Per-parameter gradients aligned with store order.
    pub fn into_param_grads(mut self) -> Vec<Option<Tensor<T>>> {
        let bound = std::mem::take(&mut self.bound);
        bound
            .into_iter()
            .map(|v| v.and_then(|v| self.grads[v.0].take()))
            .collect()
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

impl<'s, T: Scalar> Tape<'s, T> {
    pub fn new(store: &'s ParamStore<T>) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            bound: vec![None; store.len()],
            weight_grad_fault: None,
            branches: None,
        }
    }

    /// Starts recording which side of every non-differentiable point the
    /// forward pass takes (LeakyReLU input signs, channel-max winners).
    pub fn record_branches(&mut self) {
        self.branches.get_or_insert_with(Vec::new);
    }

    /// Branch pattern recorded since [`Tape::record_branches`]; two evaluations
    /// with equal patterns lie on the same smooth piece of the function.
    pub fn branch_pattern(&self) -> Option<&[u32]> {
        self.branches.as_deref()
    }

    pub fn store(&self) -> &'s ParamStore<T> {
        self.store
    }

    /// Test fixture: scales every conv-weight gradient by `factor` during
    /// backward, producing a deliberately wrong derivative.
    #[doc(hidden)]
    pub fn inject_weight_grad_fault(&mut self, factor: T) {
        self.weight_grad_fault = Some(factor);
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf for a stored parameter (bound once per tape).
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: self.store.value(id).clone(),
            op: Op::Leaf,
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.bound[id.0] = Some(v);
        v
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let geometry = ConvGeometry::new(
            self.shape(input),
            self.shape(weight),
            bias.map(|b| self.shape(b)),
            stride,
            padding,
        )?;
        let out = conv2d_forward(
            &geometry,
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
        );
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                geometry,
            },
            &inputs,
        ))
    }

    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let out = dense::linear(self.value(input), self.value(weight), bias.map(|b| self.value(b)))?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push(out, Op::Linear { input, weight, bias }, &inputs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "add operands {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x, factor), &[x])
    }

    /// `x ⊙ gate` with a `[n,1,h,w]` gate broadcast over channels.
    pub fn mul_gate(&mut self, x: Var, gate: Var) -> Result<Var> {
        let out = spatial::mul_channel_broadcast(self.value(x), self.value(gate))?;
        Ok(self.push(out, Op::MulGate { x, gate }, &[x, gate]))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        if let (Some(rec), Activation::LeakyRelu(_)) = (self.branches.as_mut(), kind) {
            rec.extend(self.nodes[x.0].value.data().iter().map(|&v| u32::from(v >= T::zero())));
        }
        let out = activation(self.value(x), kind);
        self.push(out, Op::Activation(x, kind), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.activation(x, Activation::LeakyRelu(slope))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Gelu)
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let out = norm::softmax(self.value(x))?;
        Ok(self.push(out, Op::Softmax(x), &[x]))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (out, stats) = norm::layer_norm_forward(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                stats,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn channel_stats(&mut self, x: Var) -> Result<Var> {
        let (out, argmax) = spatial::channel_stats_forward(self.value(x))?;
        if let Some(rec) = self.branches.as_mut() {
            rec.extend(argmax.iter().map(|&a| a as u32));
        }
        Ok(self.push(out, Op::ChannelStats { x, argmax }, &[x]))
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = spatial::slice_channels(self.value(x), start, len)?;
        Ok(self.push(out, Op::SliceChannels { x, start }, &[x]))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = spatial::concat_channels(&values)?;
        Ok(self.push(out, Op::Concat(parts.to_vec()), parts))
    }

    pub fn roll(&mut self, x: Var, dy: isize, dx: isize) -> Result<Var> {
        let out = spatial::roll(self.value(x), dy, dx)?;
        Ok(self.push(out, Op::Roll { x, dy, dx }, &[x]))
    }

    pub fn window_partition(&mut self, x: Var, m: usize) -> Result<Var> {
        let out = spatial::window_partition(self.value(x), m)?;
        Ok(self.push(out, Op::WindowPartition { x, m }, &[x]))
    }

    pub fn window_reverse(&mut self, x: Var, m: usize, dims: [usize; 4]) -> Result<Var> {
        let [n, c, h, w] = dims;
        let out = spatial::window_reverse(self.value(x), m, n, c, h, w)?;
        Ok(self.push(out, Op::WindowReverse { x, m }, &[x]))
    }

    pub fn upsample_nearest2x(&mut self, x: Var) -> Result<Var> {
        let out = spatial::upsample_nearest2x(self.value(x))?;
        Ok(self.push(out, Op::Upsample(x), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    pub fn split_heads(&mut self, x: Var, offset: usize, heads: usize, dh: usize) -> Result<Var> {
        let out = split_heads(self.value(x), offset, heads, dh)?;
        Ok(self.push(out, Op::SplitHeads { x, offset, heads, dh }, &[x]))
    }

    pub fn merge_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        let out = merge_heads(self.value(x), heads)?;
        Ok(self.push(out, Op::MergeHeads { x, heads }, &[x]))
    }

    pub fn bmm(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let out = bmm(self.value(a), self.value(b), transpose_b)?;
        Ok(self.push(out, Op::Bmm { a, b, transpose_b }, &[a, b]))
    }

    /// Adds relative position bias from `table` and an optional constant
    /// additive mask to attention scores `[windows·heads, T, T]`.
    pub fn position_bias(
        &mut self,
        scores: Var,
        table: Var,
        index: Vec<usize>,
        mask: Option<&Tensor<T>>,
        heads: usize,
    ) -> Result<Var> {
        let out = add_position_bias(self.value(scores), self.value(table), &index, mask, heads)?;
        Ok(self.push(
            out,
            Op::PositionBias {
                scores,
                table,
                index,
                heads,
            },
            &[scores, table],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x), &[x])
    }

    /// `Σ x ⊙ weights` with constant weights.
    pub fn dot(&mut self, x: Var, weights: Tensor<T>) -> Result<Var> {
        if weights.shape() != self.shape(x) {
            return Err(Error::shape(format!(
                "dot weights {:?} do not match {:?}",
                weights.shape(),
                self.shape(x)
            )));
        }
        // Neumaier summation keeps the result stable under tiny perturbations of x
        let (mut total, mut carry) = (T::zero(), T::zero());
        for (&a, &b) in self.value(x).data().iter().zip(weights.data()) {
            let term = a * b;
            let t = total + term;
            carry += if total.abs() >= term.abs() {
                (total - t) + term
            } else {
                (term - t) + total
            };
            total = t;
        }
        let total = total + carry;
        Ok(self.push(Tensor::scalar(total), Op::Dot { x, weights }, &[x]))
    }

    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let value = loss::cross_entropy(self.value(logits), targets)?;
        let probs = loss::pixel_softmax(self.value(logits));
        Ok(self.push(
            Tensor::scalar(value),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    pub fn dice_loss(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        loss::validate_targets(self.value(logits), targets)?;
        let probs = loss::pixel_softmax(self.value(logits));
        let sums = loss::dice_sums(&probs, targets);
        let value = loss::dice_from_sums(&sums);
        Ok(self.push(
            Tensor::scalar(value),
            Op::Dice {
                logits,
                targets: targets.to_vec(),
                probs,
                sums,
            },
            &[logits],
        ))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        if self.value(output).len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar output, got shape {:?}",
                self.shape(output)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::full(self.shape(output), T::one()));
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let contributions = self.vjp(node, &g);
            for (var, dv) in contributions {
                if self.nodes[var.0].needs_grad {
                    accumulate(&mut grads[var.0], dv);
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            bound: self.bound.clone(),
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn vjp(&self, node: &Node<T>, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let gd = g.data();
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geometry,
            } => {
                let want = [self.wants(*input), self.wants(*weight), bias.is_some_and(|b| self.wants(b))];
                let grads = conv2d_backward(
                    geometry,
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    gd,
                    want,
                );
                out.extend(grads.input.map(|d| (*input, d)));
                if let Some(mut dw) = grads.weight {
                    if let Some(f) = self.weight_grad_fault {
                        dw = dw.map(|v| v * f);
                    }
                    out.push((*weight, dw));
                }
                if let (Some(b), Some(db)) = (bias, grads.bias) {
                    out.push((*b, db));
                }
            }
            Op::Linear { input, weight, bias } => {
                let want = [self.wants(*input), self.wants(*weight), bias.is_some_and(|b| self.wants(b))];
                let (dx, dw, db) = dense::linear_backward(self.value(*input), self.value(*weight), gd, want);
                out.extend(dx.map(|d| (*input, d)));
                out.extend(dw.map(|d| (*weight, d)));
                if let (Some(b), Some(db)) = (bias, db) {
                    out.push((*b, db));
                }
            }
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Scale(x, f) => out.push((*x, g.map(|v| v * *f))),
            Op::MulGate { x, gate } => {
                let xv = self.value(*x);
                let gv = self.value(*gate);
                let [n, c, h, w] = xv.dims4().expect("rank 4");
                let plane = h * w;
                if self.wants(*x) {
                    out.push((*x, spatial::mul_channel_broadcast(g, gv).expect("validated")));
                }
                if self.wants(*gate) {
                    let mut dg = Tensor::zeros(gv.shape());
                    for b in 0..n {
                        let acc = &mut dg.data_mut()[b * plane..(b + 1) * plane];
                        for ch in 0..c {
                            let base = (b * c + ch) * plane;
                            for p in 0..plane {
                                acc[p] += gd[base + p] * xv.data()[base + p];
                            }
                        }
                    }
                    out.push((*gate, dg));
                }
            }
            Op::Activation(x, kind) => {
                out.push((*x, activation_backward(*kind, self.value(*x), &node.value, gd)));
            }
            Op::Softmax(x) => out.push((*x, norm::softmax_backward(&node.value, gd))),
            Op::LayerNorm { x, gamma, beta, stats } => {
                let (dx, dgamma, dbeta) = norm::layer_norm_backward(self.value(*x), self.value(*gamma), stats, gd);
                out.push((*x, dx));
                out.push((*gamma, dgamma));
                out.push((*beta, dbeta));
            }
            Op::ChannelStats { x, argmax } => {
                let dims = self.value(*x).dims4().expect("rank 4");
                out.push((*x, spatial::channel_stats_backward(dims, argmax, gd)));
            }
            Op::SliceChannels { x, start } => {
                let [n, c, h, w] = self.value(*x).dims4().expect("rank 4");
                let len = node.value.shape()[1];
                let plane = h * w;
                let mut dx = Tensor::zeros(&[n, c, h, w]);
                for b in 0..n {
                    dx.data_mut()[(b * c + start) * plane..(b * c + start + len) * plane]
                        .copy_from_slice(&gd[b * len * plane..(b + 1) * len * plane]);
                }
                out.push((*x, dx));
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for &p in parts {
                    let len = self.shape(p)[1];
                    out.push((p, spatial::slice_channels(g, start, len).expect("validated")));
                    start += len;
                }
            }
            Op::Roll { x, dy, dx } => out.push((*x, spatial::roll(g, -dy, -dx).expect("rank 4"))),
            Op::WindowPartition { x, m } => {
                let [n, c, h, w] = self.value(*x).dims4().expect("rank 4");
                out.push((*x, spatial::window_reverse(g, *m, n, c, h, w).expect("validated")));
            }
            Op::WindowReverse { x, m } => out.push((*x, spatial::window_partition(g, *m).expect("validated"))),
            Op::Upsample(x) => {
                let dims = self.value(*x).dims4().expect("rank 4");
                out.push((*x, spatial::upsample_nearest2x_backward(dims, gd)));
            }
            Op::Reshape(x) => out.push((*x, g.clone().reshape(self.shape(*x)).expect("same size"))),
            Op::SplitHeads { x, offset, heads, dh } => {
                out.push((*x, attention::split_heads_backward(self.shape(*x), *offset, *heads, *dh, gd)));
            }
            Op::MergeHeads { x, heads } => {
                out.push((*x, attention::merge_heads_backward(self.shape(*x), *heads, gd)));
            }
            Op::Bmm { a, b, transpose_b } => {
                let (da, db) = dense::bmm_backward(
                    self.value(*a),
                    self.value(*b),
                    *transpose_b,
                    gd,
                    [self.wants(*a), self.wants(*b)],
                );
                out.extend(da.map(|d| (*a, d)));
                out.extend(db.map(|d| (*b, d)));
            }
            Op::PositionBias {
                scores,
                table,
                index,
                heads,
            } => {
                out.push((*scores, g.clone()));
                if self.wants(*table) {
                    out.push((
                        *table,
                        attention::position_bias_table_grad(self.shape(*table), index, *heads, gd),
                    ));
                }
            }
            Op::Sum(x) => out.push((*x, Tensor::full(self.shape(*x), gd[0]))),
            Op::Dot { x, weights } => out.push((*x, weights.map(|w| w * gd[0]))),
            Op::CrossEntropy { logits, targets, probs } => {
                out.push((*logits, loss::cross_entropy_backward(probs, targets, gd[0])));
            }
            Op::Dice {
                logits,
                targets,
                probs,
                sums,
            } => out.push((*logits, loss::dice_backward(probs, targets, sums, gd[0]))),
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;

    #[test]
    fn sum_of_parameters_has_unit_gradient() {
        let mut store = ParamStore::<f64>::new(0);
        let id = store.register("p", &[3], Init::FanIn(3)).unwrap();
        let mut tape = Tape::new(&store);
        let p = tape.param(id);
        let s = tape.sum(p);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.param(id).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn reused_value_accumulates() {
        let mut store = ParamStore::<f64>::new(0);
        let id = store.insert("p", Tensor::from_vec(&[2], vec![1.0, -2.0]).unwrap()).unwrap();
        let mut tape = Tape::new(&store);
        let p = tape.param(id);
        let q = tape.add(p, p).unwrap();
        let s = tape.sum(q);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.param(id).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn unused_parameter_has_no_gradient() {
        let mut store = ParamStore::<f64>::new(0);
        let a = store.register("a", &[1], Init::Ones).unwrap();
        let b = store.register("b", &[1], Init::Ones).unwrap();
        let mut tape = Tape::new(&store);
        let pa = tape.param(a);
        let s = tape.sum(pa);
        let grads = tape.backward(s).unwrap();
        assert!(grads.param(b).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let store = ParamStore::<f64>::new(0);
        let mut tape = Tape::new(&store);
        let c = tape.constant(Tensor::zeros(&[2]));
        assert!(tape.backward(c).is_err());
    }
}
