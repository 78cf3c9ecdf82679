//! Computation record and forward evaluation of the primitive ops.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::{AutogradError, Tensor};
use crate::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    MatMul(Var, Var),
    Conv1d { x: Var, w: Var, cols: Vec<T>, pad: usize },
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    SumSquares(Var),
    SumAxis(Var, usize),
    MeanAxis(Var, usize),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Slice { x: Var, axis: usize, start: usize },
    Concat { inputs: Vec<Var>, axis: usize },
    Broadcast(Var),
    Gather { x: Var, axis: usize, indices: Vec<usize> },
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
}

#[derive(Debug)]
pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

/// Single-use reverse-mode tape.
///
/// Nodes are appended in evaluation order, so creation order is a valid
/// topological order. `backward` may run once; build a fresh graph for the
/// next evaluation.
#[derive(Debug)]
pub struct Graph<T> {
    pub(crate) nodes: Vec<Node<T>>,
    pub(crate) grads: Vec<Option<Vec<T>>>,
    pub(crate) backpropagated: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// `(outer, len, inner)` sizes around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Flat source offsets of a row-major walk over `shape` when stepping one
/// index along dimension `d` moves `strides[d]` in the source.
fn strided_map(shape: &[usize], strides: &[usize]) -> Vec<usize> {
    let n: usize = shape.iter().product();
    let Some((&inner, outer)) = shape.split_last() else {
        return vec![0];
    };
    if n == 0 {
        return Vec::new();
    }
    let inner_stride = strides[shape.len() - 1];
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; outer.len()];
    let mut base = 0;
    for _ in 0..n / inner {
        map.extend((0..inner).map(|k| base + k * inner_stride));
        for d in (0..outer.len()).rev() {
            idx[d] += 1;
            base += strides[d];
            if idx[d] < outer[d] {
                break;
            }
            base -= strides[d] * outer[d];
            idx[d] = 0;
        }
    }
    map
}

/// For every element of `out_shape`, the flat index of the source element
/// under numpy-style right-aligned broadcasting from `in_shape`.
pub(crate) fn broadcast_map(in_shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let offset = out_shape.len() - in_shape.len();
    let in_strides = strides(in_shape);
    let eff: Vec<usize> = (0..out_shape.len())
        .map(|d| {
            if d < offset || in_shape[d - offset] == 1 {
                0
            } else {
                in_strides[d - offset]
            }
        })
        .collect();
    strided_map(out_shape, &eff)
}

/// Flat source index for every element of the permuted tensor.
pub(crate) fn permute_map(in_shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
    let out_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    strided_map(&out_shape, &out_strides)
}

pub(crate) fn view2<T>(data: &[T], rows: usize, cols: usize) -> ArrayView2<'_, T> {
    ArrayView2::from_shape((rows, cols), data).expect("buffer matches matrix shape")
}

pub(crate) fn view2_mut<T>(data: &mut [T], rows: usize, cols: usize) -> ArrayViewMut2<'_, T> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("buffer matches matrix shape")
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> AutogradError {
    AutogradError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn invalid(op: &'static str, detail: impl Into<String>) -> AutogradError {
    AutogradError::InvalidArgument {
        op,
        detail: detail.into(),
    }
}

/// Numerically stable softmax over `axis`, optionally in log space.
fn softmax_impl<T: Scalar>(x: &Tensor<T>, axis: usize, log: bool) -> Vec<T> {
    let (outer, n, inner) = split_axis(x.shape(), axis);
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let max = (0..n).map(|k| src[at(k)]).fold(T::neg_infinity(), T::max);
            let sum: T = (0..n).map(|k| (src[at(k)] - max).exp()).sum();
            if log {
                let lse = max + sum.ln();
                for k in 0..n {
                    out[at(k)] = src[at(k)] - lse;
                }
            } else {
                for k in 0..n {
                    out[at(k)] = (src[at(k)] - max).exp() / sum;
                }
            }
        }
    }
    out
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backpropagated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, op, rg)
    }

    /// Leaf whose gradient is recorded by `backward`.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to a leaf variable.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    fn binary_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutogradError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch(op, sa, sb));
        }
        Ok(())
    }

    fn map_unary(&self, a: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let x = self.value(a);
        Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect()).expect("same shape")
    }

    fn zip_binary(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.binary_same_shape("add", a, b)?;
        let v = self.zip_binary(a, b, |p, q| p + q);
        Ok(self.derived(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.binary_same_shape("sub", a, b)?;
        let v = self.zip_binary(a, b, |p, q| p - q);
        Ok(self.derived(v, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.binary_same_shape("mul", a, b)?;
        let v = self.zip_binary(a, b, |p, q| p * q);
        Ok(self.derived(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.map_unary(a, |x| x * s);
        self.derived(v, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let v = self.map_unary(a, |x| x + s);
        self.derived(v, Op::AddScalar(a), &[a])
    }

    /// `(m, k) x (k, n) -> (m, n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        general_mat_mul(
            T::one(),
            &view2(self.value(a).data(), m, k),
            &view2(self.value(b).data(), k, n),
            T::zero(),
            &mut view2_mut(&mut out, m, n),
        );
        let v = Tensor::new(vec![m, n], out)?;
        Ok(self.derived(v, Op::MatMul(a, b), &[a, b]))
    }

    /// Temporal convolution with zero "same" padding.
    ///
    /// `x: (batch, time, c_in)`, `w: (kernel, c_in, c_out)` with odd `kernel`;
    /// output `(batch, time, c_out)`.
    pub fn conv1d(&mut self, x: Var, w: Var) -> Result<Var, AutogradError> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 || sx[2] != sw[1] {
            return Err(mismatch("conv1d", &sx, &sw));
        }
        let (b, t, cin) = (sx[0], sx[1], sx[2]);
        let (k, cout) = (sw[0], sw[2]);
        if k % 2 == 0 {
            return Err(invalid("conv1d", format!("kernel size {k} must be odd")));
        }
        let pad = k / 2;
        let width = k * cin;
        let src = self.value(x).data();
        let mut cols = vec![T::zero(); b * t * width];
        for bi in 0..b {
            for ti in 0..t {
                let row = &mut cols[(bi * t + ti) * width..(bi * t + ti + 1) * width];
                for ki in 0..k {
                    let s = ti + ki;
                    if s < pad || s - pad >= t {
                        continue;
                    }
                    let from = (bi * t + s - pad) * cin;
                    row[ki * cin..(ki + 1) * cin].copy_from_slice(&src[from..from + cin]);
                }
            }
        }
        let mut out = vec![T::zero(); b * t * cout];
        general_mat_mul(
            T::one(),
            &view2(&cols, b * t, width),
            &view2(self.value(w).data(), width, cout),
            T::zero(),
            &mut view2_mut(&mut out, b * t, cout),
        );
        let v = Tensor::new(vec![b, t, cout], out)?;
        Ok(self.derived(v, Op::Conv1d { x, w, cols, pad }, &[x, w]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.map_unary(a, |x| if x > T::zero() { x } else { T::zero() });
        self.derived(v, Op::Relu(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.map_unary(a, T::tanh);
        self.derived(v, Op::Tanh(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.map_unary(a, T::exp);
        self.derived(v, Op::Exp(a), &[a])
    }

    /// Natural log; every input must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var, AutogradError> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| !(x > T::zero())) {
            return Err(AutogradError::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        let v = self.map_unary(a, T::ln);
        Ok(self.derived(v, Op::Log(a), &[a]))
    }

    /// Square root; inputs must be non-negative. The gradient at 0 is taken as 0.
    pub fn sqrt(&mut self, a: Var) -> Result<Var, AutogradError> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| !(x >= T::zero())) {
            return Err(AutogradError::Domain {
                op: "sqrt",
                detail: format!("negative input {bad}"),
            });
        }
        let v = self.map_unary(a, T::sqrt);
        Ok(self.derived(v, Op::Sqrt(a), &[a]))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.map_unary(a, |x| x * x);
        self.derived(v, Op::Square(a), &[a])
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        self.derived(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let s: T = x.data().iter().copied().sum::<T>() / T::of_usize(x.numel().max(1));
        self.derived(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Squared L2 norm of all elements, as a scalar.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().map(|&x| x * x).sum();
        self.derived(Tensor::scalar(s), Op::SumSquares(a), &[a])
    }

    fn check_axis(&self, op: &'static str, a: Var, axis: usize) -> Result<(), AutogradError> {
        let rank = self.shape(a).len();
        if axis >= rank {
            return Err(invalid(op, format!("axis {axis} out of range for rank {rank}")));
        }
        Ok(())
    }

    fn reduce_axis(&self, a: Var, axis: usize, mean: bool) -> Tensor<T> {
        let x = self.value(a);
        let (outer, n, inner) = split_axis(x.shape(), axis);
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let src = &x.data()[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (d, &s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        if mean {
            let inv = T::one() / T::of_usize(n.max(1));
            out.iter_mut().for_each(|v| *v *= inv);
        }
        let mut shape = x.shape().to_vec();
        shape.remove(axis);
        Tensor::new(shape, out).expect("reduced shape")
    }

    /// Sums out `axis` (the axis is removed).
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var, AutogradError> {
        self.check_axis("sum_axis", a, axis)?;
        let v = self.reduce_axis(a, axis, false);
        Ok(self.derived(v, Op::SumAxis(a, axis), &[a]))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var, AutogradError> {
        self.check_axis("mean_axis", a, axis)?;
        let v = self.reduce_axis(a, axis, true);
        Ok(self.derived(v, Op::MeanAxis(a, axis), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, AutogradError> {
        let v = self.value(a).clone().reshaped(shape.to_vec())?;
        Ok(self.derived(v, Op::Reshape(a), &[a]))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var, AutogradError> {
        let shape = self.shape(a).to_vec();
        let mut seen = axes.to_vec();
        seen.sort_unstable();
        if seen != (0..shape.len()).collect::<Vec<_>>() {
            return Err(invalid("permute", format!("{axes:?} is not a permutation of rank {}", shape.len())));
        }
        let map = permute_map(&shape, axes);
        let src = self.value(a).data();
        let data = map.iter().map(|&i| src[i]).collect();
        let out_shape: Vec<usize> = axes.iter().map(|&d| shape[d]).collect();
        let v = Tensor::new(out_shape, data)?;
        Ok(self.derived(v, Op::Permute(a, axes.to_vec()), &[a]))
    }

    /// Elements `start..start + len` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, AutogradError> {
        self.check_axis("slice", a, axis)?;
        let x = self.value(a);
        let (outer, n, inner) = split_axis(x.shape(), axis);
        if start + len > n {
            return Err(invalid("slice", format!("range {start}..{} exceeds axis length {n}", start + len)));
        }
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&x.data()[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        let v = Tensor::new(shape, data)?;
        Ok(self.derived(v, Op::Slice { x: a, axis, start }, &[a]))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, AutogradError> {
        let first = *inputs.first().ok_or_else(|| invalid("concat", "no inputs"))?;
        self.check_axis("concat", first, axis)?;
        let base = self.shape(first).to_vec();
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len() && (0..s.len()).all(|d| d == axis || s[d] == base[d]);
            if !compatible {
                return Err(mismatch("concat", &base, s));
            }
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let total: usize = inputs.iter().map(|&v| self.shape(v)[axis]).sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let n = self.shape(v)[axis];
                data.extend_from_slice(&self.value(v).data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let v = Tensor::new(shape, data)?;
        Ok(self.derived(
            v,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Numpy-style broadcast (right-aligned, size-1 or missing dims expand).
    pub fn broadcast(&mut self, a: Var, shape: &[usize]) -> Result<Var, AutogradError> {
        let s = self.shape(a).to_vec();
        let ok = s.len() <= shape.len()
            && s.iter().rev().zip(shape.iter().rev()).all(|(&i, &o)| i == o || i == 1);
        if !ok {
            return Err(mismatch("broadcast", &s, shape));
        }
        let map = broadcast_map(&s, shape);
        let src = self.value(a).data();
        let v = Tensor::new(shape.to_vec(), map.iter().map(|&i| src[i]).collect())?;
        Ok(self.derived(v, Op::Broadcast(a), &[a]))
    }

    /// Selects `indices` (repeats allowed) along `axis`.
    pub fn gather(&mut self, a: Var, axis: usize, indices: &[usize]) -> Result<Var, AutogradError> {
        self.check_axis("gather", a, axis)?;
        let x = self.value(a);
        let (outer, n, inner) = split_axis(x.shape(), axis);
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(invalid("gather", format!("index {bad} out of range for axis length {n}")));
        }
        let mut data = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                data.extend_from_slice(&x.data()[(o * n + i) * inner..(o * n + i + 1) * inner]);
            }
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = indices.len();
        let v = Tensor::new(shape, data)?;
        Ok(self.derived(
            v,
            Op::Gather {
                x: a,
                axis,
                indices: indices.to_vec(),
            },
            &[a],
        ))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, AutogradError> {
        self.check_axis("softmax", a, axis)?;
        let x = self.value(a);
        let v = Tensor::new(x.shape().to_vec(), softmax_impl(x, axis, false))?;
        Ok(self.derived(v, Op::Softmax(a, axis), &[a]))
    }

    /// `x - logsumexp(x)` along `axis`.
    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var, AutogradError> {
        self.check_axis("log_softmax", a, axis)?;
        let x = self.value(a);
        let v = Tensor::new(x.shape().to_vec(), softmax_impl(x, axis, true))?;
        Ok(self.derived(v, Op::LogSoftmax(a, axis), &[a]))
    }

    /// Multiplies by a constant tensor of the same shape.
    pub fn mul_const(&mut self, a: Var, c: Tensor<T>) -> Result<Var, AutogradError> {
        let c = self.constant(c);
        self.mul(a, c)
    }

    /// Adds a bias vector along the last axis.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, AutogradError> {
        let shape = self.shape(a).to_vec();
        let b = self.broadcast(bias, &shape)?;
        self.add(a, b)
    }
}

/// Plain (non-differentiable) stable softmax of a vector.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    softmax_impl(&Tensor::vector(logits.to_vec()), 0, false)
}

/// Plain (non-differentiable) stable log-softmax of a vector.
pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    softmax_impl(&Tensor::vector(logits.to_vec()), 0, true)
}
