//! Vector-Jacobian products for every primitive op.

use ndarray::linalg::general_mat_mul;

use super::graph::{broadcast_map, permute_map, split_axis, view2, view2_mut, Op};
use super::{AutogradError, Graph, Var};
use crate::Scalar;

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], nodes_rg: bool, target: Var, len: usize, f: impl FnOnce(&mut [T])) {
    if !nodes_rg {
        return;
    }
    let g = grads[target.0].get_or_insert_with(|| vec![T::zero(); len]);
    f(g);
}

impl<T: Scalar> Graph<T> {
    /// Backpropagates from a scalar loss. Afterwards every leaf created with
    /// [`Graph::variable`] holds `d loss / d leaf` (see [`Graph::grad`]).
    pub fn backward(&mut self, loss: Var) -> Result<(), AutogradError> {
        if self.backpropagated {
            return Err(AutogradError::AlreadyBackpropagated);
        }
        let shape = self.shape(loss);
        if self.value(loss).numel() != 1 {
            return Err(AutogradError::NonScalarLoss(shape.to_vec()));
        }
        self.backpropagated = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);

        let Graph { nodes, grads, .. } = self;
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            let rg = |v: Var| nodes[v.0].requires_grad;
            let len = |v: Var| nodes[v.0].value.numel();
            let val = |v: Var| nodes[v.0].value.data();
            let out = node.value.data();
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        accumulate(grads, rg(v), v, len(v), |d| d.iter_mut().zip(&g).for_each(|(d, &g)| *d += g));
                    }
                }
                Op::Sub(a, b) => {
                    accumulate(grads, rg(*a), *a, len(*a), |d| d.iter_mut().zip(&g).for_each(|(d, &g)| *d += g));
                    accumulate(grads, rg(*b), *b, len(*b), |d| d.iter_mut().zip(&g).for_each(|(d, &g)| *d -= g));
                }
                Op::Mul(a, b) => {
                    let (x, y) = (val(*a), val(*b));
                    accumulate(grads, rg(*a), *a, len(*a), |d| {
                        for ((d, &g), &y) in d.iter_mut().zip(&g).zip(y) {
                            *d += g * y;
                        }
                    });
                    accumulate(grads, rg(*b), *b, len(*b), |d| {
                        for ((d, &g), &x) in d.iter_mut().zip(&g).zip(x) {
                            *d += g * x;
                        }
                    });
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    accumulate(grads, rg(*a), *a, len(*a), |d| d.iter_mut().zip(&g).for_each(|(d, &g)| *d += g * s));
                }
                Op::AddScalar(a) => {
                    accumulate(grads, rg(*a), *a, len(*a), |d| d.iter_mut().zip(&g).for_each(|(d, &g)| *d += g));
                }
                Op::MatMul(a, b) => {
                    let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    let gv = view2(&g, m, n);
                    // dA = G B^T, dB = A^T G
                    accumulate(grads, rg(*a), *a, m * k, |d| {
                        general_mat_mul(T::one(), &gv, &view2(val(*b), k, n).t(), T::one(), &mut view2_mut(d, m, k));
                    });
                    accumulate(grads, rg(*b), *b, k * n, |d| {
                        general_mat_mul(T::one(), &view2(val(*a), m, k).t(), &gv, T::one(), &mut view2_mut(d, k, n));
                    });
                }
                Op::Conv1d { x, w, cols, pad } => {
                    let sx = nodes[x.0].value.shape();
                    let sw = nodes[w.0].value.shape();
                    let (b, t, cin) = (sx[0], sx[1], sx[2]);
                    let (k, cout) = (sw[0], sw[2]);
                    let width = k * cin;
                    let gv = view2(&g, b * t, cout);
                    accumulate(grads, rg(*w), *w, width * cout, |d| {
                        general_mat_mul(T::one(), &view2(cols, b * t, width).t(), &gv, T::one(), &mut view2_mut(d, width, cout));
                    });
                    if rg(*x) {
                        let mut dcols = vec![T::zero(); b * t * width];
                        general_mat_mul(
                            T::one(),
                            &gv,
                            &view2(val(*w), width, cout).t(),
                            T::zero(),
                            &mut view2_mut(&mut dcols, b * t, width),
                        );
                        accumulate(grads, true, *x, b * t * cin, |d| {
                            for bi in 0..b {
                                for ti in 0..t {
                                    let row = &dcols[(bi * t + ti) * width..(bi * t + ti + 1) * width];
                                    for ki in 0..k {
                                        let s = ti + ki;
                                        if s < *pad || s - pad >= t {
                                            continue;
                                        }
                                        let to = (bi * t + s - pad) * cin;
                                        for (dst, &src) in d[to..to + cin].iter_mut().zip(&row[ki * cin..(ki + 1) * cin]) {
                                            *dst += src;
                                        }
                                    }
                                }
                            }
                        });
                    }
                }
                Op::Relu(a) => {
                    accumulate(grads, rg(*a), *a, len(*a), |d| {
                        for ((d, &g), &y) in d.iter_mut().zip(&g).zip(out) {
                            if y > T::zero() {
                                *d += g;
                            }
                        }
                    });
                }
                Op::Tanh(a) => {
                    accumulate(grads, rg(*a), *a, len(*a), |d| {
                        for ((d, &g), &y) in d.iter_mut().zip(&g).zip(out) {
                            *d += g * (T::one() - y * y);
                        }
                    });
                }
                Op::Exp(a) => {
                    accumulate(grads, rg(*a), *a, len(*a), |d| {
                        for ((d, &g), &y) in d.iter_mut().zip(&g).zip(out) {
                            *d += g * y;
                        }
                    });
                }
                Op::Log(a) => {
                    let x = val(*a);
                    accumulate(grads, rg(*a), *a, len(*a), |d| {
                        for ((d, &g), &x) in d.iter_mut().zip(&g).zip(x) {
                            *d += g / x;
                        }
                    });
                }
                Op::Sqrt(a) => {
                    let half = T::of(0.5);
                    accumulate(grads, rg(*a), *a, len(*a), |d| {
                        for ((d, &g), &y) in d.iter_mut().zip(&g).zip(out) {
                            if y > T::zero() {
                                *d += g * half / y;
                            }
                        }
                    });
                }
                Op::Square(a) => {
                    let x = val(*a);
                    let two = T::of(2.0);
                    accumulate(grads, rg(*a), *a, len(*a), |d| {
                        for ((d, &g), &x) in d.iter_mut().zip(&g).zip(x) {
                            *d += two * g * x;
                        }
                    });
                }
                Op::Sum(a) => {
                    let g0 = g[0];
                    accumulate(grads, rg(*a), *a, len(*a), |d| d.iter_mut().for_each(|d| *d += g0));
                }
                Op::Mean(a) => {
                    let g0 = g[0] / T::of_usize(len(*a).max(1));
                    accumulate(grads, rg(*a), *a, len(*a), |d| d.iter_mut().for_each(|d| *d += g0));
                }
                Op::SumSquares(a) => {
                    let g2 = g[0] * T::of(2.0);
                    let x = val(*a);
                    accumulate(grads, rg(*a), *a, len(*a), |d| {
                        d.iter_mut().zip(x).for_each(|(d, &x)| *d += g2 * x)
                    });
                }
                Op::SumAxis(a, axis) | Op::MeanAxis(a, axis) => {
                    let (outer, n, inner) = split_axis(nodes[a.0].value.shape(), *axis);
                    let scale = if matches!(node.op, Op::MeanAxis(..)) {
                        T::one() / T::of_usize(n.max(1))
                    } else {
                        T::one()
                    };
                    accumulate(grads, rg(*a), *a, len(*a), |d| {
                        for o in 0..outer {
                            let gs = &g[o * inner..(o + 1) * inner];
                            for kk in 0..n {
                                let dst = &mut d[(o * n + kk) * inner..(o * n + kk + 1) * inner];
                                for (dst, &gv) in dst.iter_mut().zip(gs) {
                                    *dst += gv * scale;
                                }
                            }
                        }
                    });
                }
                Op::Reshape(a) => {
                    accumulate(grads, rg(*a), *a, len(*a), |d| d.iter_mut().zip(&g).for_each(|(d, &g)| *d += g));
                }
                Op::Permute(a, axes) => {
                    let map = permute_map(nodes[a.0].value.shape(), axes);
                    accumulate(grads, rg(*a), *a, len(*a), |d| {
                        for (&src, &gv) in map.iter().zip(&g) {
                            d[src] += gv;
                        }
                    });
                }
                Op::Slice { x, axis, start } => {
                    let (outer, n, inner) = split_axis(nodes[x.0].value.shape(), *axis);
                    let l = node.value.shape()[*axis];
                    accumulate(grads, rg(*x), *x, len(*x), |d| {
                        for o in 0..outer {
                            let dst = &mut d[(o * n + start) * inner..(o * n + start + l) * inner];
                            for (dst, &gv) in dst.iter_mut().zip(&g[o * l * inner..(o + 1) * l * inner]) {
                                *dst += gv;
                            }
                        }
                    });
                }
                Op::Concat { inputs, axis } => {
                    let (outer, total, inner) = split_axis(node.value.shape(), *axis);
                    let mut offset = 0;
                    for &v in inputs {
                        let n = nodes[v.0].value.shape()[*axis];
                        accumulate(grads, rg(v), v, len(v), |d| {
                            for o in 0..outer {
                                let src = &g[(o * total + offset) * inner..(o * total + offset + n) * inner];
                                for (dst, &gv) in d[o * n * inner..(o + 1) * n * inner].iter_mut().zip(src) {
                                    *dst += gv;
                                }
                            }
                        });
                        offset += n;
                    }
                }
                Op::Broadcast(a) => {
                    let map = broadcast_map(nodes[a.0].value.shape(), node.value.shape());
                    accumulate(grads, rg(*a), *a, len(*a), |d| {
                        for (&src, &gv) in map.iter().zip(&g) {
                            d[src] += gv;
                        }
                    });
                }
                Op::Gather { x, axis, indices } => {
                    let (outer, n, inner) = split_axis(nodes[x.0].value.shape(), *axis);
                    let l = indices.len();
                    accumulate(grads, rg(*x), *x, len(*x), |d| {
                        for o in 0..outer {
                            for (j, &i) in indices.iter().enumerate() {
                                let src = &g[(o * l + j) * inner..(o * l + j + 1) * inner];
                                let dst = &mut d[(o * n + i) * inner..(o * n + i + 1) * inner];
                                for (dst, &gv) in dst.iter_mut().zip(src) {
                                    *dst += gv;
                                }
                            }
                        }
                    });
                }
                Op::Softmax(a, axis) | Op::LogSoftmax(a, axis) => {
                    let log = matches!(node.op, Op::LogSoftmax(..));
                    let (outer, n, inner) = split_axis(node.value.shape(), *axis);
                    accumulate(grads, rg(*a), *a, len(*a), |d| {
                        for o in 0..outer {
                            for i in 0..inner {
                                let at = |k: usize| (o * n + k) * inner + i;
                                if log {
                                    // dx = g - softmax * sum(g)
                                    let gs: T = (0..n).map(|k| g[at(k)]).sum();
                                    for k in 0..n {
                                        d[at(k)] += g[at(k)] - out[at(k)].exp() * gs;
                                    }
                                } else {
                                    // dx = y * (g - sum(g * y))
                                    let dot: T = (0..n).map(|k| g[at(k)] * out[at(k)]).sum();
                                    for k in 0..n {
                                        d[at(k)] += out[at(k)] * (g[at(k)] - dot);
                                    }
                                }
                            }
                        }
                    });
                }
            }
        }
        Ok(())
    }
}
