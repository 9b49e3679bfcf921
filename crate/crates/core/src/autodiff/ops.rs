//! Real-valued tape operations: broadcasting elementwise arithmetic,
//! reductions, shape manipulation and batched matrix products.

use std::rc::Rc;

use super::{BackwardFn, Var};
use crate::error::{Error, Result};
use crate::tensor::{broadcast_index_map, broadcast_shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Div,
    Abs,
    Log,
    Exp,
    Square,
    Sqrt,
    Sigmoid,
    Softplus,
    Cos,
    Sin,
    Atan2,
    Tanh,
}

/// Dispatch by operation kind. Binary kinds require `b`; `eps` is the guard
/// used by `Div`, `Log` and `Sqrt` and ignored otherwise.
pub fn elementwise<'t>(op: ElementwiseOp, a: Var<'t>, b: Option<Var<'t>>, eps: f64) -> Result<Var<'t>> {
    use ElementwiseOp::*;
    let rhs = || {
        b.ok_or(Error::DomainError {
            op: "elementwise",
            detail: format!("{op:?} needs two operands"),
        })
    };
    match op {
        Add => a.add(rhs()?),
        Sub => a.sub(rhs()?),
        Mul => a.mul(rhs()?),
        Div => a.div(rhs()?, eps),
        Atan2 => a.atan2(rhs()?),
        Abs => Ok(a.abs()),
        Log => a.log(eps),
        Exp => Ok(a.exp()),
        Square => Ok(a.square()),
        Sqrt => a.sqrt(eps),
        Sigmoid => Ok(a.sigmoid()),
        Softplus => Ok(a.softplus()),
        Cos => Ok(a.cos()),
        Sin => Ok(a.sin()),
        Tanh => Ok(a.tanh()),
    }
}

fn reduce_to(grad: Vec<f64>, map: Option<&[usize]>, shape: &[usize]) -> Tensor {
    match map {
        None => Tensor::new(shape.to_vec(), grad).expect("gradient shape"),
        Some(map) => {
            let mut out = Tensor::zeros(shape);
            let d = out.data_mut();
            for (i, g) in map.iter().zip(grad) {
                d[*i] += g;
            }
            out
        }
    }
}

impl<'t> Var<'t> {
    fn binary(
        self,
        other: Var<'t>,
        name: &'static str,
        fwd: impl Fn(f64, f64) -> f64,
        local: impl Fn(f64, f64, f64) -> (f64, f64) + 'static,
    ) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        let out_shape =
            broadcast_shape(a.shape(), b.shape()).ok_or_else(|| Error::shape(name, a.shape(), b.shape()))?;
        let map_a = (a.shape() != out_shape.as_slice()).then(|| Rc::new(broadcast_index_map(a.shape(), &out_shape)));
        let map_b = (b.shape() != out_shape.as_slice()).then(|| Rc::new(broadcast_index_map(b.shape(), &out_shape)));
        let numel: usize = out_shape.iter().product();
        let (ad, bd) = (a.data(), b.data());
        let ia = |i: usize| map_a.as_ref().map_or(i, |m| m[i]);
        let ib = |i: usize| map_b.as_ref().map_or(i, |m| m[i]);
        let data: Vec<f64> = (0..numel).map(|i| fwd(ad[ia(i)], bd[ib(i)])).collect();
        let out = Tensor::new(out_shape, data)?;
        let out_val = Rc::new(out.clone());
        let backward: BackwardFn = Box::new(move |g, wants| {
            let (ad, bd, od) = (a.data(), b.data(), out_val.data());
            let n = g.numel();
            let mut ga = if wants[0] { Vec::with_capacity(n) } else { Vec::new() };
            let mut gb = if wants[1] { Vec::with_capacity(n) } else { Vec::new() };
            for (i, &gi) in g.data().iter().enumerate() {
                let xa = ad[map_a.as_ref().map_or(i, |m| m[i])];
                let xb = bd[map_b.as_ref().map_or(i, |m| m[i])];
                let (da, db) = local(xa, xb, od[i]);
                if wants[0] {
                    ga.push(gi * da);
                }
                if wants[1] {
                    gb.push(gi * db);
                }
            }
            vec![
                wants[0].then(|| reduce_to(ga, map_a.as_deref().map(|v| v.as_slice()), a.shape())),
                wants[1].then(|| reduce_to(gb, map_b.as_deref().map(|v| v.as_slice()), b.shape())),
            ]
        });
        Ok(self.tape.push_op(out, &[self, other], backward))
    }

    fn unary(self, fwd: impl Fn(f64) -> f64, local: impl Fn(f64, f64) -> f64 + 'static) -> Var<'t> {
        let a = self.value();
        let out = a.map(&fwd);
        let out_val = Rc::new(out.clone());
        let backward: BackwardFn = Box::new(move |g, _| {
            let data = g
                .data()
                .iter()
                .zip(a.data())
                .zip(out_val.data())
                .map(|((&gi, &x), &y)| gi * local(x, y))
                .collect();
            vec![Some(Tensor::new(g.shape().to_vec(), data).expect("unary grad"))]
        });
        self.tape.push_op(out, &[self], backward)
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", |a, b| a + b, |_, _, _| (1.0, 1.0))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", |a, b| a - b, |_, _, _| (1.0, -1.0))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", |a, b| a * b, |a, b, _| (b, a))
    }

    /// `self / (other + eps)`; fails if any guarded denominator is zero.
    pub fn div(self, other: Var<'t>, eps: f64) -> Result<Var<'t>> {
        if other.value().data().iter().any(|&v| v + eps == 0.0) {
            return Err(Error::DomainError {
                op: "div",
                detail: format!("zero denominator with eps = {eps:e}"),
            });
        }
        self.binary(
            other,
            "div",
            move |a, b| a / (b + eps),
            move |a, b, _| {
                let d = b + eps;
                (1.0 / d, -a / (d * d))
            },
        )
    }

    /// `atan2(self, other)`, i.e. the angle of `other + i·self`.
    pub fn atan2(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "atan2", f64::atan2, |y, x, _| {
            let r2 = x * x + y * y;
            if r2 == 0.0 {
                (0.0, 0.0)
            } else {
                (x / r2, -y / r2)
            }
        })
    }

    pub fn neg(self) -> Var<'t> {
        self.unary(|x| -x, |_, _| -1.0)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(move |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(move |x| x + c, |_, _| 1.0)
    }

    /// Subgradient `sign(x)`, zero at exact ties.
    pub fn abs(self) -> Var<'t> {
        self.unary(f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(f64::exp, |_, y| y)
    }

    /// Natural log of `self + eps`.
    pub fn log(self, eps: f64) -> Result<Var<'t>> {
        if let Some(v) = self.value().data().iter().find(|&&v| !(v + eps > 0.0)) {
            return Err(Error::DomainError {
                op: "log",
                detail: format!("argument {v:e} with eps = {eps:e}"),
            });
        }
        Ok(self.unary(move |x| (x + eps).ln(), move |x, _| 1.0 / (x + eps)))
    }

    /// Square root of `self + eps`.
    pub fn sqrt(self, eps: f64) -> Result<Var<'t>> {
        if let Some(v) = self.value().data().iter().find(|&&v| !(v + eps >= 0.0)) {
            return Err(Error::DomainError {
                op: "sqrt",
                detail: format!("argument {v:e} with eps = {eps:e}"),
            });
        }
        Ok(self.unary(move |x| (x + eps).sqrt(), |_, y| 0.5 / y))
    }

    pub fn square(self) -> Var<'t> {
        self.unary(|x| x * x, |x, _| 2.0 * x)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(sigmoid, |_, y| y * (1.0 - y))
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(self) -> Var<'t> {
        self.unary(softplus, |x, _| sigmoid(x))
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn cos(self) -> Var<'t> {
        self.unary(f64::cos, |x, _| -x.sin())
    }

    pub fn sin(self) -> Var<'t> {
        self.unary(f64::sin, |x, _| x.cos())
    }

    /// Sum of all elements, shape `[]`.
    pub fn sum(self) -> Var<'t> {
        let a = self.value();
        let shape = a.shape().to_vec();
        let out = Tensor::scalar(a.sum());
        let backward: BackwardFn = Box::new(move |g, _| vec![Some(Tensor::full(&shape, g.item()))]);
        self.tape.push_op(out, &[self], backward)
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.numel().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum over `axis`, which is removed from the shape.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        let a = self.value();
        let shape = a.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("sum_axis", &shape, &[axis]));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let mut data = vec![0.0; outer * inner];
        let ad = a.data();
        for o in 0..outer {
            for l in 0..len {
                let src = &ad[(o * len + l) * inner..(o * len + l + 1) * inner];
                let dst = &mut data[o * inner..(o + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let out = Tensor::new(out_shape, data)?;
        let backward: BackwardFn = Box::new(move |g, _| {
            let gd = g.data();
            let mut grad = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                for _ in 0..len {
                    grad.extend_from_slice(&gd[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(Tensor::new(shape.clone(), grad).expect("sum_axis grad"))]
        });
        Ok(self.tape.push_op(out, &[self], backward))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let a = self.value();
        let in_shape = a.shape().to_vec();
        let out = (*a).clone().reshape(shape)?;
        let backward: BackwardFn =
            Box::new(move |g, _| vec![Some(g.clone().reshape(&in_shape).expect("reshape grad"))]);
        Ok(self.tape.push_op(out, &[self], backward))
    }

    /// Swap the two trailing axes.
    pub fn transpose_last2(self) -> Result<Var<'t>> {
        let a = self.value();
        let shape = a.shape().to_vec();
        if shape.len() < 2 {
            return Err(Error::shape("transpose_last2", &shape, &[2]));
        }
        let out = transpose_last2(&a);
        let backward: BackwardFn = Box::new(move |g, _| vec![Some(transpose_last2(g))]);
        Ok(self.tape.push_op(out, &[self], backward))
    }

    /// Contiguous range `start..start + len` along `axis`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let a = self.value();
        let shape = a.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape("slice", &shape, &[axis, start, len]));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let full = shape[axis];
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&a.data()[base..base + len * inner]);
        }
        let out = Tensor::new(out_shape, data)?;
        let backward: BackwardFn = Box::new(move |g, _| {
            let mut grad = Tensor::zeros(&shape);
            let gd = grad.data_mut();
            for o in 0..outer {
                let base = (o * full + start) * inner;
                gd[base..base + len * inner].copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(grad)]
        });
        Ok(self.tape.push_op(out, &[self], backward))
    }

    /// Index `index` along the leading axis, dropping that axis.
    pub fn select(self, index: usize) -> Result<Var<'t>> {
        let mut shape = self.shape();
        if shape.is_empty() {
            return Err(Error::shape("select", &shape, &[index]));
        }
        shape.remove(0);
        self.slice(0, index, 1)?.reshape(&shape)
    }

    /// Concatenate along `axis`; all other dims must agree.
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts.first().ok_or_else(|| Error::shape("concat", &[], &[]))?;
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", &base, &[axis]));
        }
        for (p, v) in parts.iter().zip(&values) {
            first.same_tape(p)?;
            let s = v.shape();
            if s.len() != base.len() || s.iter().enumerate().any(|(i, &d)| i != axis && d != base[i]) {
                return Err(Error::shape("concat", &base, s));
            }
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let lens: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &l) in values.iter().zip(&lens) {
                data.extend_from_slice(&v.data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let out = Tensor::new(out_shape, data)?;
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        let backward: BackwardFn = Box::new(move |g, wants| {
            let mut grads: Vec<Vec<f64>> = lens.iter().map(|&l| Vec::with_capacity(outer * l * inner)).collect();
            let gd = g.data();
            let mut pos = 0;
            for _ in 0..outer {
                for (gr, &l) in grads.iter_mut().zip(&lens) {
                    gr.extend_from_slice(&gd[pos..pos + l * inner]);
                    pos += l * inner;
                }
            }
            grads
                .into_iter()
                .zip(&shapes)
                .zip(wants)
                .map(|((gr, s), &w)| w.then(|| Tensor::new(s.clone(), gr).expect("concat grad")))
                .collect()
        });
        Ok(first.tape.push_op(out, parts, backward))
    }

    /// Batched matrix product over the two trailing axes; leading axes
    /// broadcast.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        let plan = MatmulPlan::new(a.shape(), b.shape())?;
        let mut out = Tensor::zeros(&plan.out_shape);
        plan.forward(a.data(), b.data(), out.data_mut());
        let plan = Rc::new(plan);
        let backward: BackwardFn = Box::new(move |g, wants| {
            let mut ga = wants[0].then(|| Tensor::zeros(a.shape()));
            let mut gb = wants[1].then(|| Tensor::zeros(b.shape()));
            plan.backward(
                a.data(),
                b.data(),
                g.data(),
                ga.as_mut().map(|t| t.data_mut()),
                gb.as_mut().map(|t| t.data_mut()),
            );
            vec![ga, gb]
        });
        Ok(self.tape.push_op(out, &[self, other], backward))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

pub(crate) fn transpose_last2(t: &Tensor) -> Tensor {
    let shape = t.shape();
    let n = shape.len();
    let (r, c) = (shape[n - 2], shape[n - 1]);
    let batch = t.numel() / (r * c).max(1);
    let mut out_shape = shape.to_vec();
    out_shape.swap(n - 2, n - 1);
    let mut data = vec![0.0; t.numel()];
    let d = t.data();
    for bi in 0..batch {
        let off = bi * r * c;
        for i in 0..r {
            for j in 0..c {
                data[off + j * r + i] = d[off + i * c + j];
            }
        }
    }
    Tensor::new(out_shape, data).expect("transpose")
}

struct MatmulPlan {
    m: usize,
    k: usize,
    n: usize,
    out_shape: Vec<usize>,
    /// Per output batch: (a offset, b offset).
    offsets: Vec<(usize, usize)>,
}

impl MatmulPlan {
    fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() < 2 || b.len() < 2 {
            return Err(Error::shape("matmul", a, b));
        }
        let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
        let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
        if k != k2 {
            return Err(Error::shape("matmul", a, b));
        }
        let (ba, bb) = (&a[..a.len() - 2], &b[..b.len() - 2]);
        let batch = broadcast_shape(ba, bb).ok_or_else(|| Error::shape("matmul", a, b))?;
        let map_a = broadcast_index_map(ba, &batch);
        let map_b = broadcast_index_map(bb, &batch);
        let offsets = map_a
            .into_iter()
            .zip(map_b)
            .map(|(ia, ib)| (ia * m * k, ib * k * n))
            .collect();
        let mut out_shape = batch;
        out_shape.extend([m, n]);
        Ok(Self {
            m,
            k,
            n,
            out_shape,
            offsets,
        })
    }

    fn forward(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        let (m, k, n) = (self.m, self.k, self.n);
        for (bi, &(oa, ob)) in self.offsets.iter().enumerate() {
            let oo = bi * m * n;
            for i in 0..m {
                let row = &mut out[oo + i * n..oo + (i + 1) * n];
                for p in 0..k {
                    let av = a[oa + i * k + p];
                    if av == 0.0 {
                        continue;
                    }
                    let brow = &b[ob + p * n..ob + (p + 1) * n];
                    for (o, &bv) in row.iter_mut().zip(brow) {
                        *o += av * bv;
                    }
                }
            }
        }
    }

    fn backward(&self, a: &[f64], b: &[f64], g: &[f64], mut ga: Option<&mut [f64]>, mut gb: Option<&mut [f64]>) {
        let (m, k, n) = (self.m, self.k, self.n);
        for (bi, &(oa, ob)) in self.offsets.iter().enumerate() {
            let og = bi * m * n;
            // dA = G Bᵀ
            if let Some(ga) = ga.as_deref_mut() {
                for i in 0..m {
                    let grow = &g[og + i * n..og + (i + 1) * n];
                    for p in 0..k {
                        let brow = &b[ob + p * n..ob + (p + 1) * n];
                        ga[oa + i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
            // dB = Aᵀ G
            if let Some(gb) = gb.as_deref_mut() {
                for i in 0..m {
                    let grow = &g[og + i * n..og + (i + 1) * n];
                    for p in 0..k {
                        let av = a[oa + i * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        let dst = &mut gb[ob + p * n..ob + (p + 1) * n];
                        for (d, &gv) in dst.iter_mut().zip(grow) {
                            *d += av * gv;
                        }
                    }
                }
            }
        }
    }
}
