//! Reverse-mode automatic differentiation.
//!
//! A [`Tape`] owns every intermediate value. Operations append nodes in
//! evaluation order, so the node list is already topologically sorted and
//! [`Tape::backward`] is a single reverse sweep.

use crate::kernels::{gemm_nn, gemm_nt, gemm_tn};
use crate::{Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, F),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Elu(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    ClampMin(Var, F),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LogSumExpRows(Var),
    SumRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    SumAll(Var),
    MeanAll(Var),
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    needs_grad: bool,
}

pub struct Tape<F = f32> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients indexed by [`Var`], produced by [`Tape::backward`].
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, or zeros shaped like `like` when nothing flowed back.
    pub fn take_or_zeros(&mut self, v: Var, like: &Tensor<F>) -> Tensor<F> {
        self.grads
            .get_mut(v.0)
            .and_then(|g| g.take())
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn add_into<F: Scalar>(slot: &mut Option<Tensor<F>>, g: Tensor<F>) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += *b;
            }
        }
        None => *slot = Some(g),
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, needs_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite output from {:?}", op_name(&op));
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: &Tensor<F>) -> Var {
        self.leaf(value.clone(), true)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    fn matrix(rows: usize, cols: usize, data: Vec<F>) -> Tensor<F> {
        Tensor::from_vec(&[rows, cols], data).expect("internal shape")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        assert_eq!(k, k2, "matmul: inner dimensions {k} vs {k2}");
        let mut out = vec![F::zero(); m * n];
        gemm_nn(m, k, n, self.value(a).data(), self.value(b).data(), &mut out);
        let ng = self.needs(a) || self.needs(b);
        self.push(Self::matrix(m, n, out), Op::MatMul(a, b), ng)
    }

    /// Adds the row vector `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (m, n) = self.dims(a);
        assert_eq!(self.value(b).len(), n, "add_row: bias length");
        let mut out = self.value(a).clone().into_data();
        let bias = self.value(b).data();
        for row in out.chunks_mut(n) {
            for (x, &y) in row.iter_mut().zip(bias) {
                *x += y;
            }
        }
        let ng = self.needs(a) || self.needs(b);
        self.push(Self::matrix(m, n, out), Op::AddRow(a, b), ng)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op<F>, f: impl Fn(F, F) -> F) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert!(
            ta.same_shape(tb),
            "{}: shapes {:?} vs {:?}",
            op_name(&op),
            ta.shape(),
            tb.shape()
        );
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Self::matrix(ta.rows(), ta.cols(), data);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Multiplies row `i` of `a` by `s[i]`, where `s` is `m x 1`.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Var {
        let (m, n) = self.dims(a);
        assert_eq!(self.value(s).len(), m, "scale_rows: scale length");
        let mut out = self.value(a).clone().into_data();
        let sd = self.value(s).data();
        for (row, &k) in out.chunks_mut(n).zip(sd) {
            row.iter_mut().for_each(|x| *x *= k);
        }
        let ng = self.needs(a) || self.needs(s);
        self.push(Self::matrix(m, n, out), Op::ScaleRows(a, s), ng)
    }

    fn unary(&mut self, a: Var, op: Op<F>, f: impl Fn(F) -> F) -> Var {
        let ta = self.value(a);
        let value = Self::matrix(ta.rows(), ta.cols(), ta.data().iter().map(|&x| f(x)).collect());
        let ng = self.needs(a);
        self.push(value, op, ng)
    }

    pub fn scale(&mut self, a: Var, k: F) -> Var {
        self.unary(a, Op::Scale(a, k), |x| x * k)
    }

    pub fn add_scalar(&mut self, a: Var, k: F) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + k)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -F::one())
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > F::zero() { x } else { F::zero() })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Elu(a), |x| if x > F::zero() { x } else { x.exp_m1() })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), |x| x.exp())
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Op::Ln(a), |x| x.ln())
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// `max(a, floor)` elementwise; the gradient is blocked where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: F) -> Var {
        self.unary(a, Op::ClampMin(a, floor), |x| x.max(floor))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let mut out = self.value(a).clone().into_data();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        let ng = self.needs(a);
        self.push(Self::matrix(m, n, out), Op::SoftmaxRows(a), ng)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let mut out = self.value(a).clone().into_data();
        for row in out.chunks_mut(n) {
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let ng = self.needs(a);
        self.push(Self::matrix(m, n, out), Op::LogSoftmaxRows(a), ng)
    }

    /// Row-wise `log(sum(exp(x)))`, giving an `m x 1` column.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let out = self.value(a).data().chunks(n).map(log_sum_exp).collect();
        let ng = self.needs(a);
        self.push(Self::matrix(m, 1, out), Op::LogSumExpRows(a), ng)
    }

    /// Row sums as an `m x 1` column.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let out = self
            .value(a)
            .data()
            .chunks(n)
            .map(|r| r.iter().copied().sum())
            .collect();
        let ng = self.needs(a);
        self.push(Self::matrix(m, 1, out), Op::SumRows(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let m = self.dims(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.dims(p);
                assert_eq!(r, m, "concat_cols: row count mismatch");
                c
            })
            .collect();
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(Self::matrix(m, n, out), Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.dims(a);
        assert!(start + len <= n, "slice_cols: {start}+{len} > {n}");
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(m * len);
        for row in src.chunks(n) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let ng = self.needs(a);
        self.push(Self::matrix(m, len, out), Op::SliceCols(a, start), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.dims(a);
        assert!(start + len <= m, "slice_rows: {start}+{len} > {m}");
        let out = self.value(a).data()[start * n..(start + len) * n].to_vec();
        let ng = self.needs(a);
        self.push(Self::matrix(len, n, out), Op::SliceRows(a, start), ng)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        let ng = self.needs(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), ng)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s: F = t.data().iter().copied().sum();
        let mean = s / F::lit(t.len() as f64);
        let ng = self.needs(a);
        self.push(Tensor::scalar(mean), Op::MeanAll(a), ng)
    }

    /// Backpropagates from the scalar `loss`. Gradients accumulate across
    /// every use of a node.
    pub fn backward(&self, loss: Var) -> Gradients<F> {
        assert_eq!(self.value(loss).len(), 1, "backward: loss must be a scalar");
        let mut grads: Vec<Option<Tensor<F>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), F::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, node: &Node<F>, g: &Tensor<F>, grads: &mut [Option<Tensor<F>>]) {
        let gd = g.data();
        let out = &node.value;
        let send = |v: Var, t: Tensor<F>, grads: &mut [Option<Tensor<F>>]| {
            if self.needs(v) {
                add_into(&mut grads[v.0], t);
            }
        };
        let like = |v: Var, data: Vec<F>| {
            let t = self.value(v);
            Self::matrix(t.rows(), t.cols(), data)
        };
        let elementwise = |v: Var, f: &dyn Fn(F, F, F) -> F| {
            let x = self.value(v).data();
            let y = out.data();
            let data = (0..x.len()).map(|i| f(gd[i], x[i], y[i])).collect();
            like(v, data)
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                if self.needs(*a) {
                    let mut da = vec![F::zero(); m * k];
                    gemm_nt(m, n, k, gd, self.value(*b).data(), &mut da);
                    send(*a, Self::matrix(m, k, da), grads);
                }
                if self.needs(*b) {
                    let mut db = vec![F::zero(); k * n];
                    gemm_tn(m, k, n, self.value(*a).data(), gd, &mut db);
                    send(*b, Self::matrix(k, n, db), grads);
                }
            }
            Op::AddRow(a, b) => {
                if self.needs(*b) {
                    let n = g.cols();
                    let mut db = vec![F::zero(); n];
                    for row in gd.chunks(n) {
                        for (d, &x) in db.iter_mut().zip(row) {
                            *d += x;
                        }
                    }
                    let bt = self.value(*b);
                    send(*b, Tensor::from_vec(bt.shape(), db).expect("bias shape"), grads);
                }
                send(*a, g.clone(), grads);
            }
            Op::Add(a, b) => {
                send(*a, g.clone(), grads);
                send(*b, g.clone(), grads);
            }
            Op::Sub(a, b) => {
                send(*a, g.clone(), grads);
                if self.needs(*b) {
                    send(*b, g.map(|x| -x), grads);
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let bd = self.value(*b).data();
                    send(*a, like(*a, gd.iter().zip(bd).map(|(&x, &y)| x * y).collect()), grads);
                }
                if self.needs(*b) {
                    let ad = self.value(*a).data();
                    send(*b, like(*b, gd.iter().zip(ad).map(|(&x, &y)| x * y).collect()), grads);
                }
            }
            Op::ScaleRows(a, s) => {
                let n = g.cols();
                let sd = self.value(*s).data();
                if self.needs(*a) {
                    let mut da = gd.to_vec();
                    for (row, &k) in da.chunks_mut(n).zip(sd) {
                        row.iter_mut().for_each(|x| *x *= k);
                    }
                    send(*a, like(*a, da), grads);
                }
                if self.needs(*s) {
                    let ad = self.value(*a).data();
                    let ds = gd
                        .chunks(n)
                        .zip(ad.chunks(n))
                        .map(|(gr, ar)| gr.iter().zip(ar).map(|(&x, &y)| x * y).sum())
                        .collect();
                    send(*s, like(*s, ds), grads);
                }
            }
            Op::Scale(a, k) => send(*a, g.map(|x| x * *k), grads),
            Op::AddScalar(a) => send(*a, g.clone(), grads),
            Op::Relu(a) => send(
                *a,
                elementwise(*a, &|g, x, _| if x > F::zero() { g } else { F::zero() }),
                grads,
            ),
            Op::Tanh(a) => send(*a, elementwise(*a, &|g, _, y| g * (F::one() - y * y)), grads),
            Op::Sigmoid(a) => send(*a, elementwise(*a, &|g, _, y| g * y * (F::one() - y)), grads),
            Op::Elu(a) => send(
                *a,
                elementwise(*a, &|g, x, y| if x > F::zero() { g } else { g * (y + F::one()) }),
                grads,
            ),
            Op::Exp(a) => send(*a, elementwise(*a, &|g, _, y| g * y), grads),
            Op::Ln(a) => send(*a, elementwise(*a, &|g, x, _| g / x), grads),
            Op::Square(a) => send(*a, elementwise(*a, &|g, x, _| g * (x + x)), grads),
            Op::ClampMin(a, floor) => {
                let f = *floor;
                send(*a, elementwise(*a, &|g, x, _| if x >= f { g } else { F::zero() }), grads)
            }
            Op::SoftmaxRows(a) => {
                let n = g.cols();
                let mut da = Vec::with_capacity(gd.len());
                for (gr, yr) in gd.chunks(n).zip(out.data().chunks(n)) {
                    let s: F = gr.iter().zip(yr).map(|(&x, &y)| x * y).sum();
                    da.extend(gr.iter().zip(yr).map(|(&x, &y)| y * (x - s)));
                }
                send(*a, like(*a, da), grads);
            }
            Op::LogSoftmaxRows(a) => {
                let n = g.cols();
                let mut da = Vec::with_capacity(gd.len());
                for (gr, yr) in gd.chunks(n).zip(out.data().chunks(n)) {
                    let s: F = gr.iter().copied().sum();
                    da.extend(gr.iter().zip(yr).map(|(&x, &y)| x - y.exp() * s));
                }
                send(*a, like(*a, da), grads);
            }
            Op::LogSumExpRows(a) => {
                let n = self.dims(*a).1;
                let x = self.value(*a).data();
                let mut da = Vec::with_capacity(x.len());
                for ((xr, &lse), &gi) in x.chunks(n).zip(out.data()).zip(gd) {
                    da.extend(xr.iter().map(|&v| gi * (v - lse).exp()));
                }
                send(*a, like(*a, da), grads);
            }
            Op::SumRows(a) => {
                let n = self.dims(*a).1;
                let mut da = Vec::with_capacity(gd.len() * n);
                for &gi in gd {
                    da.extend(std::iter::repeat(gi).take(n));
                }
                send(*a, like(*a, da), grads);
            }
            Op::ConcatCols(parts) => {
                let n = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.dims(p).1;
                    if self.needs(p) {
                        let mut dp = Vec::with_capacity(g.rows() * w);
                        for row in gd.chunks(n) {
                            dp.extend_from_slice(&row[offset..offset + w]);
                        }
                        send(p, like(p, dp), grads);
                    }
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (m, n) = self.dims(*a);
                let w = g.cols();
                let mut da = vec![F::zero(); m * n];
                for (dst, src) in da.chunks_mut(n).zip(gd.chunks(w)) {
                    dst[*start..*start + w].copy_from_slice(src);
                }
                send(*a, like(*a, da), grads);
            }
            Op::SliceRows(a, start) => {
                let (m, n) = self.dims(*a);
                let mut da = vec![F::zero(); m * n];
                da[start * n..start * n + gd.len()].copy_from_slice(gd);
                send(*a, like(*a, da), grads);
            }
            Op::SumAll(a) => {
                let t = self.value(*a);
                send(*a, Tensor::full(t.shape(), gd[0]), grads);
            }
            Op::MeanAll(a) => {
                let t = self.value(*a);
                let k = gd[0] / F::lit(t.len() as f64);
                send(*a, Tensor::full(t.shape(), k), grads);
            }
        }
    }
}

fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

pub(crate) fn log_sum_exp<F: Scalar>(row: &[F]) -> F {
    let m = row.iter().copied().fold(F::neg_infinity(), F::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|&x| (x - m).exp()).sum::<F>().ln()
}

pub(crate) fn softmax_in_place<F: Scalar>(row: &mut [F]) {
    let m = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut total = F::zero();
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    row.iter_mut().for_each(|x| *x /= total);
}

fn op_name<F>(op: &Op<F>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::AddRow(..) => "add_row",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::ScaleRows(..) => "scale_rows",
        Op::Scale(..) => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::Relu(..) => "relu",
        Op::Tanh(..) => "tanh",
        Op::Sigmoid(..) => "sigmoid",
        Op::Elu(..) => "elu",
        Op::Exp(..) => "exp",
        Op::Ln(..) => "ln",
        Op::Square(..) => "square",
        Op::ClampMin(..) => "clamp_min",
        Op::SoftmaxRows(..) => "softmax_rows",
        Op::LogSoftmaxRows(..) => "log_softmax_rows",
        Op::LogSumExpRows(..) => "log_sum_exp_rows",
        Op::SumRows(..) => "sum_rows",
        Op::ConcatCols(..) => "concat_cols",
        Op::SliceCols(..) => "slice_cols",
        Op::SliceRows(..) => "slice_rows",
        Op::SumAll(..) => "sum_all",
        Op::MeanAll(..) => "mean_all",
    }
}
