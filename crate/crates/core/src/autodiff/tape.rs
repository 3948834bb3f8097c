use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Offset(Var),
    Exp(Var),
    Sqrt(Var),
    Square(Var),
    Sin(Var),
    Cos(Var),
    Gelu(Var),
    Relu(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    MeanAxis(Var, usize),
    /// Flat source index selected for every output entry.
    Select(Var, Vec<usize>),
    Softmax(Var, usize),
    Concat(Vec<Var>, usize),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    /// Segment extremum; `None` marks an empty segment (output 0, no gradient).
    SegmentSelect(Var, Vec<Option<usize>>),
    SliceCols(Var, usize),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Reverse-mode recording of tensor operations.
///
/// Every primitive checks its operand shapes and records one node; `backward`
/// replays the nodes in reverse order.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Extremum {
    Max,
    Min,
}

impl Extremum {
    fn better(self, candidate: f64, current: f64) -> bool {
        match self {
            Extremum::Max => candidate > current,
            Extremum::Min => candidate < current,
        }
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for k in 0..rank {
        let da = if k + a.len() >= rank { a[k + a.len() - rank] } else { 1 };
        let db = if k + b.len() >= rank { b[k + b.len() - rank] } else { 1 };
        out[k] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` aligned to `out` rank, zero along broadcast axes.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for k in (0..shape.len()).rev() {
        let ok = k + rank - shape.len();
        strides[ok] = if shape[k] == 1 { 0 } else { acc };
        acc *= shape[k];
    }
    strides
}

/// Visits every output entry with the matching flat indices into `a` and `b`.
fn for_each_broadcast(
    out: &[usize],
    a: &[usize],
    b: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let total: usize = out.iter().product();
    if a == out && b == out {
        for i in 0..total {
            f(i, i, i);
        }
        return;
    }
    if a == out && b.iter().product::<usize>() == 1 {
        for i in 0..total {
            f(i, i, 0);
        }
        return;
    }
    if total == 0 {
        return;
    }
    if out.is_empty() {
        f(0, 0, 0);
        return;
    }
    let sa = broadcast_strides(a, out);
    let sb = broadcast_strides(b, out);
    // odometer over all but the last axis, tight loop along the last
    let rank = out.len();
    let last = rank - 1;
    let (inner, ja, jb) = (out[last], sa[last], sb[last]);
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut o = 0;
    while o < total {
        for t in 0..inner {
            f(o + t, ia + t * ja, ib + t * jb);
        }
        o += inner;
        for k in (0..last).rev() {
            idx[k] += 1;
            ia += sa[k];
            ib += sb[k];
            if idx[k] < out[k] {
                break;
            }
            ia -= sa[k] * out[k];
            ib -= sb[k] * out[k];
            idx[k] = 0;
        }
    }
}

/// `(outer, len, inner)` decomposition of `shape` around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + math::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + math::erf(x * core::f64::consts::FRAC_1_SQRT_2));
    let pdf = math::exp(-0.5 * x * x) / math::sqrt(2.0 * math::PI);
    cdf + x * pdf
}

/// `out[m×n] += a[m×k] · b[k×n]`
fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×k] += g[m×n] · b[k×n]ᵀ`
fn matmul_nt_acc(g: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (x, y) in grow.iter().zip(brow) {
                s += x * y;
            }
            out[i * k + p] += s;
        }
    }
}

/// `out[k×n] += a[m×k]ᵀ · g[m×n]`
fn matmul_tn_acc(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Records an untracked input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a tracked input whose gradient `backward` will report.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let out_shape = broadcast_shape(&sa, &sb).ok_or_else(|| shape_err(name, &sa, &sb))?;
        let mut out = vec![0.0; out_shape.iter().product()];
        {
            let da = self.data(a);
            let db = self.data(b);
            for_each_broadcast(&out_shape, &sa, &sb, |o, ia, ib| {
                out[o] = f(da[ia], db[ib]);
            });
        }
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Tensor::new(&out_shape, out)?, op, tracked))
    }

    /// Elementwise sum with trailing-axis broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(t.shape(), data).expect("same shape");
        let tracked = self.tracked(x);
        self.push(value, op, tracked)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, |v| -v, Op::Neg(x))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    /// Adds the constant `c` to every entry.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::Offset(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, math::exp, Op::Exp(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, math::sqrt, Op::Sqrt(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, math::sin, Op::Sin(x))
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(x, math::cos, Op::Cos(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, gelu, Op::Gelu(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(x))
    }

    /// `[m, k] · [k, n] → [m, n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_acc(self.data(a), self.data(b), m, k, n, &mut out);
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), tracked))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(shape_err("transpose", s, &[]));
        }
        let (r, c) = (s[0], s[1]);
        let d = self.data(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        let tracked = self.tracked(x);
        Ok(self.push(Tensor::new(&[c, r], out)?, Op::Transpose(x), tracked))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        let tracked = self.tracked(x);
        Ok(self.push(value, Op::Reshape(x), tracked))
    }

    /// Sum of all entries, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.data(x).iter().sum();
        let tracked = self.tracked(x);
        self.push(Tensor::scalar(s), Op::Sum(x), tracked)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let d = self.data(x);
        let s = d.iter().sum::<f64>() / d.len() as f64;
        let tracked = self.tracked(x);
        self.push(Tensor::scalar(s), Op::Mean(x), tracked)
    }

    fn check_axis(&self, name: &'static str, x: Var, axis: usize) -> Result<()> {
        let s = self.shape(x);
        if axis >= s.len() || s[axis] == 0 {
            return Err(shape_err(name, s, &[axis]));
        }
        Ok(())
    }

    fn reduce_axis(&self, x: Var, axis: usize) -> (Vec<usize>, Vec<f64>) {
        let shape = self.shape(x);
        let (outer, len, inner) = split_axis(shape, axis);
        let d = self.data(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..len {
                let src = &d[(o * len + k) * inner..(o * len + k + 1) * inner];
                for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += v;
                }
            }
        }
        let mut kept = shape.to_vec();
        kept[axis] = 1;
        (kept, out)
    }

    /// Sum along `axis`, keeping it with extent 1.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis("sum_axis", x, axis)?;
        let (shape, out) = self.reduce_axis(x, axis);
        let tracked = self.tracked(x);
        Ok(self.push(Tensor::new(&shape, out)?, Op::SumAxis(x, axis), tracked))
    }

    /// Mean along `axis`, keeping it with extent 1.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis("mean_axis", x, axis)?;
        let len = self.shape(x)[axis] as f64;
        let (shape, mut out) = self.reduce_axis(x, axis);
        out.iter_mut().for_each(|v| *v /= len);
        let tracked = self.tracked(x);
        Ok(self.push(Tensor::new(&shape, out)?, Op::MeanAxis(x, axis), tracked))
    }

    fn extremum_axis(&mut self, x: Var, axis: usize, kind: Extremum) -> Result<Var> {
        self.check_axis("max/min_axis", x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, len, inner) = split_axis(&shape, axis);
        let d = self.data(x);
        let mut out = vec![0.0; outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = o * len * inner + i;
                for k in 1..len {
                    let idx = (o * len + k) * inner + i;
                    if kind.better(d[idx], d[best]) {
                        best = idx;
                    }
                }
                out[o * inner + i] = d[best];
                arg[o * inner + i] = best;
            }
        }
        let mut kept = shape;
        kept[axis] = 1;
        let tracked = self.tracked(x);
        Ok(self.push(Tensor::new(&kept, out)?, Op::Select(x, arg), tracked))
    }

    /// Maximum along `axis`; ties resolve to the lowest index.
    pub fn max_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.extremum_axis(x, axis, Extremum::Max)
    }

    /// Minimum along `axis`; ties resolve to the lowest index.
    pub fn min_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.extremum_axis(x, axis, Extremum::Min)
    }

    /// Softmax along `axis` with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis("softmax", x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, len, inner) = split_axis(&shape, axis);
        let d = self.data(x);
        let mut out = vec![0.0; d.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let m = (0..len).map(|k| d[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for k in 0..len {
                    let e = math::exp(d[at(k)] - m);
                    out[at(k)] = e;
                    z += e;
                }
                for k in 0..len {
                    out[at(k)] /= z;
                }
            }
        }
        let tracked = self.tracked(x);
        Ok(self.push(Tensor::new(&shape, out)?, Op::Softmax(x, axis), tracked))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of nothing".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(shape_err("concat", &base, &[axis]));
        }
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(k, (a, b))| k == axis || a == b);
            if !compatible {
                return Err(shape_err("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                let len = self.shape(x)[axis];
                let d = self.data(x);
                out.extend_from_slice(&d[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let tracked = xs.iter().any(|&x| self.tracked(x));
        Ok(self.push(Tensor::new(&shape, out)?, Op::Concat(xs.to_vec(), axis), tracked))
    }

    fn rows_of(&self, name: &'static str, x: Var) -> Result<(usize, usize)> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(shape_err(name, s, &[]));
        }
        Ok((s[0], s[1]))
    }

    /// `out[r] = x[idx[r]]` over rows of a matrix.
    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var> {
        let (rows, cols) = self.rows_of("gather_rows", x)?;
        let d = self.data(x);
        let mut out = Vec::with_capacity(idx.len() * cols);
        for &r in idx.iter() {
            if r >= rows {
                return Err(Error::Index {
                    op: "gather_rows",
                    index: r,
                    bound: rows,
                });
            }
            out.extend_from_slice(&d[r * cols..(r + 1) * cols]);
        }
        let tracked = self.tracked(x);
        let shape = [idx.len(), cols];
        Ok(self.push(Tensor::new(&shape, out)?, Op::GatherRows(x, idx), tracked))
    }

    /// `out[idx[r]] += x[r]` into a `rows × cols` zero matrix.
    pub fn scatter_add_rows(&mut self, x: Var, idx: Arc<[usize]>, rows: usize) -> Result<Var> {
        let (n, cols) = self.rows_of("scatter_add_rows", x)?;
        if n != idx.len() {
            return Err(shape_err("scatter_add_rows", &[n, cols], &[idx.len()]));
        }
        let d = self.data(x);
        let mut out = vec![0.0; rows * cols];
        for (r, &t) in idx.iter().enumerate() {
            if t >= rows {
                return Err(Error::Index {
                    op: "scatter_add_rows",
                    index: t,
                    bound: rows,
                });
            }
            for c in 0..cols {
                out[t * cols + c] += d[r * cols + c];
            }
        }
        let tracked = self.tracked(x);
        Ok(self.push(Tensor::new(&[rows, cols], out)?, Op::ScatterAddRows(x, idx), tracked))
    }

    fn segment_extremum(&mut self, x: Var, offsets: &[usize], kind: Extremum) -> Result<Var> {
        let (rows, cols) = self.rows_of("segment_max/min", x)?;
        if offsets.is_empty() || offsets[offsets.len() - 1] != rows {
            return Err(shape_err("segment_max/min", &[rows, cols], offsets));
        }
        let segs = offsets.len() - 1;
        let d = self.data(x);
        let mut out = vec![0.0; segs * cols];
        let mut arg = vec![None; segs * cols];
        for s in 0..segs {
            let (lo, hi) = (offsets[s], offsets[s + 1]);
            if lo >= hi {
                continue;
            }
            for c in 0..cols {
                let mut best = lo * cols + c;
                for r in lo + 1..hi {
                    let idx = r * cols + c;
                    if kind.better(d[idx], d[best]) {
                        best = idx;
                    }
                }
                out[s * cols + c] = d[best];
                arg[s * cols + c] = Some(best);
            }
        }
        let tracked = self.tracked(x);
        Ok(self.push(Tensor::new(&[segs, cols], out)?, Op::SegmentSelect(x, arg), tracked))
    }

    /// Column-wise maximum over contiguous row segments `offsets[s]..offsets[s+1]`.
    /// Empty segments produce zeros.
    pub fn segment_max(&mut self, x: Var, offsets: &[usize]) -> Result<Var> {
        self.segment_extremum(x, offsets, Extremum::Max)
    }

    pub fn segment_min(&mut self, x: Var, offsets: &[usize]) -> Result<Var> {
        self.segment_extremum(x, offsets, Extremum::Min)
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.rows_of("slice_cols", x)?;
        if start > end || end > cols {
            return Err(shape_err("slice_cols", &[rows, cols], &[start, end]));
        }
        let d = self.data(x);
        let w = end - start;
        let mut out = Vec::with_capacity(rows * w);
        for r in 0..rows {
            out.extend_from_slice(&d[r * cols + start..r * cols + end]);
        }
        let tracked = self.tracked(x);
        Ok(self.push(Tensor::new(&[rows, w], out)?, Op::SliceCols(x, start), tracked))
    }

    /// Copy of `x` that blocks gradient flow.
    pub fn detach(&mut self, x: Var) -> Var {
        let v = self.value(x).clone();
        self.constant(v)
    }

    /// Accumulates d`loss`/d(node) for every tracked node reachable from `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(shape_err("backward", self.shape(loss), &[1]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = node.value.data();
        let out_shape = node.value.shape();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].tracked {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                acc(*a, &mut |ga| {
                    for_each_broadcast(out_shape, sa, sb, |o, ia, _| ga[ia] += g[o])
                });
                acc(*b, &mut |gb| {
                    for_each_broadcast(out_shape, sa, sb, |o, _, ib| gb[ib] += sign * g[o])
                });
            }
            Op::Mul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (da, db) = (self.data(*a), self.data(*b));
                acc(*a, &mut |ga| {
                    for_each_broadcast(out_shape, sa, sb, |o, ia, ib| ga[ia] += g[o] * db[ib])
                });
                acc(*b, &mut |gb| {
                    for_each_broadcast(out_shape, sa, sb, |o, ia, ib| gb[ib] += g[o] * da[ia])
                });
            }
            Op::Div(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (da, db) = (self.data(*a), self.data(*b));
                acc(*a, &mut |ga| {
                    for_each_broadcast(out_shape, sa, sb, |o, ia, ib| ga[ia] += g[o] / db[ib])
                });
                acc(*b, &mut |gb| {
                    for_each_broadcast(out_shape, sa, sb, |o, ia, ib| {
                        gb[ib] -= g[o] * da[ia] / (db[ib] * db[ib])
                    })
                });
            }
            Op::Neg(x) => acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(a, b)| *a -= b)),
            Op::Scale(x, c) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(a, b)| *a += c * b))
            }
            Op::Offset(x) | Op::Reshape(x) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(a, b)| *a += b))
            }
            Op::Exp(x) => acc(*x, &mut |gx| {
                for k in 0..gx.len() {
                    gx[k] += g[k] * out[k];
                }
            }),
            Op::Sqrt(x) => acc(*x, &mut |gx| {
                for k in 0..gx.len() {
                    gx[k] += g[k] * 0.5 / out[k];
                }
            }),
            Op::Square(x) => {
                let d = self.data(*x);
                acc(*x, &mut |gx| {
                    for k in 0..gx.len() {
                        gx[k] += 2.0 * g[k] * d[k];
                    }
                })
            }
            Op::Sin(x) => {
                let d = self.data(*x);
                acc(*x, &mut |gx| {
                    for k in 0..gx.len() {
                        gx[k] += g[k] * math::cos(d[k]);
                    }
                })
            }
            Op::Cos(x) => {
                let d = self.data(*x);
                acc(*x, &mut |gx| {
                    for k in 0..gx.len() {
                        gx[k] -= g[k] * math::sin(d[k]);
                    }
                })
            }
            Op::Gelu(x) => {
                let d = self.data(*x);
                acc(*x, &mut |gx| {
                    for k in 0..gx.len() {
                        gx[k] += g[k] * gelu_grad(d[k]);
                    }
                })
            }
            Op::Relu(x) => {
                let d = self.data(*x);
                acc(*x, &mut |gx| {
                    for k in 0..gx.len() {
                        if d[k] > 0.0 {
                            gx[k] += g[k];
                        }
                    }
                })
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (da, db) = (self.data(*a), self.data(*b));
                acc(*a, &mut |ga| matmul_nt_acc(g, db, m, n, k, ga));
                acc(*b, &mut |gb| matmul_tn_acc(da, g, m, k, n, gb));
            }
            Op::Transpose(x) => {
                let s = self.shape(*x);
                let (r, c) = (s[0], s[1]);
                acc(*x, &mut |gx| {
                    for i in 0..r {
                        for j in 0..c {
                            gx[i * c + j] += g[j * r + i];
                        }
                    }
                })
            }
            Op::Sum(x) => acc(*x, &mut |gx| gx.iter_mut().for_each(|a| *a += g[0])),
            Op::Mean(x) => {
                let n = self.value(*x).numel() as f64;
                acc(*x, &mut |gx| gx.iter_mut().for_each(|a| *a += g[0] / n))
            }
            Op::SumAxis(x, axis) | Op::MeanAxis(x, axis) => {
                let (outer, len, inner) = split_axis(self.shape(*x), *axis);
                let scale = if matches!(node.op, Op::MeanAxis(..)) {
                    1.0 / len as f64
                } else {
                    1.0
                };
                acc(*x, &mut |gx| {
                    for o in 0..outer {
                        for k in 0..len {
                            for i in 0..inner {
                                gx[(o * len + k) * inner + i] += scale * g[o * inner + i];
                            }
                        }
                    }
                })
            }
            Op::Select(x, arg) => acc(*x, &mut |gx| {
                for (o, &src) in arg.iter().enumerate() {
                    gx[src] += g[o];
                }
            }),
            Op::SegmentSelect(x, arg) => acc(*x, &mut |gx| {
                for (o, src) in arg.iter().enumerate() {
                    if let Some(src) = src {
                        gx[*src] += g[o];
                    }
                }
            }),
            Op::Softmax(x, axis) => {
                let (outer, len, inner) = split_axis(out_shape, *axis);
                acc(*x, &mut |gx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |k: usize| (o * len + k) * inner + i;
                            let dot: f64 = (0..len).map(|k| g[at(k)] * out[at(k)]).sum();
                            for k in 0..len {
                                gx[at(k)] += out[at(k)] * (g[at(k)] - dot);
                            }
                        }
                    }
                })
            }
            Op::Concat(xs, axis) => {
                let (outer, total, inner) = split_axis(out_shape, *axis);
                let mut start = 0;
                for &x in xs {
                    let len = self.shape(x)[*axis];
                    acc(x, &mut |gx| {
                        for o in 0..outer {
                            let src = &g[(o * total + start) * inner..(o * total + start + len) * inner];
                            let dst = &mut gx[o * len * inner..(o + 1) * len * inner];
                            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
                        }
                    });
                    start += len;
                }
            }
            Op::GatherRows(x, idx) => {
                let cols = out_shape[1];
                acc(*x, &mut |gx| {
                    for (r, &src) in idx.iter().enumerate() {
                        for c in 0..cols {
                            gx[src * cols + c] += g[r * cols + c];
                        }
                    }
                })
            }
            Op::ScatterAddRows(x, idx) => {
                let cols = out_shape[1];
                acc(*x, &mut |gx| {
                    for (r, &dst) in idx.iter().enumerate() {
                        for c in 0..cols {
                            gx[r * cols + c] += g[dst * cols + c];
                        }
                    }
                })
            }
            Op::SliceCols(x, start) => {
                let cols = self.shape(*x)[1];
                let w = out_shape[1];
                acc(*x, &mut |gx| {
                    for r in 0..out_shape[0] {
                        for c in 0..w {
                            gx[r * cols + start + c] += g[r * w + c];
                        }
                    }
                })
            }
        }
    }
}
