use super::{Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryKind {
    fn name(self) -> &'static str {
        match self {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Binary {
        kind: BinaryKind,
        lhs: Var,
        rhs: Var,
        // Period of each operand when it is broadcast over the leading axis.
        lhs_period: usize,
        rhs_period: usize,
    },
    MatMul {
        lhs: Var,
        rhs: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    Sigmoid(Var),
    Tanh(Var),
    Softplus(Var),
    Relu(Var),
    Square(Var),
    Sqrt(Var),
    Affine {
        src: Var,
        scale: f64,
    },
    Clamp {
        src: Var,
        lo: f64,
        hi: f64,
    },
    Sum(Var),
    Mean(Var),
    MeanRows {
        src: Var,
        rows: usize,
    },
    Concat {
        parts: Vec<(Var, usize)>,
        rows: usize,
    },
    SliceCols {
        src: Var,
        cols: usize,
        start: usize,
        end: usize,
    },
    /// Parts with their element counts.
    ConcatRows(Vec<(Var, usize)>),
    SliceRows {
        src: Var,
        total: usize,
        offset: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Eager recording tape. Every operation appends one node; `backward` walks
/// the nodes in reverse recording order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    visited: Vec<usize>,
}

impl Gradients {
    pub fn wrt(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient for `var` into the parameter's accumulator. A var
    /// with no gradient path contributes zeros.
    pub fn accumulate_into(&self, var: Var, param: &mut Tensor) -> Result<(), TensorError> {
        match self.wrt(var) {
            Some(g) => param.accumulate_grad(g),
            None => param.accumulate_grad(&vec![0.0; param.len()]),
        }
    }

    /// Node indices in the order the backward pass processed them.
    pub fn visit_order(&self) -> &[usize] {
        &self.visited
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function, stable for large `|x|`.
pub fn scalar_sigmoid(x: f64) -> f64 {
    sigmoid(x)
}

/// `ln(1 + eˣ)` without overflow.
pub fn scalar_softplus(x: f64) -> f64 {
    softplus(x)
}

/// Index pairs `(i % lp, i % rp)` for `i` in `0..n`, without the divisions.
fn cycled(n: usize, lp: usize, rp: usize) -> impl Iterator<Item = (usize, usize)> {
    let (mut i, mut j) = (0, 0);
    (0..n).map(move |_| {
        let out = (i, j);
        i += 1;
        if i == lp {
            i = 0;
        }
        j += 1;
        if j == rp {
            j = 0;
        }
        out
    })
}

/// Row-major operand view: data with its row and column strides.
#[derive(Clone, Copy)]
struct Strided<'a> {
    data: &'a [f64],
    rs: usize,
    cs: usize,
}

impl<'a> Strided<'a> {
    fn plain(data: &'a [f64], cols: usize) -> Self {
        Self { data, rs: cols, cs: 1 }
    }

    /// Transposed view of a row-major `[rows, cols]` buffer.
    fn transposed(data: &'a [f64], cols: usize) -> Self {
        Self { data, rs: 1, cs: cols }
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`, `out` row-major.
fn gemm_acc(m: usize, k: usize, n: usize, a: Strided, b: Strided, out: &mut [f64]) {
    let last = |v: &Strided, r: usize, c: usize| (r - 1) * v.rs + (c - 1) * v.cs;
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    assert!(last(&a, m, k) < a.data.len() && last(&b, k, n) < b.data.len() && out.len() >= m * n);
    // SAFETY: every index reached through the strides is bounds-checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            1.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
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

    /// Releases every recorded node.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// First element of a value; intended for scalar results.
    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a copy of `t`; gradients flow to it iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Records a value that never receives gradients.
    pub fn constant(&mut self, shape: Vec<usize>, value: Vec<f64>) -> Result<Var, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != value.len() {
            return Err(TensorError::BadLength {
                shape,
                expected,
                actual: value.len(),
            });
        }
        Ok(self.push(shape, value, Op::Leaf, false))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn binary(&mut self, kind: BinaryKind, lhs: Var, rhs: Var) -> Result<Var, TensorError> {
        let ls = self.nodes[lhs.0].shape.clone();
        let rs = self.nodes[rhs.0].shape.clone();
        let (shape, lhs_period, rhs_period) = broadcast_plan(kind.name(), &ls, &rs)?;
        let n: usize = shape.iter().product();
        let a = &self.nodes[lhs.0].value;
        let b = &self.nodes[rhs.0].value;
        let f = |x: f64, y: f64| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
            BinaryKind::Div => x / y,
        };
        let value: Vec<f64> = if lhs_period == n && rhs_period == n {
            a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
        } else {
            cycled(n, lhs_period, rhs_period).map(|(i, j)| f(a[i], b[j])).collect()
        };
        let rg = self.rg(lhs) || self.rg(rhs);
        Ok(self.push(
            shape,
            value,
            Op::Binary {
                kind,
                lhs,
                rhs,
                lhs_period,
                rhs_period,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Div, a, b)
    }

    /// Matrix product of a `[m, k]` and a `[k, n]` value.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let ls = &self.nodes[a.0].shape;
        let rs = &self.nodes[b.0].shape;
        if ls.len() != 2 || rs.len() != 2 || ls[1] != rs[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: ls.clone(),
                rhs: rs.clone(),
            });
        }
        let (m, k, n) = (ls[0], ls[1], rs[1]);
        let mut value = vec![0.0; m * n];
        gemm_acc(
            m,
            k,
            n,
            Strided::plain(&self.nodes[a.0].value, k),
            Strided::plain(&self.nodes[b.0].value, n),
            &mut value,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], value, Op::MatMul { lhs: a, rhs: b, m, k, n }, rg))
    }

    fn unary(&mut self, src: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let shape = self.nodes[src.0].shape.clone();
        let value = self.nodes[src.0].value.iter().map(|&x| f(x)).collect();
        let rg = self.rg(src);
        self.push(shape, value, op, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Op::Softplus(x), softplus)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sqrt(x), f64::sqrt)
    }

    /// `scale * x + shift`
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        self.unary(x, Op::Affine { src: x, scale }, |v| scale * v + shift)
    }

    /// Clamps to `[lo, hi]`; the gradient passes only inside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, Op::Clamp { src: x, lo, hi }, |v| v.clamp(lo, hi))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.iter().sum();
        let rg = self.rg(x);
        self.push(Vec::new(), vec![s], Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let s = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(x);
        self.push(Vec::new(), vec![s], Op::Mean(x), rg)
    }

    /// Mean over the leading axis: `[b, ...] -> [...]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let shape = self.nodes[x.0].shape.clone();
        if shape.is_empty() || shape[0] == 0 {
            return Err(TensorError::InvalidArgument {
                op: "mean_rows",
                detail: format!("needs a non-empty leading axis, got {shape:?}"),
            });
        }
        let rows = shape[0];
        let width: usize = shape[1..].iter().product();
        let v = &self.nodes[x.0].value;
        let mut out = vec![0.0; width];
        for r in 0..rows {
            out.iter_mut()
                .zip(&v[r * width..(r + 1) * width])
                .for_each(|(o, &x)| *o += x);
        }
        out.iter_mut().for_each(|o| *o /= rows as f64);
        let rg = self.rg(x);
        Ok(self.push(shape[1..].to_vec(), out, Op::MeanRows { src: x, rows }, rg))
    }

    /// Concatenates 2-D values with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or(TensorError::InvalidArgument {
            op: "concat",
            detail: "no inputs".into(),
        })?;
        let rows = self.nodes[first.0].shape.first().copied().unwrap_or(0);
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let s = &self.nodes[p.0].shape;
            if s.len() != 2 || s[0] != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: self.nodes[first.0].shape.clone(),
                    rhs: s.clone(),
                });
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut value = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, &w) in parts.iter().zip(&widths) {
                value.extend_from_slice(&self.nodes[p.0].value[r * w..(r + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let parts = parts.iter().copied().zip(widths).collect();
        Ok(self.push(vec![rows, total], value, Op::Concat { parts, rows }, rg))
    }

    /// Columns `start..end` of a 2-D value.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let shape = self.nodes[x.0].shape.clone();
        if shape.len() != 2 || start >= end || end > shape[1] {
            return Err(TensorError::InvalidArgument {
                op: "slice",
                detail: format!("columns {start}..{end} out of range for {shape:?}"),
            });
        }
        let (rows, cols) = (shape[0], shape[1]);
        let v = &self.nodes[x.0].value;
        let mut value = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            value.extend_from_slice(&v[r * cols + start..r * cols + end]);
        }
        let rg = self.rg(x);
        Ok(self.push(
            vec![rows, end - start],
            value,
            Op::SliceCols {
                src: x,
                cols,
                start,
                end,
            },
            rg,
        ))
    }

    /// Stacks 2-D values with equal column counts along the row axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or(TensorError::InvalidArgument {
            op: "concat_rows",
            detail: "no inputs".into(),
        })?;
        let cols = self.nodes[first.0].shape.get(1).copied().unwrap_or(0);
        let mut rows = 0;
        let mut value = Vec::new();
        for p in parts {
            let s = &self.nodes[p.0].shape;
            if s.len() != 2 || s[1] != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.nodes[first.0].shape.clone(),
                    rhs: s.clone(),
                });
            }
            rows += s[0];
            value.extend_from_slice(&self.nodes[p.0].value);
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let parts = parts.iter().map(|&p| (p, self.nodes[p.0].value.len())).collect();
        Ok(self.push(vec![rows, cols], value, Op::ConcatRows(parts), rg))
    }

    /// Rows `start..end` of a 2-D value.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let shape = self.nodes[x.0].shape.clone();
        if shape.len() != 2 || start >= end || end > shape[0] {
            return Err(TensorError::InvalidArgument {
                op: "slice_rows",
                detail: format!("rows {start}..{end} out of range for {shape:?}"),
            });
        }
        let cols = shape[1];
        let value = self.nodes[x.0].value[start * cols..end * cols].to_vec();
        let rg = self.rg(x);
        let op = Op::SliceRows {
            src: x,
            total: shape[0] * cols,
            offset: start * cols,
        };
        Ok(self.push(vec![end - start, cols], value, op, rg))
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients, TensorError> {
        if self.nodes.is_empty() {
            return Err(TensorError::EmptyTape);
        }
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_node.shape.clone()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut visited = Vec::new();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else { continue };
            visited.push(idx);
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, visited })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let mut acc = |target: Var, len: usize, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[target.0].requires_grad {
                return;
            }
            let slot = grads[target.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Binary {
                kind,
                lhs,
                rhs,
                lhs_period,
                rhs_period,
            } => {
                let a = &nodes[lhs.0].value;
                let b = &nodes[rhs.0].value;
                let (lp, rp) = (*lhs_period, *rhs_period);
                acc(*lhs, a.len(), &mut |ga| {
                    for (gi, (i, j)) in g.iter().zip(cycled(g.len(), lp, rp)) {
                        let d = match kind {
                            BinaryKind::Add | BinaryKind::Sub => 1.0,
                            BinaryKind::Mul => b[j],
                            BinaryKind::Div => 1.0 / b[j],
                        };
                        ga[i] += gi * d;
                    }
                });
                acc(*rhs, b.len(), &mut |gb| {
                    for (gi, (i, j)) in g.iter().zip(cycled(g.len(), lp, rp)) {
                        let d = match kind {
                            BinaryKind::Add => 1.0,
                            BinaryKind::Sub => -1.0,
                            BinaryKind::Mul => a[i],
                            BinaryKind::Div => {
                                let bv = b[j];
                                -a[i] / (bv * bv)
                            }
                        };
                        gb[j] += gi * d;
                    }
                });
            }
            Op::MatMul { lhs, rhs, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let a = &nodes[lhs.0].value;
                let b = &nodes[rhs.0].value;
                acc(*lhs, m * k, &mut |ga| gemm_acc(m, n, k, Strided::plain(g, n), Strided::transposed(b, n), ga));
                acc(*rhs, k * n, &mut |gb| gemm_acc(k, m, n, Strided::transposed(a, k), Strided::plain(g, n), gb));
            }
            Op::Sigmoid(src) => {
                let y = &node.value;
                acc(*src, y.len(), &mut |gs| {
                    for i in 0..y.len() {
                        gs[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::Tanh(src) => {
                let y = &node.value;
                acc(*src, y.len(), &mut |gs| {
                    for i in 0..y.len() {
                        gs[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                });
            }
            Op::Softplus(src) => {
                let x = &nodes[src.0].value;
                acc(*src, x.len(), &mut |gs| {
                    for i in 0..x.len() {
                        gs[i] += g[i] * sigmoid(x[i]);
                    }
                });
            }
            Op::Relu(src) => {
                let x = &nodes[src.0].value;
                acc(*src, x.len(), &mut |gs| {
                    for i in 0..x.len() {
                        if x[i] > 0.0 {
                            gs[i] += g[i];
                        }
                    }
                });
            }
            Op::Square(src) => {
                let x = &nodes[src.0].value;
                acc(*src, x.len(), &mut |gs| {
                    for i in 0..x.len() {
                        gs[i] += g[i] * 2.0 * x[i];
                    }
                });
            }
            Op::Sqrt(src) => {
                let y = &node.value;
                acc(*src, y.len(), &mut |gs| {
                    for i in 0..y.len() {
                        gs[i] += g[i] * 0.5 / y[i];
                    }
                });
            }
            Op::Affine { src, scale } => {
                acc(*src, g.len(), &mut |gs| {
                    gs.iter_mut().zip(g).for_each(|(o, gi)| *o += gi * scale);
                });
            }
            Op::Clamp { src, lo, hi } => {
                let x = &nodes[src.0].value;
                acc(*src, x.len(), &mut |gs| {
                    for i in 0..x.len() {
                        if x[i] >= *lo && x[i] <= *hi {
                            gs[i] += g[i];
                        }
                    }
                });
            }
            Op::Sum(src) => {
                let len = nodes[src.0].value.len();
                acc(*src, len, &mut |gs| gs.iter_mut().for_each(|o| *o += g[0]));
            }
            Op::Mean(src) => {
                let len = nodes[src.0].value.len();
                let d = g[0] / len as f64;
                acc(*src, len, &mut |gs| gs.iter_mut().for_each(|o| *o += d));
            }
            Op::MeanRows { src, rows } => {
                let width = g.len();
                let scale = 1.0 / *rows as f64;
                acc(*src, rows * width, &mut |gs| {
                    for r in 0..*rows {
                        gs[r * width..(r + 1) * width]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(o, gi)| *o += gi * scale);
                    }
                });
            }
            Op::Concat { parts, rows } => {
                let total: usize = parts.iter().map(|(_, w)| w).sum();
                let mut offset = 0;
                for (p, w) in parts {
                    let (w, off) = (*w, offset);
                    acc(*p, rows * w, &mut |gp| {
                        for r in 0..*rows {
                            gp[r * w..(r + 1) * w]
                                .iter_mut()
                                .zip(&g[r * total + off..r * total + off + w])
                                .for_each(|(o, gi)| *o += gi);
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols {
                src,
                cols,
                start,
                end,
            } => {
                let rows = node.shape[0];
                let w = end - start;
                acc(*src, rows * cols, &mut |gs| {
                    for r in 0..rows {
                        gs[r * cols + start..r * cols + end]
                            .iter_mut()
                            .zip(&g[r * w..(r + 1) * w])
                            .for_each(|(o, gi)| *o += gi);
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &(p, len) in parts {
                    let off = offset;
                    acc(p, len, &mut |gp| {
                        gp.iter_mut().zip(&g[off..off + len]).for_each(|(o, gi)| *o += gi);
                    });
                    offset += len;
                }
            }
            Op::SliceRows { src, total, offset } => {
                let off = *offset;
                acc(*src, *total, &mut |gs| {
                    gs[off..off + g.len()].iter_mut().zip(g).for_each(|(o, gi)| *o += gi);
                });
            }
        }
    }
}

/// Resolves elementwise broadcasting. Only a missing or unit leading (batch)
/// extent may be broadcast. Returns the output shape and the period with
/// which each operand's values repeat.
fn broadcast_plan(
    op: &'static str,
    a: &[usize],
    b: &[usize],
) -> Result<(Vec<usize>, usize, usize), TensorError> {
    let len = |s: &[usize]| s.iter().product::<usize>();
    if a == b {
        let n = len(a);
        return Ok((a.to_vec(), n.max(1), n.max(1)));
    }
    let row_of = |full: &[usize], part: &[usize]| -> bool {
        !full.is_empty()
            && (part == &full[1..] || (part.len() == full.len() && part[0] == 1 && part[1..] == full[1..]))
    };
    if row_of(a, b) {
        return Ok((a.to_vec(), len(a), len(b).max(1)));
    }
    if row_of(b, a) {
        return Ok((b.to_vec(), len(a).max(1), len(b)));
    }
    Err(TensorError::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    })
}
