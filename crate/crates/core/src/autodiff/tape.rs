//! Batched reverse-mode tape.
//!
//! Every node holds a row-major `rows x cols` matrix; rows are independent
//! samples of a batch. Parameters are not copied onto the tape: `Linear`
//! nodes refer to blocks of a [`ParamStore`] and accumulate their gradients
//! there during [`Tape::backward`].

use crate::autodiff::params::{BlockId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} values cannot fill {rows}x{cols}", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn column(values: Vec<f64>) -> Self {
        Self { rows: values.len(), cols: 1, data: values }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn scalar(&self) -> Option<f64> {
        (self.rows == 1 && self.cols == 1).then(|| self.data[0])
    }

    fn add_assign(&mut self, other: &Matrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// User-defined primitive with one differentiable input.
pub trait CustomOp: Send + Sync {
    /// Accumulates the vector-Jacobian product into `input_grad` (when the
    /// input needs gradients) and into parameter gradients in `store`.
    fn backward(&self, out_grad: &Matrix, input: &Matrix, input_grad: Option<&mut Matrix>, store: &mut ParamStore);
}

enum Op {
    Leaf,
    Linear { x: Var, weight: BlockId, bias: BlockId },
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Square(Var),
    Scale(Var, f64),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Mean(Var),
    RowNorm(Var),
    Custom { x: Var, op: Box<dyn CustomOp> },
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    last_visits: usize,
    clamped_queries: u64,
    leaf_grads: Vec<Option<Matrix>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward root with respect to an input leaf.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.leaf_grads.get(v.0).and_then(Option::as_ref)
    }

    /// Nodes processed by the most recent backward sweep.
    pub fn last_backward_visits(&self) -> usize {
        self.last_visits
    }

    /// Queries that had to be clamped into the normalized cube.
    pub fn clamped_queries(&self) -> u64 {
        self.clamped_queries
    }

    pub fn note_clamped(&mut self, n: u64) {
        self.clamped_queries += n;
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is kept (used by gradient checks on inputs).
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn linear(&mut self, x: Var, store: &ParamStore, weight: BlockId, bias: BlockId) -> Result<Var> {
        let w = store.block(weight);
        let b = store.block(bias);
        let (out, inp) = match w.shape[..] {
            [o, i] => (o, i),
            _ => return Err(Error::Shape(format!("weight block {} is not 2-D", w.name))),
        };
        let xv = &self.nodes[x.0].value;
        if xv.cols != inp || b.value.len() != out {
            return Err(Error::Shape(format!(
                "layer {} expects {inp} inputs and {out} biases, got {} inputs and {} biases",
                w.name,
                xv.cols,
                b.value.len()
            )));
        }
        let rows = xv.rows;
        let mut y = Matrix::zeros(rows, out);
        for r in 0..rows {
            y.row_mut(r).copy_from_slice(&b.value);
        }
        // y = x · wᵀ + y
        unsafe {
            matrixmultiply::dgemm(
                rows, inp, out, 1.0,
                xv.data.as_ptr(), inp as isize, 1,
                w.value.as_ptr(), 1, inp as isize,
                1.0,
                y.data.as_mut_ptr(), out as isize, 1,
            );
        }
        Ok(self.push(y, Op::Linear { x, weight, bias }, true))
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let xv = &self.nodes[x.0].value;
        let value = Matrix { rows: xv.rows, cols: xv.cols, data: xv.data.iter().map(|&v| f(v)).collect() };
        let needs = self.needs(x);
        self.push(value, op, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, Op::Exp(x), f64::exp)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map(x, Op::Square(x), |v| v * v)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map(x, Op::Scale(x, c), |v| v * c)
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if (av.rows, av.cols) != (bv.rows, bv.cols) {
            return Err(Error::Shape(format!(
                "elementwise op on {}x{} and {}x{}",
                av.rows, av.cols, bv.rows, bv.cols
            )));
        }
        let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| f(x, y)).collect();
        let value = Matrix { rows: av.rows, cols: av.cols, data };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, op, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.nodes[parts[0].0].value.rows;
        if parts.iter().any(|p| self.nodes[p.0].value.rows != rows) {
            return Err(Error::Shape("concat inputs disagree on row count".into()));
        }
        let cols: usize = parts.iter().map(|p| self.nodes[p.0].value.cols).sum();
        let mut value = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let src = self.nodes[p.0].value.row(r);
                value.data[r * cols + off..r * cols + off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::Concat(parts.to_vec()), needs))
    }

    /// Columns `start..start + cols` of `x`.
    pub fn slice(&mut self, x: Var, start: usize, cols: usize) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if start + cols > xv.cols {
            return Err(Error::Shape(format!("slice {start}..{} of {} columns", start + cols, xv.cols)));
        }
        let mut value = Matrix::zeros(xv.rows, cols);
        for r in 0..xv.rows {
            value.row_mut(r).copy_from_slice(&xv.row(r)[start..start + cols]);
        }
        let needs = self.needs(x);
        Ok(self.push(value, Op::Slice { x, start }, needs))
    }

    /// Mean over every element, as a 1x1 node.
    pub fn mean(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let m = if xv.data.is_empty() { 0.0 } else { xv.data.iter().sum::<f64>() / xv.data.len() as f64 };
        let needs = self.needs(x);
        self.push(Matrix { rows: 1, cols: 1, data: vec![m] }, Op::Mean(x), needs)
    }

    /// Euclidean norm of each row, as a column.
    pub fn row_norm(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let data = (0..xv.rows).map(|r| xv.row(r).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let needs = self.needs(x);
        self.push(Matrix::column(data), Op::RowNorm(x), needs)
    }

    pub fn custom(&mut self, x: Var, value: Matrix, op: Box<dyn CustomOp>) -> Var {
        self.push(value, Op::Custom { x, op }, true)
    }

    /// Propagates d(root)/d(·) back through the tape, accumulating
    /// parameter gradients into `store`.
    pub fn backward(&mut self, root: Var, store: &mut ParamStore) -> Result<()> {
        if self.nodes[root.0].value.scalar().is_none() {
            let v = &self.nodes[root.0].value;
            return Err(Error::Contract(format!("backward root must be 1x1, got {}x{}", v.rows, v.cols)));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix { rows: 1, cols: 1, data: vec![1.0] });
        self.last_visits = 0;

        for i in (0..=root.0).rev() {
            self.last_visits += 1;
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let nodes = &self.nodes;
            let send = |grads: &mut Vec<Option<Matrix>>, target: Var, contrib: Matrix| {
                if !nodes[target.0].needs_grad {
                    return;
                }
                match &mut grads[target.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot => *slot = Some(contrib),
                }
            };
            let elementwise = |x: Var, f: &dyn Fn(f64, f64, f64) -> f64| {
                let xv = &nodes[x.0].value;
                let data = g
                    .data
                    .iter()
                    .zip(&xv.data)
                    .zip(&node.value.data)
                    .map(|((&gi, &xi), &yi)| f(gi, xi, yi))
                    .collect();
                Matrix { rows: xv.rows, cols: xv.cols, data }
            };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::Linear { x, weight, bias } => {
                    let xv = &nodes[x.0].value;
                    let (rows, inp, out) = (xv.rows, xv.cols, node.value.cols);
                    {
                        let bg = &mut store.block_mut(*bias).grad;
                        for r in 0..rows {
                            for (acc, &v) in bg.iter_mut().zip(g.row(r)) {
                                *acc += v;
                            }
                        }
                    }
                    {
                        // dW += gᵀ · x
                        let wg = &mut store.block_mut(*weight).grad;
                        unsafe {
                            matrixmultiply::dgemm(
                                out, rows, inp, 1.0,
                                g.data.as_ptr(), 1, out as isize,
                                xv.data.as_ptr(), inp as isize, 1,
                                1.0,
                                wg.as_mut_ptr(), inp as isize, 1,
                            );
                        }
                    }
                    if nodes[x.0].needs_grad {
                        // dx = g · W
                        let w = &store.block(*weight).value;
                        let mut dx = Matrix::zeros(rows, inp);
                        unsafe {
                            matrixmultiply::dgemm(
                                rows, out, inp, 1.0,
                                g.data.as_ptr(), out as isize, 1,
                                w.as_ptr(), inp as isize, 1,
                                0.0,
                                dx.data.as_mut_ptr(), inp as isize, 1,
                            );
                        }
                        send(&mut grads, *x, dx);
                    }
                }
                Op::Relu(x) => {
                    let dx = elementwise(*x, &|g, x, _| if x > 0.0 { g } else { 0.0 });
                    send(&mut grads, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let dx = elementwise(*x, &|g, _, y| g * y * (1.0 - y));
                    send(&mut grads, *x, dx);
                }
                Op::Exp(x) => {
                    let dx = elementwise(*x, &|g, _, y| g * y);
                    send(&mut grads, *x, dx);
                }
                Op::Square(x) => {
                    let dx = elementwise(*x, &|g, x, _| 2.0 * g * x);
                    send(&mut grads, *x, dx);
                }
                Op::Scale(x, c) => {
                    let c = *c;
                    let dx = elementwise(*x, &|g, _, _| g * c);
                    send(&mut grads, *x, dx);
                }
                Op::Add(a, b) => {
                    send(&mut grads, *b, g.clone());
                    send(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    let neg = Matrix { rows: g.rows, cols: g.cols, data: g.data.iter().map(|v| -v).collect() };
                    send(&mut grads, *b, neg);
                    send(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    if nodes[a.0].needs_grad {
                        let data = g.data.iter().zip(&bv.data).map(|(g, b)| g * b).collect();
                        send(&mut grads, *a, Matrix { rows: g.rows, cols: g.cols, data });
                    }
                    if nodes[b.0].needs_grad {
                        let data = g.data.iter().zip(&av.data).map(|(g, a)| g * a).collect();
                        send(&mut grads, *b, Matrix { rows: g.rows, cols: g.cols, data });
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let cols = nodes[p.0].value.cols;
                        if nodes[p.0].needs_grad {
                            let mut dp = Matrix::zeros(g.rows, cols);
                            for r in 0..g.rows {
                                dp.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                            }
                            send(&mut grads, *p, dp);
                        }
                        off += cols;
                    }
                }
                Op::Slice { x, start } => {
                    let xv = &nodes[x.0].value;
                    let mut dx = Matrix::zeros(xv.rows, xv.cols);
                    for r in 0..xv.rows {
                        dx.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    send(&mut grads, *x, dx);
                }
                Op::Mean(x) => {
                    let xv = &nodes[x.0].value;
                    let n = xv.data.len().max(1) as f64;
                    let dx = Matrix { rows: xv.rows, cols: xv.cols, data: vec![g.data[0] / n; xv.data.len()] };
                    send(&mut grads, *x, dx);
                }
                Op::RowNorm(x) => {
                    let xv = &nodes[x.0].value;
                    let mut dx = Matrix::zeros(xv.rows, xv.cols);
                    for r in 0..xv.rows {
                        let n = node.value.data[r];
                        // subgradient 0 at the origin
                        if n > 0.0 {
                            let scale = g.data[r] / n;
                            for (d, &v) in dx.row_mut(r).iter_mut().zip(xv.row(r)) {
                                *d = scale * v;
                            }
                        }
                    }
                    send(&mut grads, *x, dx);
                }
                Op::Custom { x, op } => {
                    let xv = &nodes[x.0].value;
                    if nodes[x.0].needs_grad {
                        let mut dx = Matrix::zeros(xv.rows, xv.cols);
                        op.backward(&g, xv, Some(&mut dx), store);
                        send(&mut grads, *x, dx);
                    } else {
                        op.backward(&g, xv, None, store);
                    }
                }
            }
        }
        self.leaf_grads = grads;
        Ok(())
    }
}
