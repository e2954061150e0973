//! Gradient tape. Nodes are appended in forward order, so the record is
//! already topologically sorted; `backward` walks it in exact reverse order,
//! which makes gradient accumulation deterministic.

use super::{TapeHandle, Tensor, TensorError, TensorResult};
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Adds a 1 x n row to every row of an m x n matrix.
    AddRow(Var, Var),
    /// Adds a 1 x 1 scalar to every element.
    AddScalar(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    SumAxis(Var, usize),
    SumAll(Var),
    Concat(Vec<Var>, usize),
    RowLookup(Var, usize),
    Pick(Var, usize),
    Softmax(Var, usize),
    Transpose(Var),
}

struct Node {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    op: Op,
}

pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    grads: Option<Vec<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: None,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, values: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(values.len(), rows * cols);
        // Any new node invalidates previously computed gradients.
        self.grads = None;
        self.nodes.push(Node {
            rows,
            cols,
            values,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).values
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    fn shape_of(&self, v: Var) -> Vec<usize> {
        let n = self.node(v);
        vec![n.rows, n.cols]
    }

    pub fn leaf(&mut self, rows: usize, cols: usize, values: &[f64]) -> TensorResult<Var> {
        if values.len() != rows * cols {
            return Err(TensorError::DataLength {
                expected: rows * cols,
                got: values.len(),
            });
        }
        Ok(self.push(rows, cols, values.to_vec(), Op::Leaf))
    }

    pub fn leaf_scalar(&mut self, v: f64) -> Var {
        self.push(1, 1, vec![v], Op::Leaf)
    }

    /// Binds a tensor as a leaf, recording the handle on the tensor.
    /// A tensor may appear at most once as a node in a given tape.
    pub fn bind(&mut self, t: &mut Tensor) -> TensorResult<Var> {
        if let Some(h) = t.node() {
            if h.tape == self.id {
                return Err(TensorError::AlreadyBound);
            }
        }
        let (rows, cols) = t.dims2()?;
        let var = self.leaf(rows, cols, t.values())?;
        t.set_node(Some(TapeHandle {
            tape: self.id,
            var,
        }));
        Ok(var)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape_of(a),
                right: self.shape_of(b),
            });
        }
        let av = &self.node(a).values;
        let bv = &self.node(b).values;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += x * brow[j];
                }
            }
        }
        Ok(self.push(m, n, out, Op::MatMul(a, b)))
    }

    fn elementwise_binary(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> TensorResult<Var> {
        let (m, n) = self.dims(a);
        if self.dims(b) != (m, n) {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                left: self.shape_of(a),
                right: self.shape_of(b),
            });
        }
        let out: Vec<f64> = self
            .node(a)
            .values
            .iter()
            .zip(&self.node(b).values)
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(m, n, out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.elementwise_binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.elementwise_binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.elementwise_binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// out[i, j] = a[i, j] + row[0, j]
    pub fn add_row(&mut self, a: Var, row: Var) -> TensorResult<Var> {
        let (m, n) = self.dims(a);
        if self.dims(row) != (1, n) {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                left: self.shape_of(a),
                right: self.shape_of(row),
            });
        }
        let rv = self.node(row).values.clone();
        let out: Vec<f64> = self
            .node(a)
            .values
            .iter()
            .enumerate()
            .map(|(idx, &x)| x + rv[idx % n])
            .collect();
        Ok(self.push(m, n, out, Op::AddRow(a, row)))
    }

    /// out[i, j] = a[i, j] + s[0, 0]
    pub fn add_scalar(&mut self, a: Var, s: Var) -> TensorResult<Var> {
        if self.dims(s) != (1, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "add_scalar",
                left: self.shape_of(a),
                right: self.shape_of(s),
            });
        }
        let (m, n) = self.dims(a);
        let sv = self.node(s).values[0];
        let out: Vec<f64> = self.node(a).values.iter().map(|&x| x + sv).collect();
        Ok(self.push(m, n, out, Op::AddScalar(a, s)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let (m, n) = self.dims(a);
        let out: Vec<f64> = self.node(a).values.iter().map(|&x| x * factor).collect();
        self.push(m, n, out, Op::Scale(a, factor))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (m, n) = self.dims(a);
        let out: Vec<f64> = self.node(a).values.iter().map(|&x| f(x)).collect();
        self.push(m, n, out, op)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    /// axis 0 collapses rows (m x n -> 1 x n), axis 1 collapses columns.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> TensorResult<Var> {
        let (m, n) = self.dims(a);
        let av = &self.node(a).values;
        match axis {
            0 => {
                let mut out = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        out[j] += av[i * n + j];
                    }
                }
                Ok(self.push(1, n, out, Op::SumAxis(a, 0)))
            }
            1 => {
                let mut out = vec![0.0; m];
                for i in 0..m {
                    for j in 0..n {
                        out[i] += av[i * n + j];
                    }
                }
                Ok(self.push(m, 1, out, Op::SumAxis(a, 1)))
            }
            _ => Err(TensorError::BadAxis {
                op: "sum_axis",
                axis,
            }),
        }
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.node(a).values.iter().sum();
        self.push(1, 1, vec![s], Op::SumAll(a))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> TensorResult<Var> {
        if parts.is_empty() {
            return Err(TensorError::EmptyConcat);
        }
        if axis > 1 {
            return Err(TensorError::BadAxis { op: "concat", axis });
        }
        let (m0, n0) = self.dims(parts[0]);
        match axis {
            0 => {
                let mut rows = 0;
                let mut out = Vec::new();
                for &p in parts {
                    let (m, n) = self.dims(p);
                    if n != n0 {
                        return Err(TensorError::ShapeMismatch {
                            op: "concat",
                            left: self.shape_of(parts[0]),
                            right: self.shape_of(p),
                        });
                    }
                    rows += m;
                    out.extend_from_slice(&self.node(p).values);
                }
                Ok(self.push(rows, n0, out, Op::Concat(parts.to_vec(), 0)))
            }
            _ => {
                let mut cols = 0;
                for &p in parts {
                    let (m, n) = self.dims(p);
                    if m != m0 {
                        return Err(TensorError::ShapeMismatch {
                            op: "concat",
                            left: self.shape_of(parts[0]),
                            right: self.shape_of(p),
                        });
                    }
                    cols += n;
                }
                let mut out = vec![0.0; m0 * cols];
                let mut off = 0;
                for &p in parts {
                    let (_, n) = self.dims(p);
                    let pv = &self.node(p).values;
                    for i in 0..m0 {
                        out[i * cols + off..i * cols + off + n]
                            .copy_from_slice(&pv[i * n..(i + 1) * n]);
                    }
                    off += n;
                }
                Ok(self.push(m0, cols, out, Op::Concat(parts.to_vec(), 1)))
            }
        }
    }

    /// Selects row `index` of a matrix as a 1 x n tensor.
    pub fn row_lookup(&mut self, a: Var, index: usize) -> TensorResult<Var> {
        let (m, n) = self.dims(a);
        if index >= m {
            return Err(TensorError::IndexOutOfRange {
                op: "row_lookup",
                index,
                extent: m,
            });
        }
        let out = self.node(a).values[index * n..(index + 1) * n].to_vec();
        Ok(self.push(1, n, out, Op::RowLookup(a, index)))
    }

    /// Selects one scalar by flat row-major index.
    pub fn pick(&mut self, a: Var, index: usize) -> TensorResult<Var> {
        let numel = self.node(a).values.len();
        if index >= numel {
            return Err(TensorError::IndexOutOfRange {
                op: "pick",
                index,
                extent: numel,
            });
        }
        let out = vec![self.node(a).values[index]];
        Ok(self.push(1, 1, out, Op::Pick(a, index)))
    }

    /// Softmax along the given axis, computed with max subtraction.
    pub fn softmax(&mut self, a: Var, axis: usize) -> TensorResult<Var> {
        if axis > 1 {
            return Err(TensorError::BadAxis {
                op: "softmax",
                axis,
            });
        }
        let (m, n) = self.dims(a);
        let av = &self.node(a).values;
        let mut out = vec![0.0; m * n];
        let (slices, len, stride, base) = if axis == 1 {
            (m, n, 1usize, n)
        } else {
            (n, m, n, 1usize)
        };
        for s in 0..slices {
            let start = s * base;
            let mut mx = f64::NEG_INFINITY;
            for i in 0..len {
                mx = mx.max(av[start + i * stride]);
            }
            let mut z = 0.0;
            for i in 0..len {
                let e = (av[start + i * stride] - mx).exp();
                out[start + i * stride] = e;
                z += e;
            }
            for i in 0..len {
                out[start + i * stride] /= z;
            }
        }
        Ok(self.push(m, n, out, Op::Softmax(a, axis)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let av = &self.node(a).values;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av[i * n + j];
            }
        }
        self.push(n, m, out, Op::Transpose(a))
    }

    /// Reverse pass from a scalar loss. Gradients of every node are computed;
    /// leaves not reachable from the loss keep zero gradients.
    pub fn backward(&mut self, loss: Var) -> TensorResult<()> {
        {
            let n = self.node(loss);
            if n.rows * n.cols != 1 {
                return Err(TensorError::NotScalar {
                    shape: vec![n.rows, n.cols],
                });
            }
        }
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.rows * n.cols])
            .collect();
        grads[loss.0][0] = 1.0;

        for id in (0..=loss.0).rev() {
            let op = self.nodes[id].op.clone();
            let g = grads[id].clone();
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k) = self.dims(a);
                    let (_, n) = self.dims(b);
                    // dA += dC B^T
                    {
                        let bv = &self.nodes[b.0].values;
                        let da = &mut grads[a.0];
                        for i in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g[i * n + j] * bv[p * n + j];
                                }
                                da[i * k + p] += s;
                            }
                        }
                    }
                    // dB += A^T dC
                    {
                        let av = &self.nodes[a.0].values;
                        let db = &mut grads[b.0];
                        for p in 0..k {
                            for j in 0..n {
                                let mut s = 0.0;
                                for i in 0..m {
                                    s += av[i * k + p] * g[i * n + j];
                                }
                                db[p * n + j] += s;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (i, &gi) in g.iter().enumerate() {
                        grads[a.0][i] += gi;
                    }
                    for (i, &gi) in g.iter().enumerate() {
                        grads[b.0][i] += gi;
                    }
                }
                Op::Sub(a, b) => {
                    for (i, &gi) in g.iter().enumerate() {
                        grads[a.0][i] += gi;
                    }
                    for (i, &gi) in g.iter().enumerate() {
                        grads[b.0][i] -= gi;
                    }
                }
                Op::Mul(a, b) => {
                    let bv = self.nodes[b.0].values.clone();
                    for (i, &gi) in g.iter().enumerate() {
                        grads[a.0][i] += gi * bv[i];
                    }
                    let av = &self.nodes[a.0].values;
                    for (i, &gi) in g.iter().enumerate() {
                        grads[b.0][i] += gi * av[i];
                    }
                }
                Op::AddRow(a, row) => {
                    let (_, n) = self.dims(a);
                    for (i, &gi) in g.iter().enumerate() {
                        grads[a.0][i] += gi;
                    }
                    for (i, &gi) in g.iter().enumerate() {
                        grads[row.0][i % n] += gi;
                    }
                }
                Op::AddScalar(a, s) => {
                    for (i, &gi) in g.iter().enumerate() {
                        grads[a.0][i] += gi;
                    }
                    grads[s.0][0] += g.iter().sum::<f64>();
                }
                Op::Scale(a, factor) => {
                    for (i, &gi) in g.iter().enumerate() {
                        grads[a.0][i] += gi * factor;
                    }
                }
                Op::Tanh(a) => {
                    let yv = &self.nodes[id].values;
                    for (i, &gi) in g.iter().enumerate() {
                        grads[a.0][i] += gi * (1.0 - yv[i] * yv[i]);
                    }
                }
                Op::Sigmoid(a) => {
                    let yv = &self.nodes[id].values;
                    for (i, &gi) in g.iter().enumerate() {
                        grads[a.0][i] += gi * yv[i] * (1.0 - yv[i]);
                    }
                }
                Op::Exp(a) => {
                    let yv = &self.nodes[id].values;
                    for (i, &gi) in g.iter().enumerate() {
                        grads[a.0][i] += gi * yv[i];
                    }
                }
                Op::Log(a) => {
                    let xv = &self.nodes[a.0].values;
                    for (i, &gi) in g.iter().enumerate() {
                        grads[a.0][i] += gi / xv[i];
                    }
                }
                Op::SumAxis(a, axis) => {
                    let (m, n) = self.dims(a);
                    if axis == 0 {
                        for i in 0..m {
                            for j in 0..n {
                                grads[a.0][i * n + j] += g[j];
                            }
                        }
                    } else {
                        for i in 0..m {
                            for j in 0..n {
                                grads[a.0][i * n + j] += g[i];
                            }
                        }
                    }
                }
                Op::SumAll(a) => {
                    let gi = g[0];
                    for v in grads[a.0].iter_mut() {
                        *v += gi;
                    }
                }
                Op::Concat(parts, axis) => {
                    if axis == 0 {
                        let mut off = 0;
                        for &p in &parts {
                            let (m, n) = self.dims(p);
                            for i in 0..m * n {
                                grads[p.0][i] += g[off + i];
                            }
                            off += m * n;
                        }
                    } else {
                        let (m0, cols) = {
                            let n = &self.nodes[id];
                            (n.rows, n.cols)
                        };
                        let mut off = 0;
                        for &p in &parts {
                            let (_, n) = self.dims(p);
                            for i in 0..m0 {
                                for j in 0..n {
                                    grads[p.0][i * n + j] += g[i * cols + off + j];
                                }
                            }
                            off += n;
                        }
                    }
                }
                Op::RowLookup(a, index) => {
                    let (_, n) = self.dims(a);
                    for j in 0..n {
                        grads[a.0][index * n + j] += g[j];
                    }
                }
                Op::Pick(a, index) => {
                    grads[a.0][index] += g[0];
                }
                Op::Softmax(a, axis) => {
                    let (m, n) = self.dims(a);
                    let yv = self.nodes[id].values.clone();
                    let (slices, len, stride, base) = if axis == 1 {
                        (m, n, 1usize, n)
                    } else {
                        (n, m, n, 1usize)
                    };
                    for s in 0..slices {
                        let start = s * base;
                        let mut dot = 0.0;
                        for i in 0..len {
                            let idx = start + i * stride;
                            dot += g[idx] * yv[idx];
                        }
                        for i in 0..len {
                            let idx = start + i * stride;
                            grads[a.0][idx] += yv[idx] * (g[idx] - dot);
                        }
                    }
                }
                Op::Transpose(a) => {
                    let (m, n) = self.dims(a);
                    for i in 0..m {
                        for j in 0..n {
                            grads[a.0][i * n + j] += g[j * m + i];
                        }
                    }
                }
            }
        }
        self.grads = Some(grads);
        Ok(())
    }

    pub fn grad(&self, v: Var) -> TensorResult<&[f64]> {
        match &self.grads {
            Some(g) => Ok(&g[v.0]),
            None => Err(TensorError::GradsNotReady),
        }
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
