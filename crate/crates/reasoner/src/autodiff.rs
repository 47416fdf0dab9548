//! Reverse-mode automatic differentiation over dense f64 matrices.
//!
//! A [`Tape`] is an append-only arena of tensors; every operation records its
//! parents so [`Tape::backward`] can sweep the nodes in reverse creation
//! order and accumulate exact vector-Jacobian products. Gradients persist
//! until [`Tape::zero_grads`], so two backward calls double them. All
//! computation is in 64-bit floats.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error(
        "shape mismatch in {op}: left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}"
    )]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },
    #[error("backward requires a 1x1 tensor, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },
    #[error("{op} expects a column vector, got {rows}x{cols}")]
    NotColumn {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("{op}: {what} {value} exceeds the slot count {limit}")]
    Bounds {
        op: &'static str,
        what: &'static str,
        value: usize,
        limit: usize,
    },
}

/// Handle into a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(TensorId, TensorId),
    Hadamard(TensorId, TensorId),
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Neg(TensorId),
    Transpose(TensorId),
    Log(TensorId),
    Sum(TensorId),
    SoftmaxCols(TensorId),
    NormalizeCols(TensorId),
    Clamp(TensorId, f64, f64),
    StackColumns(Vec<TensorId>),
    RowBroadcast(TensorId),
    WeightBlock {
        weight: TensorId,
        rows_active: usize,
        cols_active: usize,
    },
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    grad: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(
        &mut self,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        requires_grad: bool,
        op: Op,
    ) -> TensorId {
        debug_assert_eq!(data.len(), rows * cols);
        let grad = vec![0.0; data.len()];
        self.nodes.push(Node {
            rows,
            cols,
            data,
            grad,
            requires_grad,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn any_requires(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> TensorId {
        assert_eq!(data.len(), rows * cols, "data length must match shape");
        self.push(rows, cols, data, false, Op::Leaf)
    }

    pub fn parameter(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> TensorId {
        assert_eq!(data.len(), rows * cols, "data length must match shape");
        self.push(rows, cols, data, true, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> TensorId {
        self.constant(1, 1, vec![value])
    }

    pub fn ones(&mut self, rows: usize, cols: usize) -> TensorId {
        self.constant(rows, cols, vec![1.0; rows * cols])
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> TensorId {
        self.constant(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(&mut self, n: usize) -> TensorId {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        self.constant(n, n, data)
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn grad(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    /// The single element of a 1x1 tensor.
    pub fn item(&self, id: TensorId) -> f64 {
        let n = &self.nodes[id.0];
        assert_eq!((n.rows, n.cols), (1, 1), "item() needs a 1x1 tensor");
        n.data[0]
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs_rows: ar,
                lhs_cols: ac,
                rhs_rows: br,
                rhs_cols: bc,
            });
        }
        let data = matmul_raw(self.value(a), ar, ac, self.value(b), bc);
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(ar, bc, data, rg, Op::MatMul(a, b)))
    }

    fn elementwise(
        &mut self,
        op_name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId, TensorError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if (ar, ac) != (br, bc) {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                lhs_rows: ar,
                lhs_cols: ac,
                rhs_rows: br,
                rhs_cols: bc,
            });
        }
        let data = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(ar, ac, data, rg, op))
    }

    pub fn hadamard(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.elementwise("hadamard", a, b, |x, y| x * y, Op::Hadamard(a, b))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn neg(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let data = self.value(a).iter().map(|&x| -x).collect();
        let rg = self.any_requires(&[a]);
        self.push(r, c, data, rg, Op::Neg(a))
    }

    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let src = self.value(a);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.any_requires(&[a]);
        self.push(c, r, data, rg, Op::Transpose(a))
    }

    /// Elementwise natural logarithm.
    pub fn log_elem(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let data = self.value(a).iter().map(|&x| x.ln()).collect();
        let rg = self.any_requires(&[a]);
        self.push(r, c, data, rg, Op::Log(a))
    }

    /// Sum of all entries as a 1x1 tensor.
    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let total: f64 = self.value(a).iter().sum();
        let rg = self.any_requires(&[a]);
        self.push(1, 1, vec![total], rg, Op::Sum(a))
    }

    /// Column-wise softmax with max subtraction; every column sums to 1.
    pub fn softmax_cols(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let src = self.value(a);
        let mut data = vec![0.0; r * c];
        for k in 0..c {
            let mut max = f64::NEG_INFINITY;
            for j in 0..r {
                max = max.max(src[j * c + k]);
            }
            let mut denom = 0.0;
            for j in 0..r {
                let e = (src[j * c + k] - max).exp();
                data[j * c + k] = e;
                denom += e;
            }
            for j in 0..r {
                data[j * c + k] /= denom;
            }
        }
        let rg = self.any_requires(&[a]);
        self.push(r, c, data, rg, Op::SoftmaxCols(a))
    }

    /// Scales every column to unit Euclidean norm; zero columns pass through
    /// (with zero gradient), which is what padded slots need.
    pub fn normalize_cols(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let src = self.value(a);
        let mut data = src.to_vec();
        for k in 0..c {
            let norm = (0..r)
                .map(|j| src[j * c + k] * src[j * c + k])
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                for j in 0..r {
                    data[j * c + k] /= norm;
                }
            }
        }
        let rg = self.any_requires(&[a]);
        self.push(r, c, data, rg, Op::NormalizeCols(a))
    }

    /// Elementwise clamp into [lo, hi]; gradient passes only inside the band.
    pub fn clamp(&mut self, a: TensorId, lo: f64, hi: f64) -> TensorId {
        let (r, c) = self.shape(a);
        let data = self.value(a).iter().map(|&x| x.clamp(lo, hi)).collect();
        let rg = self.any_requires(&[a]);
        self.push(r, c, data, rg, Op::Clamp(a, lo, hi))
    }

    /// Lays out column vectors side by side in a `dim` x `slots` matrix,
    /// zero-padding the remaining columns. All sources must be dim x 1; an
    /// empty source list gives the zero matrix.
    pub fn stack_columns(
        &mut self,
        sources: &[TensorId],
        slots: usize,
        dim: usize,
    ) -> Result<TensorId, TensorError> {
        if sources.len() > slots {
            return Err(TensorError::Bounds {
                op: "stack_columns",
                what: "column count",
                value: sources.len(),
                limit: slots,
            });
        }
        for &s in sources {
            let (r, c) = self.shape(s);
            if c != 1 {
                return Err(TensorError::NotColumn {
                    op: "stack_columns",
                    rows: r,
                    cols: c,
                });
            }
            if r != dim {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_columns",
                    lhs_rows: dim,
                    lhs_cols: 1,
                    rhs_rows: r,
                    rhs_cols: c,
                });
            }
        }
        let mut data = vec![0.0; dim * slots];
        for (k, &s) in sources.iter().enumerate() {
            let col = self.value(s).to_vec();
            for (j, v) in col.iter().enumerate() {
                data[j * slots + k] = *v;
            }
        }
        let rg = self.any_requires(sources);
        Ok(self.push(dim, slots, data, rg, Op::StackColumns(sources.to_vec())))
    }

    /// n x n matrix whose row j repeats `v[j]` across all columns for j below
    /// the vector length, zero elsewhere. Used for the threshold bias.
    pub fn row_broadcast(&mut self, v: TensorId, n: usize) -> Result<TensorId, TensorError> {
        let (r, c) = self.shape(v);
        if c != 1 {
            return Err(TensorError::NotColumn {
                op: "row_broadcast",
                rows: r,
                cols: c,
            });
        }
        if r > n {
            return Err(TensorError::Bounds {
                op: "row_broadcast",
                what: "row count",
                value: r,
                limit: n,
            });
        }
        let src = self.value(v).to_vec();
        let mut data = vec![0.0; n * n];
        for (j, val) in src.iter().enumerate() {
            for k in 0..n {
                data[j * n + k] = *val;
            }
        }
        let rg = self.any_requires(&[v]);
        Ok(self.push(n, n, data, rg, Op::RowBroadcast(v)))
    }

    /// n x n matrix equal to the scalar `weight` on the top-left
    /// rows_active x cols_active block and zero elsewhere.
    pub fn weight_block(
        &mut self,
        weight: TensorId,
        rows_active: usize,
        cols_active: usize,
        n: usize,
    ) -> Result<TensorId, TensorError> {
        let (r, c) = self.shape(weight);
        if (r, c) != (1, 1) {
            return Err(TensorError::NotScalar { rows: r, cols: c });
        }
        if rows_active > n {
            return Err(TensorError::Bounds {
                op: "weight_block",
                what: "post-condition count",
                value: rows_active,
                limit: n,
            });
        }
        if cols_active > n {
            return Err(TensorError::Bounds {
                op: "weight_block",
                what: "pre-condition count",
                value: cols_active,
                limit: n,
            });
        }
        let w = self.item(weight);
        let mut data = vec![0.0; n * n];
        for i in 0..rows_active {
            for j in 0..cols_active {
                data[i * n + j] = w;
            }
        }
        let rg = self.any_requires(&[weight]);
        Ok(self.push(
            n,
            n,
            data,
            rg,
            Op::WeightBlock {
                weight,
                rows_active,
                cols_active,
            },
        ))
    }

    /// Accumulates d(loss)/d(tensor) into the grad buffer of every
    /// requires_grad tensor reachable from `loss`.
    pub fn backward(&mut self, loss: TensorId) -> Result<(), TensorError> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(TensorError::NotScalar { rows: r, cols: c });
        }
        let mut adjoint: Vec<Vec<f64>> =
            self.nodes.iter().map(|n| vec![0.0; n.data.len()]).collect();
        adjoint[loss.0][0] = 1.0;

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if adjoint[idx].iter().all(|&g| g == 0.0) {
                continue;
            }
            let up = adjoint[idx].clone();
            match self.nodes[idx].op.clone() {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (ar, ac) = self.shape(a);
                    let (_, bc) = self.shape(b);
                    // dA += dC * B^T
                    let bt = transpose_raw(self.value(b), ac, bc);
                    let da = matmul_raw(&up, ar, bc, &bt, ac);
                    axpy(&mut adjoint[a.0], &da);
                    // dB += A^T * dC
                    let at = transpose_raw(self.value(a), ar, ac);
                    let db = matmul_raw(&at, ac, ar, &up, bc);
                    axpy(&mut adjoint[b.0], &db);
                }
                Op::Hadamard(a, b) => {
                    let bv = self.value(b).to_vec();
                    for (i, g) in up.iter().enumerate() {
                        adjoint[a.0][i] += g * bv[i];
                    }
                    let av = self.value(a).to_vec();
                    for (i, g) in up.iter().enumerate() {
                        adjoint[b.0][i] += g * av[i];
                    }
                }
                Op::Add(a, b) => {
                    axpy(&mut adjoint[a.0], &up);
                    axpy(&mut adjoint[b.0], &up);
                }
                Op::Sub(a, b) => {
                    axpy(&mut adjoint[a.0], &up);
                    for (i, g) in up.iter().enumerate() {
                        adjoint[b.0][i] -= g;
                    }
                }
                Op::Neg(a) => {
                    for (i, g) in up.iter().enumerate() {
                        adjoint[a.0][i] -= g;
                    }
                }
                Op::Transpose(a) => {
                    let (r, c) = self.shape(idx_id(idx));
                    let upt = transpose_raw(&up, r, c);
                    axpy(&mut adjoint[a.0], &upt);
                }
                Op::Log(a) => {
                    let av = self.value(a).to_vec();
                    for (i, g) in up.iter().enumerate() {
                        adjoint[a.0][i] += g / av[i];
                    }
                }
                Op::Sum(a) => {
                    let g = up[0];
                    for slot in adjoint[a.0].iter_mut() {
                        *slot += g;
                    }
                }
                Op::SoftmaxCols(a) => {
                    let (r, c) = self.shape(idx_id(idx));
                    let y = self.nodes[idx].data.clone();
                    for k in 0..c {
                        let mut dot = 0.0;
                        for j in 0..r {
                            dot += up[j * c + k] * y[j * c + k];
                        }
                        for j in 0..r {
                            adjoint[a.0][j * c + k] += y[j * c + k] * (up[j * c + k] - dot);
                        }
                    }
                }
                Op::NormalizeCols(a) => {
                    let (r, c) = self.shape(idx_id(idx));
                    let x = self.value(a).to_vec();
                    let y = self.nodes[idx].data.clone();
                    for k in 0..c {
                        let norm = (0..r)
                            .map(|j| x[j * c + k] * x[j * c + k])
                            .sum::<f64>()
                            .sqrt();
                        if norm == 0.0 {
                            continue;
                        }
                        let mut dot = 0.0;
                        for j in 0..r {
                            dot += y[j * c + k] * up[j * c + k];
                        }
                        for j in 0..r {
                            adjoint[a.0][j * c + k] += (up[j * c + k] - y[j * c + k] * dot) / norm;
                        }
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let av = self.value(a).to_vec();
                    for (i, g) in up.iter().enumerate() {
                        if av[i] >= lo && av[i] <= hi {
                            adjoint[a.0][i] += g;
                        }
                    }
                }
                Op::StackColumns(sources) => {
                    let (dim, slots) = self.shape(idx_id(idx));
                    for (k, s) in sources.iter().enumerate() {
                        for j in 0..dim {
                            adjoint[s.0][j] += up[j * slots + k];
                        }
                    }
                }
                Op::RowBroadcast(v) => {
                    let (n, _) = self.shape(idx_id(idx));
                    let rows = self.shape(v).0;
                    for j in 0..rows {
                        let mut total = 0.0;
                        for k in 0..n {
                            total += up[j * n + k];
                        }
                        adjoint[v.0][j] += total;
                    }
                }
                Op::WeightBlock {
                    weight,
                    rows_active,
                    cols_active,
                } => {
                    let (n, _) = self.shape(idx_id(idx));
                    let mut total = 0.0;
                    for i in 0..rows_active {
                        for j in 0..cols_active {
                            total += up[i * n + j];
                        }
                    }
                    adjoint[weight.0][0] += total;
                }
            }
        }

        for (idx, node) in self.nodes.iter_mut().enumerate() {
            if node.requires_grad {
                for (g, a) in node.grad.iter_mut().zip(&adjoint[idx]) {
                    *g += a;
                }
            }
        }
        Ok(())
    }

    /// Clears every accumulated gradient on the tape.
    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            for g in &mut node.grad {
                *g = 0.0;
            }
        }
    }
}

fn idx_id(idx: usize) -> TensorId {
    TensorId(idx)
}

fn axpy(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn matmul_raw(a: &[f64], ar: usize, ac: usize, b: &[f64], bc: usize) -> Vec<f64> {
    let mut out = vec![0.0; ar * bc];
    for i in 0..ar {
        for k in 0..ac {
            let aik = a[i * ac + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..bc {
                out[i * bc + j] += aik * b[k * bc + j];
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}
