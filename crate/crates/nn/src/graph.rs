//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation in evaluation order. Nodes only ever
//! reference earlier nodes, so a single reverse sweep computes all
//! gradients. One tape may be swept several times from different roots,
//! which is how per-task gradients are collected for loss balancing.

use crate::crf;
use crate::params::{ParamId, ParamStore};
use crate::tensor::{dot, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    ScaleBy(Var, Var),
    DivBy(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Gather(Var, Vec<usize>),
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    PoolCols(Var, Vec<Vec<usize>>),
    CosineRows(Var, Var),
    CrfNll { emissions: Var, transitions: Var, start: Var, end: Var, tags: Vec<usize>, marginals: crf::CrfMarginals },
    Lstm { projected: Var, recurrent: Var, reverse: bool, gates: Tensor, cells: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

pub struct Graph<'s> {
    store: Option<&'s ParamStore>,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Result of one reverse sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the swept root with respect to `v`, if `v` influenced it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

impl Default for Graph<'static> {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph<'static> {
    /// A tape without parameters; only [`Graph::input`] leaves are available.
    pub fn new() -> Self {
        Self { store: None, nodes: Vec::new(), param_vars: Vec::new() }
    }
}

impl<'s> Graph<'s> {
    pub fn with_params(store: &'s ParamStore) -> Self {
        Self { store: Some(store), nodes: Vec::with_capacity(1024), param_vars: vec![None; store.len()] }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push(Tensor::scalar(value), Op::Leaf)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let store = self.store.expect("graph has no parameter store");
        let v = self.push(store.get(id).clone(), Op::Param);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "add_row expects a 1x{c} row");
        let mut v = self.value(a).clone();
        let rv = self.value(row).data().to_vec();
        for i in 0..r {
            for (x, b) in v.row_mut(i).iter_mut().zip(&rv) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1 × n` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "mul_row expects a 1x{c} row");
        let mut v = self.value(a).clone();
        let rv = self.value(row).data().to_vec();
        for i in 0..r {
            for (x, b) in v.row_mut(i).iter_mut().zip(&rv) {
                *x *= b;
            }
        }
        self.push(v, Op::MulRow(a, row))
    }

    /// `s · a` for a `1 × 1` node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let v = self.value(a).scale(sv);
        self.push(v, Op::ScaleBy(a, s))
    }

    /// `a / s` for a `1 × 1` node `s`.
    pub fn div_by(&mut self, a: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let v = self.value(a).scale(1.0 / sv);
        self.push(v, Op::DivBy(a, s))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddConst(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for r in 0..x.rows() {
            let lse = crf::log_sum_exp(x.row(r).iter().copied());
            for e in v.row_mut(r) {
                *e -= lse;
            }
        }
        self.push(v, Op::LogSoftmaxRows(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut v = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let pv = self.value(p);
                assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
                v.row_mut(r)[off..off + pv.cols()].copy_from_slice(pv.row(r));
                off += pv.cols();
            }
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(pv.data());
            rows += pv.rows();
        }
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols(), "slice_cols out of range");
        let mut v = Tensor::zeros(x.rows(), len);
        for r in 0..x.rows() {
            v.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.rows(), "slice_rows out of range");
        let c = x.cols();
        let v = Tensor::from_vec(len, c, x.data()[start * c..(start + len) * c].to_vec());
        self.push(v, Op::SliceRows(a, start))
    }

    /// Picks flat (row-major) entries of `a` into a `1 × n` row.
    pub fn gather(&mut self, a: Var, flat_indices: &[usize]) -> Var {
        let x = self.value(a);
        let v = Tensor::row_vector(flat_indices.iter().map(|&i| x.data()[i]).collect());
        self.push(v, Op::Gather(a, flat_indices.to_vec()))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = Tensor::from_vec(rows, cols, self.value(a).data().to_vec());
        self.push(v, Op::Reshape(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Column sums as a `1 × cols` row.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Tensor::zeros(1, x.cols());
        for r in 0..x.rows() {
            for (o, e) in v.row_mut(0).iter_mut().zip(x.row(r)) {
                *o += e;
            }
        }
        self.push(v, Op::SumRows(a))
    }

    /// Column means as a `1 × cols` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let n = self.shape(a).0 as f64;
        let s = self.sum_rows(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums as a `rows × 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Tensor::from_vec(x.rows(), 1, (0..x.rows()).map(|r| x.row(r).iter().sum()).collect());
        self.push(v, Op::SumCols(a))
    }

    /// Mean of the `k` largest entries of every row, as a `rows × 1`
    /// column. Rows shorter than `k` average all their entries; ties go to
    /// the lower column index.
    pub fn kmax_mean_cols(&mut self, a: Var, k: usize) -> Var {
        assert!(k >= 1, "k-max pooling needs k >= 1");
        let x = self.value(a);
        let mut picks = Vec::with_capacity(x.rows());
        let mut out = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let idx = top_k_indices(x.row(r), k);
            out.push(idx.iter().map(|&i| x.row(r)[i]).sum::<f64>() / idx.len() as f64);
            picks.push(idx);
        }
        let v = Tensor::from_vec(x.rows(), 1, out);
        self.push(v, Op::PoolCols(a, picks))
    }

    pub fn max_cols(&mut self, a: Var) -> Var {
        self.kmax_mean_cols(a, 1)
    }

    /// Pairwise cosine similarity between the rows of `a` (`m × d`) and the
    /// rows of `b` (`n × d`). A zero row has cosine 0 with everything.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols(), bv.cols(), "cosine_rows dimension mismatch");
        let an: Vec<f64> = (0..av.rows()).map(|r| dot(av.row(r), av.row(r)).sqrt()).collect();
        let bn: Vec<f64> = (0..bv.rows()).map(|r| dot(bv.row(r), bv.row(r)).sqrt()).collect();
        let mut v = Tensor::zeros(av.rows(), bv.rows());
        for i in 0..av.rows() {
            for j in 0..bv.rows() {
                let d = an[i] * bn[j];
                if d > 0.0 {
                    v.set(i, j, dot(av.row(i), bv.row(j)) / d);
                }
            }
        }
        self.push(v, Op::CosineRows(a, b))
    }

    /// Cosine between two equally sized tensors viewed as flat vectors.
    pub fn cosine(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).len(), self.value(b).len(), "cosine dimension mismatch");
        let n = self.value(a).len();
        let ra = if self.shape(a).0 == 1 { a } else { self.reshape(a, 1, n) };
        let rb = if self.shape(b).0 == 1 { b } else { self.reshape(b, 1, n) };
        self.cosine_rows(ra, rb)
    }

    /// Negative log-likelihood of `tags` under a linear-chain CRF.
    pub fn crf_nll(&mut self, emissions: Var, transitions: Var, start: Var, end: Var, tags: &[usize]) -> Var {
        let (e, t, s, n) = (self.value(emissions), self.value(transitions), self.value(start), self.value(end));
        let marginals = crf::marginals(e, t, s, n);
        let gold = crf::sequence_score(e, t, s, n, tags);
        let v = Tensor::scalar(marginals.log_partition - gold);
        self.push(v, Op::CrfNll { emissions, transitions, start, end, tags: tags.to_vec(), marginals })
    }

    /// Whole-sequence LSTM recurrence as one node. `projected` is the
    /// `T × 4H` input projection (bias included), `recurrent` the `H × 4H`
    /// hidden weight; gate order is input, forget, candidate, output. The
    /// result holds the hidden state of every step in input order.
    pub fn lstm(&mut self, projected: Var, recurrent: Var, reverse: bool) -> Var {
        let (z, wh) = (self.value(projected), self.value(recurrent));
        let h_dim = wh.rows();
        assert_eq!(wh.cols(), 4 * h_dim, "recurrent weight must be H x 4H");
        assert_eq!(z.cols(), 4 * h_dim, "projection must be T x 4H");
        let steps = z.rows();
        assert!(steps > 0, "LSTM over an empty sequence");
        let mut gates = Tensor::zeros(steps, 4 * h_dim);
        let mut cells = Tensor::zeros(steps, h_dim);
        let mut hidden = Tensor::zeros(steps, h_dim);
        let mut h_prev = vec![0.0; h_dim];
        let mut c_prev = vec![0.0; h_dim];
        let mut pre = vec![0.0; 4 * h_dim];
        for n in 0..steps {
            let t = if reverse { steps - 1 - n } else { n };
            pre.copy_from_slice(z.row(t));
            if n > 0 {
                for (k, &hk) in h_prev.iter().enumerate() {
                    if hk != 0.0 {
                        for (p, w) in pre.iter_mut().zip(wh.row(k)) {
                            *p += hk * w;
                        }
                    }
                }
            }
            let gr = gates.row_mut(t);
            for j in 0..h_dim {
                gr[j] = sigmoid(pre[j]);
                gr[h_dim + j] = sigmoid(pre[h_dim + j]);
                gr[2 * h_dim + j] = pre[2 * h_dim + j].tanh();
                gr[3 * h_dim + j] = sigmoid(pre[3 * h_dim + j]);
            }
            for j in 0..h_dim {
                let c = gr[h_dim + j] * c_prev[j] + gr[j] * gr[2 * h_dim + j];
                c_prev[j] = c;
                h_prev[j] = gr[3 * h_dim + j] * c.tanh();
            }
            cells.row_mut(t).copy_from_slice(&c_prev);
            hidden.row_mut(t).copy_from_slice(&h_prev);
        }
        self.push(hidden, Op::Lstm { projected, recurrent, reverse, gates, cells })
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward root must be a scalar");
        self.backward_with(root, Tensor::filled(1, 1, 1.0))
    }

    /// Reverse sweep seeded with an arbitrary upstream gradient.
    pub fn backward_with(&self, root: Var, seed: Tensor) -> Gradients {
        assert_eq!(seed.shape(), self.shape(root), "seed gradient shape");
        let mut grads: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    /// Gradients for every stored parameter (zeros where unused), in store
    /// order.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<Tensor> {
        let store = self.store.expect("graph has no parameter store");
        store
            .ids()
            .map(|id| {
                self.param_vars[id.0]
                    .and_then(|v| grads.wrt(v).cloned())
                    .unwrap_or_else(|| Tensor::zeros(store.get(id).rows(), store.get(id).cols()))
            })
            .collect()
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                accumulate(grads, *a, g.matmul_t(val(*b)));
                accumulate(grads, *b, val(*a).t_matmul(g));
            }
            Op::MatMulT(a, b) => {
                accumulate(grads, *a, g.matmul(val(*b)));
                accumulate(grads, *b, g.t_matmul(val(*a)));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.zip_map(val(*b), |x, y| x * y));
                accumulate(grads, *b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *row, column_sums(g));
            }
            Op::MulRow(a, row) => {
                let rv = val(*row);
                let av = val(*a);
                let mut ga = g.clone();
                let mut gr = Tensor::zeros(1, rv.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        ga.set(r, c, g.get(r, c) * rv.get(0, c));
                        gr.set(0, c, gr.get(0, c) + g.get(r, c) * av.get(r, c));
                    }
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *row, gr);
            }
            Op::ScaleBy(a, s) => {
                let sv = val(*s).item();
                accumulate(grads, *a, g.scale(sv));
                accumulate(grads, *s, Tensor::scalar(dot(g.data(), val(*a).data())));
            }
            Op::DivBy(a, s) => {
                let sv = val(*s).item();
                accumulate(grads, *a, g.scale(1.0 / sv));
                accumulate(grads, *s, Tensor::scalar(-dot(g.data(), val(*a).data()) / (sv * sv)));
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.scale(*c)),
            Op::AddConst(a) => accumulate(grads, *a, g.clone()),
            Op::Tanh(a) => accumulate(grads, *a, g.zip_map(&node.value, |gi, y| gi * (1.0 - y * y))),
            Op::Sigmoid(a) => accumulate(grads, *a, g.zip_map(&node.value, |gi, y| gi * y * (1.0 - y))),
            Op::Relu(a) => accumulate(grads, *a, g.zip_map(val(*a), |gi, x| if x > 0.0 { gi } else { 0.0 })),
            Op::Exp(a) => accumulate(grads, *a, g.zip_map(&node.value, |gi, y| gi * y)),
            Op::Log(a) => accumulate(grads, *a, g.zip_map(val(*a), |gi, x| gi / x)),
            Op::Square(a) => accumulate(grads, *a, g.zip_map(val(*a), |gi, x| 2.0 * gi * x)),
            Op::Clamp(a, lo, hi) => {
                accumulate(grads, *a, g.zip_map(val(*a), |gi, x| if x < *lo || x > *hi { 0.0 } else { gi }))
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let s = dot(g.row(r), y.row(r));
                    for c in 0..y.cols() {
                        ga.set(r, c, y.get(r, c) * (g.get(r, c) - s));
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let s: f64 = g.row(r).iter().sum();
                    for c in 0..y.cols() {
                        ga.set(r, c, g.get(r, c) - y.get(r, c).exp() * s);
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pc = val(p).cols();
                    let mut gp = Tensor::zeros(g.rows(), pc);
                    for r in 0..g.rows() {
                        gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + pc]);
                    }
                    accumulate(grads, p, gp);
                    off += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                let c = g.cols();
                for &p in parts {
                    let pr = val(p).rows();
                    accumulate(grads, p, Tensor::from_vec(pr, c, g.data()[off * c..(off + pr) * c].to_vec()));
                    off += pr;
                }
            }
            Op::SliceCols(a, start) => {
                let av = val(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                for r in 0..g.rows() {
                    ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                accumulate(grads, *a, ga);
            }
            Op::SliceRows(a, start) => {
                let av = val(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                let c = av.cols();
                ga.data_mut()[start * c..(start + g.rows()) * c].copy_from_slice(g.data());
                accumulate(grads, *a, ga);
            }
            Op::Gather(a, idx) => {
                let av = val(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                for (k, &i) in idx.iter().enumerate() {
                    ga.data_mut()[i] += g.data()[k];
                }
                accumulate(grads, *a, ga);
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
            Op::Reshape(a) => {
                let (r, c) = val(*a).shape();
                accumulate(grads, *a, Tensor::from_vec(r, c, g.data().to_vec()));
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                accumulate(grads, *a, Tensor::filled(r, c, g.item()));
            }
            Op::SumRows(a) => {
                let (r, c) = val(*a).shape();
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    ga.row_mut(i).copy_from_slice(g.row(0));
                }
                accumulate(grads, *a, ga);
            }
            Op::SumCols(a) => {
                let (r, c) = val(*a).shape();
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    let gi = g.get(i, 0);
                    ga.row_mut(i).iter_mut().for_each(|x| *x = gi);
                }
                accumulate(grads, *a, ga);
            }
            Op::PoolCols(a, picks) => {
                let (r, c) = val(*a).shape();
                let mut ga = Tensor::zeros(r, c);
                for (row, idx) in picks.iter().enumerate() {
                    let share = g.get(row, 0) / idx.len() as f64;
                    for &j in idx {
                        ga.set(row, j, ga.get(row, j) + share);
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::CosineRows(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let cos = &node.value;
                let an: Vec<f64> = (0..av.rows()).map(|r| dot(av.row(r), av.row(r)).sqrt()).collect();
                let bn: Vec<f64> = (0..bv.rows()).map(|r| dot(bv.row(r), bv.row(r)).sqrt()).collect();
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                for i in 0..av.rows() {
                    for j in 0..bv.rows() {
                        let gij = g.get(i, j);
                        if gij == 0.0 || an[i] == 0.0 || bn[j] == 0.0 {
                            continue;
                        }
                        let c = cos.get(i, j);
                        let inv = 1.0 / (an[i] * bn[j]);
                        for d in 0..av.cols() {
                            let (x, y) = (av.get(i, d), bv.get(j, d));
                            ga.set(i, d, ga.get(i, d) + gij * (y * inv - c * x / (an[i] * an[i])));
                            gb.set(j, d, gb.get(j, d) + gij * (x * inv - c * y / (bn[j] * bn[j])));
                        }
                    }
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::CrfNll { emissions, transitions, start, end, tags, marginals } => {
                let gs = g.item();
                let labels = val(*emissions).cols();
                let mut ge = marginals.unary.clone();
                for (t, &y) in tags.iter().enumerate() {
                    ge.set(t, y, ge.get(t, y) - 1.0);
                }
                let mut gt = marginals.pair.clone();
                for w in tags.windows(2) {
                    gt.set(w[0], w[1], gt.get(w[0], w[1]) - 1.0);
                }
                let steps = tags.len();
                let mut g_start = Tensor::row_vector(marginals.unary.row(0).to_vec());
                g_start.set(0, tags[0], g_start.get(0, tags[0]) - 1.0);
                let mut g_end = Tensor::row_vector(marginals.unary.row(steps - 1).to_vec());
                g_end.set(0, tags[steps - 1], g_end.get(0, tags[steps - 1]) - 1.0);
                debug_assert_eq!(gt.cols(), labels);
                accumulate(grads, *emissions, ge.scale(gs));
                accumulate(grads, *transitions, gt.scale(gs));
                accumulate(grads, *start, g_start.scale(gs));
                accumulate(grads, *end, g_end.scale(gs));
            }
            Op::Lstm { projected, recurrent, reverse, gates, cells } => {
                let wh = val(*recurrent);
                let h_dim = wh.rows();
                let steps = gates.rows();
                let hidden = &node.value;
                let mut gz = Tensor::zeros(steps, 4 * h_dim);
                let mut gw = Tensor::zeros(h_dim, 4 * h_dim);
                let mut dh_next = vec![0.0; h_dim];
                let mut dc_next = vec![0.0; h_dim];
                for n in (0..steps).rev() {
                    let t = if *reverse { steps - 1 - n } else { n };
                    let prev = if n == 0 { None } else { Some(if *reverse { t + 1 } else { t - 1 }) };
                    let gr = gates.row(t);
                    let mut dz = vec![0.0; 4 * h_dim];
                    for j in 0..h_dim {
                        let (ig, fg, cg, og) = (gr[j], gr[h_dim + j], gr[2 * h_dim + j], gr[3 * h_dim + j]);
                        let c = cells.get(t, j);
                        let tc = c.tanh();
                        let dh = g.get(t, j) + dh_next[j];
                        let dc = dc_next[j] + dh * og * (1.0 - tc * tc);
                        let c_prev = prev.map_or(0.0, |p| cells.get(p, j));
                        dz[j] = dc * cg * ig * (1.0 - ig);
                        dz[h_dim + j] = dc * c_prev * fg * (1.0 - fg);
                        dz[2 * h_dim + j] = dc * ig * (1.0 - cg * cg);
                        dz[3 * h_dim + j] = dh * tc * og * (1.0 - og);
                        dc_next[j] = dc * fg;
                    }
                    gz.row_mut(t).copy_from_slice(&dz);
                    dh_next.iter_mut().for_each(|x| *x = 0.0);
                    if let Some(p) = prev {
                        let hp = hidden.row(p);
                        for k in 0..h_dim {
                            let row = gw.row_mut(k);
                            for (w, d) in row.iter_mut().zip(&dz) {
                                *w += hp[k] * d;
                            }
                            dh_next[k] = dot(wh.row(k), &dz);
                        }
                    }
                }
                accumulate(grads, *projected, gz);
                accumulate(grads, *recurrent, gw);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, e) in out.row_mut(0).iter_mut().zip(g.row(r)) {
            *o += e;
        }
    }
    out
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut v = x.clone();
    for r in 0..x.rows() {
        let m = x.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let row = v.row_mut(r);
        let mut s = 0.0;
        for e in row.iter_mut() {
            *e = (*e - m).exp();
            s += *e;
        }
        for e in row.iter_mut() {
            *e /= s;
        }
    }
    v
}

/// Indices of the `k` largest values (fewer if the slice is shorter),
/// largest first; equal values keep ascending index order.
pub fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    idx.truncate(k.min(values.len()));
    idx
}
