//! Tape-based reverse-mode automatic differentiation over 2-D matrices.
//!
//! A [`Graph`] records every operation eagerly: values are computed when a node
//! is created, and [`Graph::backward`] walks the tape in reverse to produce
//! [`Gradients`]. Parameters are borrowed from a [`ParamStore`] rather than
//! copied, so a graph lives for a single forward/backward pass.
//!
//! Every node is a row-major matrix. 1-D parameters are treated as a single row.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::tensor::{ParamId, ParamStore};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Vec<f64>),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        shift: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    MaskedSoftmax {
        x: Var,
        keys: Vec<bool>,
    },
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Gather(Var, Vec<usize>),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<f64>,
        count: usize,
    },
    Sum(Var),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    /// Empty for parameter nodes, whose values stay in the store.
    value: Vec<f64>,
    op: Op,
}

/// Records a computation for one forward/backward pass.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
    dropout_rng: Option<ChaCha8Rng>,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    params: Vec<Option<Vec<f64>>>,
    nodes: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params.get(id.index()).and_then(|g| g.as_deref())
    }

    /// Gradient with respect to any node, including inputs.
    pub fn wrt(&self, var: Var) -> Option<&[f64]> {
        self.nodes.get(var.0).and_then(|g| g.as_deref())
    }

    /// Writes parameter gradients into the store's gradient buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for id in store.ids().collect::<Vec<_>>() {
            if let Some(g) = self.param(id) {
                store.get_mut(id).accumulate_grad(g);
            }
        }
    }
}

fn shape_err(op: &'static str, axis: usize, expected: usize, found: usize) -> NnError {
    NnError::Shape {
        op,
        axis,
        expected,
        found,
    }
}

fn gelu_parts(x: f64) -> (f64, f64) {
    const A: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const B: f64 = 0.044_715;
    let u = A * (x + B * x * x * x);
    let t = u.tanh();
    let y = 0.5 * x * (1.0 + t);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * A * (1.0 + 3.0 * B * x * x);
    (y, dy)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
            dropout_rng: None,
        }
    }

    /// A graph in training mode: [`Graph::dropout`] samples masks from `seed`.
    pub fn training(params: &'p ParamStore, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut g = Self::new(params);
        g.dropout_rng = Some(ChaCha8Rng::seed_from_u64(seed));
        g
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn rows(&self, v: Var) -> usize {
        self.nodes[v.0].rows
    }

    pub fn cols(&self, v: Var) -> usize {
        self.nodes[v.0].cols
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id).data(),
            _ => &self.nodes[v.0].value,
        }
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.value(v).len(), 1);
        self.value(v)[0]
    }

    /// A constant matrix that gradients flow into but never out of.
    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(shape_err("input", 0, rows * cols, data.len()));
        }
        Ok(self.push(rows, cols, data, Op::Input))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.index()] {
            return v;
        }
        let (rows, cols) = self.params.get(id).matrix_dims();
        let v = self.push(rows, cols, Vec::new(), Op::Param(id));
        self.param_nodes[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.dims(a);
        let (k2, m) = self.dims(b);
        if k != k2 {
            return Err(shape_err("matmul", 0, k, k2));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * m..(p + 1) * m];
                for (o, w) in row.iter_mut().zip(brow) {
                    *o += x * w;
                }
            }
        }
        Ok(self.push(n, m, out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (n, m) = self.dims(a);
        let av = self.value(a);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = av[i * m + j];
            }
        }
        self.push(m, n, out, Op::Transpose(a))
    }

    fn same_dims(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        if ar != br {
            return Err(shape_err(op, 0, ar, br));
        }
        if ac != bc {
            return Err(shape_err(op, 1, ac, bc));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims("add", a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let (r, c) = self.dims(a);
        Ok(self.push(r, c, out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims("mul", a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let (r, c) = self.dims(a);
        Ok(self.push(r, c, out, Op::Mul(a, b)))
    }

    /// Adds a single-row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.dims(a);
        let (br, bc) = self.dims(bias);
        if br != 1 {
            return Err(shape_err("add_row", 0, 1, br));
        }
        if bc != c {
            return Err(shape_err("add_row", 1, c, bc));
        }
        let bv = self.value(bias);
        let out = self
            .value(a)
            .chunks(c.max(1))
            .flat_map(|row| row.iter().zip(bv).map(|(x, b)| x + b))
            .collect();
        Ok(self.push(r, c, out, Op::AddRow(a, bias)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * factor).collect();
        let (r, c) = self.dims(a);
        self.push(r, c, out, Op::Scale(a, factor))
    }

    /// Elementwise product with a constant mask.
    pub fn mul_const(&mut self, a: Var, factors: Vec<f64>) -> Result<Var> {
        let (r, c) = self.dims(a);
        if factors.len() != r * c {
            return Err(shape_err("mul_const", 0, r * c, factors.len()));
        }
        let out = self
            .value(a)
            .iter()
            .zip(&factors)
            .map(|(x, f)| x * f)
            .collect();
        Ok(self.push(r, c, out, Op::MulConst(a, factors)))
    }

    /// Inverted dropout. Identity unless the graph is in training mode.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Result<Var> {
        if rate <= 0.0 {
            return Ok(a);
        }
        let Some(rng) = self.dropout_rng.as_mut() else {
            return Ok(a);
        };
        let keep = 1.0 - rate;
        let (r, c) = self.nodes[a.0].rows_cols();
        let mask = (0..r * c)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        self.mul_const(a, mask)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let (r, c) = self.dims(a);
        self.push(r, c, out, op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Gaussian error linear unit, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, |x| gelu_parts(x).0, Op::Gelu(a))
    }

    /// Row-wise layer normalization followed by `gain` and `shift`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        let (n, d) = self.dims(x);
        if d == 0 {
            return Err(NnError::EmptyAxis { op: "layer_norm" });
        }
        if eps <= 0.0 {
            return Err(NnError::Config("layer_norm eps must be positive".into()));
        }
        for p in [gain, shift] {
            let (pr, pc) = self.dims(p);
            if pr != 1 {
                return Err(shape_err("layer_norm", 0, 1, pr));
            }
            if pc != d {
                return Err(shape_err("layer_norm", 1, d, pc));
            }
        }
        let xv = self.value(x);
        let gv = self.value(gain);
        let sv = self.value(shift);
        let mut xhat = vec![0.0; n * d];
        let mut inv_std = vec![0.0; n];
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let row = &xv[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[i * d + j] = h;
                out[i * d + j] = h * gv[j] + sv[j];
            }
        }
        Ok(self.push(
            n,
            d,
            out,
            Op::LayerNorm {
                x,
                gain,
                shift,
                xhat,
                inv_std,
            },
        ))
    }

    /// Row-wise softmax restricted to columns where `keys` is true.
    /// Excluded columns receive exactly zero weight.
    pub fn masked_softmax(&mut self, x: Var, keys: &[bool]) -> Result<Var> {
        let (n, m) = self.dims(x);
        if keys.len() != m {
            return Err(shape_err("masked_softmax", 1, m, keys.len()));
        }
        if !keys.iter().any(|&k| k) {
            return Err(NnError::DegenerateMask {
                op: "masked_softmax",
            });
        }
        let xv = self.value(x);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &xv[i * m..(i + 1) * m];
            let max = row
                .iter()
                .zip(keys)
                .filter(|(_, &k)| k)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..m {
                if keys[j] {
                    let e = (row[j] - max).exp();
                    out[i * m + j] = e;
                    z += e;
                }
            }
            for o in &mut out[i * m..(i + 1) * m] {
                *o /= z;
            }
        }
        Ok(self.push(
            n,
            m,
            out,
            Op::MaskedSoftmax {
                x,
                keys: keys.to_vec(),
            },
        ))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if start + len > r {
            return Err(shape_err("slice_rows", 0, r, start + len));
        }
        let out = self.value(a)[start * c..(start + len) * c].to_vec();
        Ok(self.push(len, c, out, Op::SliceRows(a, start)))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        self.slice_rows(a, i, 1)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if start + len > c {
            return Err(shape_err("slice_cols", 1, c, start + len));
        }
        let av = self.value(a);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&av[i * c + start..i * c + start + len]);
        }
        Ok(self.push(r, len, out, Op::SliceCols(a, start)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(NnError::EmptyAxis { op: "concat_rows" });
        };
        let c = self.cols(first);
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            if self.cols(p) != c {
                return Err(shape_err("concat_rows", 1, c, self.cols(p)));
            }
            rows += self.rows(p);
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(rows, c, out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(NnError::EmptyAxis { op: "concat_cols" });
        };
        let r = self.rows(first);
        let mut cols = 0;
        for &p in parts {
            if self.rows(p) != r {
                return Err(shape_err("concat_cols", 0, r, self.rows(p)));
            }
            cols += self.cols(p);
        }
        let mut out = Vec::with_capacity(r * cols);
        for i in 0..r {
            for &p in parts {
                let c = self.cols(p);
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        Ok(self.push(r, cols, out, Op::ConcatCols(parts.to_vec())))
    }

    /// Row lookup: output row `i` is row `ids[i]` of `table`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.dims(table);
        if ids.is_empty() {
            return Err(NnError::EmptySequence { op: "gather" });
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(NnError::Vocabulary {
                    op: "gather",
                    id,
                    size: v,
                });
            }
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        Ok(self.push(ids.len(), d, out, Op::Gather(table, ids.to_vec())))
    }

    /// Mean softmax cross-entropy over rows where `mask` is true.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let (n, k) = self.dims(logits);
        if targets.len() != n {
            return Err(shape_err("cross_entropy", 0, n, targets.len()));
        }
        if mask.len() != n {
            return Err(shape_err("cross_entropy", 0, n, mask.len()));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(NnError::DegenerateMask { op: "cross_entropy" });
        }
        let lv = self.value(logits);
        let mut probs = vec![0.0; n * k];
        let mut total = 0.0;
        for i in 0..n {
            if !mask[i] {
                continue;
            }
            let t = targets[i];
            if t >= k {
                return Err(NnError::Label {
                    target: t,
                    position: i,
                    classes: k,
                });
            }
            let row = &lv[i * k..(i + 1) * k];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let lse = max + z.ln();
            total += lse - row[t];
            for j in 0..k {
                probs[i * k + j] = (row[j] - lse).exp();
            }
        }
        let loss = total / count as f64;
        Ok(self.push(
            1,
            1,
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                count,
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(1, 1, vec![s], Op::Sum(a))
    }

    /// Mean of several 1×1 nodes.
    pub fn mean_of(&mut self, scalars: &[Var]) -> Result<Var> {
        let Some((&first, rest)) = scalars.split_first() else {
            return Err(NnError::EmptyAxis { op: "mean_of" });
        };
        let mut acc = first;
        for &s in rest {
            acc = self.add(acc, s)?;
        }
        Ok(self.scale(acc, 1.0 / scalars.len() as f64))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if r * c != rows * cols {
            return Err(shape_err("reshape", 0, r * c, rows * cols));
        }
        let out = self.value(a).to_vec();
        Ok(self.push(rows, cols, out, Op::Reshape(a)))
    }

    /// Back-propagates from the 1×1 node `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.dims(root) != (1, 1) {
            return Err(shape_err("backward", 0, 1, self.value(root).len()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut done: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut params: Vec<Option<Vec<f64>>> = vec![None; self.params.len()];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let (rows, cols) = (node.rows, node.cols);
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    params[id.index()] = Some(g.clone());
                }
                Op::MatMul(a, b) => {
                    let (n, k) = self.dims(*a);
                    let m = cols;
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let mut da = vec![0.0; n * k];
                    let mut db = vec![0.0; k * m];
                    for r in 0..n {
                        let grow = &g[r * m..(r + 1) * m];
                        for p in 0..k {
                            let brow = &bv[p * m..(p + 1) * m];
                            da[r * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                            let x = av[r * k + p];
                            if x != 0.0 {
                                for (d, gg) in db[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                    *d += x * gg;
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Transpose(a) => {
                    let mut da = vec![0.0; rows * cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            da[c * rows + r] = g[r * cols + c];
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, bias) => {
                    let mut db = vec![0.0; cols];
                    for row in g.chunks(cols.max(1)) {
                        db.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                    }
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *bias, db);
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let da = g.iter().zip(bv).map(|(x, y)| x * y).collect();
                    let db = g.iter().zip(av).map(|(x, y)| x * y).collect();
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, f) => {
                    accumulate(&mut grads, *a, g.iter().map(|x| x * f).collect());
                }
                Op::MulConst(a, fs) => {
                    accumulate(&mut grads, *a, g.iter().zip(fs).map(|(x, f)| x * f).collect());
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let da = g.iter().zip(y).map(|(x, s)| x * s * (1.0 - s)).collect();
                    accumulate(&mut grads, *a, da);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let da = g.iter().zip(y).map(|(x, t)| x * (1.0 - t * t)).collect();
                    accumulate(&mut grads, *a, da);
                }
                Op::Relu(a) => {
                    let xv = self.value(*a);
                    let da = g
                        .iter()
                        .zip(xv)
                        .map(|(x, v)| if *v > 0.0 { *x } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, da);
                }
                Op::Gelu(a) => {
                    let xv = self.value(*a);
                    let da = g.iter().zip(xv).map(|(x, v)| x * gelu_parts(*v).1).collect();
                    accumulate(&mut grads, *a, da);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    shift,
                    xhat,
                    inv_std,
                } => {
                    let d = cols;
                    let gv = self.value(*gain);
                    let mut dx = vec![0.0; rows * d];
                    let mut dgain = vec![0.0; d];
                    let mut dshift = vec![0.0; d];
                    for r in 0..rows {
                        let grow = &g[r * d..(r + 1) * d];
                        let hrow = &xhat[r * d..(r + 1) * d];
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..d {
                            dgain[j] += grow[j] * hrow[j];
                            dshift[j] += grow[j];
                            let dh = grow[j] * gv[j];
                            mean_dh += dh;
                            mean_dh_h += dh * hrow[j];
                        }
                        mean_dh /= d as f64;
                        mean_dh_h /= d as f64;
                        for j in 0..d {
                            let dh = grow[j] * gv[j];
                            dx[r * d + j] = inv_std[r] * (dh - mean_dh - hrow[j] * mean_dh_h);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gain, dgain);
                    accumulate(&mut grads, *shift, dshift);
                }
                Op::MaskedSoftmax { x, keys } => {
                    let y = &node.value;
                    let mut dx = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let yr = &y[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..cols {
                            if keys[j] {
                                dx[r * cols + j] = yr[j] * (gr[j] - dot);
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::SliceRows(a, start) => {
                    let (ar, ac) = self.dims(*a);
                    let mut da = vec![0.0; ar * ac];
                    da[start * ac..(start + rows) * ac].copy_from_slice(&g);
                    accumulate(&mut grads, *a, da);
                }
                Op::SliceCols(a, start) => {
                    let (ar, ac) = self.dims(*a);
                    let mut da = vec![0.0; ar * ac];
                    for r in 0..ar {
                        da[r * ac + start..r * ac + start + cols]
                            .copy_from_slice(&g[r * cols..(r + 1) * cols]);
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        accumulate(&mut grads, p, g[offset..offset + n].to_vec());
                        offset += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.cols(p);
                        let mut dp = Vec::with_capacity(rows * pc);
                        for r in 0..rows {
                            dp.extend_from_slice(&g[r * cols + offset..r * cols + offset + pc]);
                        }
                        accumulate(&mut grads, p, dp);
                        offset += pc;
                    }
                }
                Op::Gather(table, ids) => {
                    let (v, d) = self.dims(*table);
                    let mut dt = vec![0.0; v * d];
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            dt[id * d + j] += g[r * d + j];
                        }
                    }
                    accumulate(&mut grads, *table, dt);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    mask,
                    probs,
                    count,
                } => {
                    let (n, k) = self.dims(*logits);
                    let scale = g[0] / *count as f64;
                    let mut dl = vec![0.0; n * k];
                    for r in 0..n {
                        if !mask[r] {
                            continue;
                        }
                        for j in 0..k {
                            dl[r * k + j] = scale * probs[r * k + j];
                        }
                        dl[r * k + targets[r]] -= scale;
                    }
                    accumulate(&mut grads, *logits, dl);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    accumulate(&mut grads, *a, vec![g[0]; n]);
                }
                Op::Reshape(a) => {
                    accumulate(&mut grads, *a, g.clone());
                }
            }
            done[i] = Some(g);
        }
        Ok(Gradients {
            params,
            nodes: done,
        })
    }
}

impl Node {
    fn rows_cols(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
    match &mut grads[v.0] {
        Some(g) => g.iter_mut().zip(&delta).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(delta),
    }
}
