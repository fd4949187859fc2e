//! Define-by-run reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value and the handles of
//! its inputs. `backward` walks the node list in reverse, so a tape is rebuilt
//! for each forward pass. Parameter values are read in place from the
//! borrowed [`ParamStore`] and never copied onto the tape.

use std::collections::HashMap;
use std::rc::Rc;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{numel, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Storage {
    Owned(Vec<f64>),
    Shared(Rc<Vec<f64>>),
    Param(ParamId),
}

enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    AddRowBias(Var, Var),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    MatVec(Var, Var),
    VecMat(Var, Var),
    MatVecRows(Var, Var, Vec<usize>),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    LogFloor(Var, f64),
    Softmax(Var),
    Normalize(Var),
    Sum(Var),
    AddN(Vec<Var>),
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    Row(Var, usize),
    GatherRows(Var, Vec<usize>),
    Select(Var, Vec<usize>),
    PadRows(Var),
}

struct Node {
    shape: Vec<usize>,
    storage: Storage,
    op: Op,
    needs_grad: bool,
}

/// Record of executed operations together with their output values.
pub struct Tape<'p> {
    params: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    leaf_grads: HashMap<usize, Vec<f64>>,
    param_grads: Vec<Option<Vec<f64>>>,
    mults: u64,
}

impl Default for Tape<'static> {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape<'static> {
    /// A tape with no parameter store; only leaves and constants are available.
    pub fn new() -> Self {
        Tape {
            params: None,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            leaf_grads: HashMap::new(),
            param_grads: Vec::new(),
            mults: 0,
        }
    }
}

impl<'p> Tape<'p> {
    pub fn with_params(params: &'p ParamStore) -> Self {
        Tape {
            params: Some(params),
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            leaf_grads: HashMap::new(),
            param_grads: vec![None; params.len()],
            mults: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Multiplications performed by the matrix products recorded so far.
    pub fn mult_count(&self) -> u64 {
        self.mults
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].storage {
            Storage::Owned(d) => d,
            Storage::Shared(d) => d,
            Storage::Param(id) => self
                .params
                .expect("param node without store")
                .get(*id)
                .data(),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("node shape invariant")
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Node {
            shape,
            storage: Storage::Owned(data),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Records an input tensor. Its gradient is kept if it requires one.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs = t.requires_grad();
        let shape = t.shape().to_vec();
        self.push(shape, t.data().to_vec(), Op::Leaf, needs)
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        if numel(&shape) != data.len() {
            return Err(Error::shape("constant", &shape, &[data.len()]));
        }
        Ok(self.push(shape, data, Op::Leaf, false))
    }

    pub fn vector(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.push(vec![n], data, Op::Leaf, false)
    }

    /// Records a constant whose buffer is shared with the caller.
    pub fn shared(&mut self, shape: Vec<usize>, data: Rc<Vec<f64>>) -> Result<Var> {
        if numel(&shape) != data.len() {
            return Err(Error::shape("shared", &shape, &[data.len()]));
        }
        self.nodes.push(Node {
            shape,
            storage: Storage::Shared(data),
            op: Op::Leaf,
            needs_grad: false,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Handle for a parameter of the borrowed store, created once per tape.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        let store = self.params.expect("tape has no parameter store");
        let t = store.get(id);
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            storage: Storage::Param(id),
            op: Op::Param(id),
            needs_grad: t.requires_grad(),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        rec: Op,
    ) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let data = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let needs = self.needs(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), data, rec, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, rec: Op) -> Var {
        let data = self.value(a).iter().map(|x| f(*x)).collect();
        let needs = self.needs(&[a]);
        self.push(self.shape(a).to_vec(), data, rec, needs)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// Elementwise `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 - x, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    /// Natural log with its argument floored at `floor`; zero gradient below the floor.
    pub fn log_floor(&mut self, a: Var, floor: f64) -> Var {
        self.map(a, |x| x.max(floor).ln(), Op::LogFloor(a, floor))
    }

    /// Adds the vector `b` to every row of matrix `m`.
    pub fn add_row_bias(&mut self, m: Var, b: Var) -> Result<Var> {
        let (ms, bs) = (self.shape(m), self.shape(b));
        if ms.len() != 2 || bs.len() != 1 || ms[1] != bs[0] {
            return Err(Error::shape("add_row_bias", ms, bs));
        }
        let cols = ms[1];
        let bias = self.value(b);
        let data = self
            .value(m)
            .iter()
            .enumerate()
            .map(|(i, x)| x + bias[i % cols])
            .collect();
        let needs = self.needs(&[m, b]);
        Ok(self.push(ms.to_vec(), data, Op::AddRowBias(m, b), needs))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ash, bsh) = (self.shape(a), self.shape(b));
        if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
            return Err(Error::shape("matmul", ash, bsh));
        }
        let (m, k, n) = (ash[0], ash[1], bsh[1]);
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                row.iter_mut().zip(brow).for_each(|(o, y)| *o += x * y);
            }
        }
        self.mults += (m * k * n) as u64;
        let needs = self.needs(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), needs))
    }

    /// `a · bᵀ` for `a` of shape `[m, k]` and `b` of shape `[n, k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ash, bsh) = (self.shape(a), self.shape(b));
        if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[1] {
            return Err(Error::shape("matmul_nt", ash, bsh));
        }
        let (m, k, n) = (ash[0], ash[1], bsh[0]);
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &av[i * k..(i + 1) * k];
            for j in 0..n {
                out[i * n + j] = dot(arow, &bv[j * k..(j + 1) * k]);
            }
        }
        self.mults += (m * k * n) as u64;
        let needs = self.needs(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMulNt(a, b), needs))
    }

    /// Matrix `[m, k]` times vector `[k]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (ws, xs) = (self.shape(w), self.shape(x));
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(Error::shape("matvec", ws, xs));
        }
        let (m, k) = (ws[0], ws[1]);
        let (wv, xv) = (self.value(w), self.value(x));
        let out = (0..m).map(|i| dot(&wv[i * k..(i + 1) * k], xv)).collect();
        self.mults += (m * k) as u64;
        let needs = self.needs(&[w, x]);
        Ok(self.push(vec![m], out, Op::MatVec(w, x), needs))
    }

    /// Vector `[m]` times matrix `[m, k]`, i.e. a weighted sum of rows.
    pub fn vecmat(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if ws.len() != 2 || xs.len() != 1 || ws[0] != xs[0] {
            return Err(Error::shape("vecmat", xs, ws));
        }
        let (m, k) = (ws[0], ws[1]);
        let (xv, wv) = (self.value(x), self.value(w));
        let mut out = vec![0.0; k];
        for i in 0..m {
            let c = xv[i];
            if c == 0.0 {
                continue;
            }
            out.iter_mut()
                .zip(&wv[i * k..(i + 1) * k])
                .for_each(|(o, y)| *o += c * y);
        }
        self.mults += (m * k) as u64;
        let needs = self.needs(&[x, w]);
        Ok(self.push(vec![k], out, Op::VecMat(x, w), needs))
    }

    /// Matrix-vector product restricted to the listed rows of `w`.
    pub fn matvec_rows(&mut self, w: Var, x: Var, rows: &[usize]) -> Result<Var> {
        let (ws, xs) = (self.shape(w), self.shape(x));
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(Error::shape("matvec_rows", ws, xs));
        }
        let (m, k) = (ws[0], ws[1]);
        if let Some((pos, &r)) = rows.iter().enumerate().find(|(_, r)| **r >= m) {
            return Err(Error::Lookup {
                position: pos,
                id: r,
                limit: m,
            });
        }
        let (wv, xv) = (self.value(w), self.value(x));
        let out = rows
            .iter()
            .map(|&r| dot(&wv[r * k..(r + 1) * k], xv))
            .collect();
        self.mults += (rows.len() * k) as u64;
        let needs = self.needs(&[w, x]);
        Ok(self.push(
            vec![rows.len()],
            out,
            Op::MatVecRows(w, x, rows.to_vec()),
            needs,
        ))
    }

    /// Max-stabilized softmax over a vector; masked positions are exactly zero.
    pub fn softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() != 1 || xs[0] == 0 {
            return Err(Error::Contract(format!(
                "softmax expects a nonempty vector, got {xs:?}"
            )));
        }
        let n = xs[0];
        if let Some(m) = mask {
            if m.len() != n {
                return Err(Error::shape("softmax mask", xs, &[m.len()]));
            }
            if !m.iter().any(|b| *b) {
                return Err(Error::InvalidMask("every position is masked".into()));
            }
        }
        let keep = |i: usize| mask.is_none_or(|m| m[i]);
        let xv = self.value(x);
        let max = (0..n)
            .filter(|&i| keep(i))
            .map(|i| xv[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut out: Vec<f64> = (0..n)
            .map(|i| if keep(i) { (xv[i] - max).exp() } else { 0.0 })
            .collect();
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|v| *v /= total);
        let needs = self.needs(&[x]);
        Ok(self.push(vec![n], out, Op::Softmax(x), needs))
    }

    /// Divides a nonnegative vector by its sum.
    pub fn normalize(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() != 1 {
            return Err(Error::Contract(format!(
                "normalize expects a vector, got {xs:?}"
            )));
        }
        let total: f64 = self.value(x).iter().sum();
        if total == 0.0 || !total.is_finite() {
            return Err(Error::DegenerateAttention);
        }
        Ok(self.map(x, |v| v / total, Op::Normalize(x)))
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let needs = self.needs(&[x]);
        self.push(Vec::new(), vec![s], Op::Sum(x), needs)
    }

    /// Elementwise sum of same-shaped values.
    pub fn add_n(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Contract("add_n of nothing".into()))?;
        let mut out = self.value(first).to_vec();
        for &v in &xs[1..] {
            self.same_shape("add_n", first, v)?;
            out.iter_mut().zip(self.value(v)).for_each(|(o, y)| *o += y);
        }
        let needs = self.needs(xs);
        Ok(self.push(
            self.shape(first).to_vec(),
            out,
            Op::AddN(xs.to_vec()),
            needs,
        ))
    }

    /// Concatenates vectors, or matrices with equal row counts, along the last axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Contract("concat of nothing".into()))?;
        let fs = self.shape(first).to_vec();
        let rows = match fs.len() {
            1 => 1,
            2 => fs[0],
            _ => return Err(Error::shape("concat", &fs, &[])),
        };
        let mut widths = Vec::with_capacity(xs.len());
        for &v in xs {
            let s = self.shape(v);
            if s.len() != fs.len() || (s.len() == 2 && s[0] != rows) {
                return Err(Error::shape("concat", &fs, s));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&v, &w) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(v)[r * w..(r + 1) * w]);
            }
        }
        let shape = if fs.len() == 1 {
            vec![total]
        } else {
            vec![rows, total]
        };
        let needs = self.needs(xs);
        Ok(self.push(shape, out, Op::Concat(xs.to_vec()), needs))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Contract("stack_rows of nothing".into()))?;
        let fs = self.shape(first).to_vec();
        if fs.len() != 1 {
            return Err(Error::shape("stack_rows", &fs, &[]));
        }
        let mut out = Vec::with_capacity(xs.len() * fs[0]);
        for &v in xs {
            if self.shape(v) != fs.as_slice() {
                return Err(Error::shape("stack_rows", &fs, self.shape(v)));
            }
            out.extend_from_slice(self.value(v));
        }
        let needs = self.needs(xs);
        Ok(self.push(
            vec![xs.len(), fs[0]],
            out,
            Op::StackRows(xs.to_vec()),
            needs,
        ))
    }

    pub fn row(&mut self, m: Var, i: usize) -> Result<Var> {
        let ms = self.shape(m);
        if ms.len() != 2 {
            return Err(Error::shape("row", ms, &[]));
        }
        if i >= ms[0] {
            return Err(Error::Lookup {
                position: 0,
                id: i,
                limit: ms[0],
            });
        }
        let c = ms[1];
        let data = self.value(m)[i * c..(i + 1) * c].to_vec();
        let needs = self.needs(&[m]);
        Ok(self.push(vec![c], data, Op::Row(m, i), needs))
    }

    /// Embedding lookup: rows of `table` in the order of `ids`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let ts = self.shape(table);
        if ts.len() != 2 {
            return Err(Error::shape("gather_rows", ts, &[]));
        }
        let (v, d) = (ts[0], ts[1]);
        if let Some((pos, &id)) = ids.iter().enumerate().find(|(_, id)| **id >= v) {
            return Err(Error::Lookup {
                position: pos,
                id,
                limit: v,
            });
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        let needs = self.needs(&[table]);
        Ok(self.push(
            vec![ids.len(), d],
            out,
            Op::GatherRows(table, ids.to_vec()),
            needs,
        ))
    }

    /// Picks elements of a vector by index (repeats allowed).
    pub fn select(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() != 1 {
            return Err(Error::shape("select", xs, &[]));
        }
        let n = xs[0];
        if let Some((pos, &i)) = idx.iter().enumerate().find(|(_, i)| **i >= n) {
            return Err(Error::Lookup {
                position: pos,
                id: i,
                limit: n,
            });
        }
        let xv = self.value(x);
        let data = idx.iter().map(|&i| xv[i]).collect();
        let needs = self.needs(&[x]);
        Ok(self.push(vec![idx.len()], data, Op::Select(x, idx.to_vec()), needs))
    }

    /// Element `i` of a vector as a scalar.
    pub fn index(&mut self, x: Var, i: usize) -> Result<Var> {
        let v = self.select(x, &[i])?;
        self.nodes[v.0].shape = Vec::new();
        Ok(v)
    }

    /// Appends zero rows to a matrix until it has `rows` rows.
    pub fn pad_rows(&mut self, m: Var, rows: usize) -> Result<Var> {
        let ms = self.shape(m);
        if ms.len() != 2 || ms[0] > rows {
            return Err(Error::shape("pad_rows", ms, &[rows]));
        }
        if ms[0] == rows {
            return Ok(m);
        }
        let c = ms[1];
        let mut data = self.value(m).to_vec();
        data.resize(rows * c, 0.0);
        let needs = self.needs(&[m]);
        Ok(self.push(vec![rows, c], data, Op::PadRows(m), needs))
    }

    /// Reverse sweep from a scalar loss. Leaf and parameter gradients
    /// accumulate across calls; intermediate adjoints are recomputed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = Vec::new();
        adj.resize_with(loss.0 + 1, || None);
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    let slot = self
                        .leaf_grads
                        .entry(i)
                        .or_insert_with(|| vec![0.0; g.len()]);
                    slot.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::Param(id) => {
                    let slot = self.param_grads[id.0].get_or_insert_with(|| vec![0.0; g.len()]);
                    slot.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                op => self.propagate(op, i, &g, &mut adj),
            }
        }

        // Reachable or not, every grad-requiring leaf and parameter ends with a buffer.
        for (i, node) in self.nodes.iter().enumerate() {
            match node.op {
                Op::Leaf if node.needs_grad => {
                    let n = numel(&node.shape);
                    self.leaf_grads.entry(i).or_insert_with(|| vec![0.0; n]);
                }
                Op::Param(id) if node.needs_grad => {
                    let n = numel(&node.shape);
                    self.param_grads[id.0].get_or_insert_with(|| vec![0.0; n]);
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn propagate(&self, op: &Op, out: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        macro_rules! acc {
            ($v:expr, |$ga:ident| $body:block) => {{
                let v: Var = $v;
                if nodes[v.0].needs_grad {
                    let n = numel(&nodes[v.0].shape);
                    let $ga: &mut Vec<f64> = adj[v.0].get_or_insert_with(|| vec![0.0; n]);
                    $body
                }
            }};
        }
        let y = match &nodes[out].storage {
            Storage::Owned(d) => d.as_slice(),
            _ => &[],
        };
        match *op {
            Op::Leaf | Op::Param(_) => unreachable!(),
            Op::Add(a, b) => {
                acc!(a, |ga| { add_into(ga, g) });
                acc!(b, |gb| { add_into(gb, g) });
            }
            Op::Sub(a, b) => {
                acc!(a, |ga| { add_into(ga, g) });
                acc!(b, |gb| {
                    gb.iter_mut().zip(g).for_each(|(o, d)| *o -= d);
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                acc!(a, |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                });
                acc!(b, |gb| {
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                });
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                acc!(a, |ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] / bv[i];
                    }
                });
                acc!(b, |gb| {
                    for i in 0..g.len() {
                        gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                    }
                });
            }
            Op::Scale(a, c) => acc!(a, |ga| {
                ga.iter_mut().zip(g).for_each(|(o, d)| *o += c * d);
            }),
            Op::OneMinus(a) => acc!(a, |ga| {
                ga.iter_mut().zip(g).for_each(|(o, d)| *o -= d);
            }),
            Op::AddRowBias(m, b) => {
                acc!(m, |gm| { add_into(gm, g) });
                let cols = self.shape(b)[0];
                acc!(b, |gb| {
                    for (i, d) in g.iter().enumerate() {
                        gb[i % cols] += d;
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (ash, bsh) = (self.shape(a), self.shape(b));
                let (m, k, n) = (ash[0], ash[1], bsh[1]);
                let (av, bv) = (self.value(a), self.value(b));
                acc!(a, |ga| {
                    for i in 0..m {
                        for p in 0..k {
                            ga[i * k + p] += dot(&g[i * n..(i + 1) * n], &bv[p * n..(p + 1) * n]);
                        }
                    }
                });
                acc!(b, |gb| {
                    for i in 0..m {
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            let grow = &g[i * n..(i + 1) * n];
                            gb[p * n..(p + 1) * n]
                                .iter_mut()
                                .zip(grow)
                                .for_each(|(o, d)| *o += x * d);
                        }
                    }
                });
            }
            Op::MatMulNt(a, b) => {
                let (ash, bsh) = (self.shape(a), self.shape(b));
                let (m, k, n) = (ash[0], ash[1], bsh[0]);
                let (av, bv) = (self.value(a), self.value(b));
                acc!(a, |ga| {
                    for i in 0..m {
                        for j in 0..n {
                            let d = g[i * n + j];
                            if d == 0.0 {
                                continue;
                            }
                            ga[i * k..(i + 1) * k]
                                .iter_mut()
                                .zip(&bv[j * k..(j + 1) * k])
                                .for_each(|(o, y)| *o += d * y);
                        }
                    }
                });
                acc!(b, |gb| {
                    for i in 0..m {
                        for j in 0..n {
                            let d = g[i * n + j];
                            if d == 0.0 {
                                continue;
                            }
                            gb[j * k..(j + 1) * k]
                                .iter_mut()
                                .zip(&av[i * k..(i + 1) * k])
                                .for_each(|(o, x)| *o += d * x);
                        }
                    }
                });
            }
            Op::MatVec(w, x) => {
                let k = self.shape(w)[1];
                let (wv, xv) = (self.value(w), self.value(x));
                acc!(w, |gw| {
                    for (i, d) in g.iter().enumerate() {
                        if *d == 0.0 {
                            continue;
                        }
                        gw[i * k..(i + 1) * k]
                            .iter_mut()
                            .zip(xv)
                            .for_each(|(o, x)| *o += d * x);
                    }
                });
                acc!(x, |gx| {
                    for (i, d) in g.iter().enumerate() {
                        gx.iter_mut()
                            .zip(&wv[i * k..(i + 1) * k])
                            .for_each(|(o, w)| *o += d * w);
                    }
                });
            }
            Op::VecMat(x, w) => {
                let k = self.shape(w)[1];
                let (xv, wv) = (self.value(x), self.value(w));
                acc!(x, |gx| {
                    for (i, o) in gx.iter_mut().enumerate() {
                        *o += dot(&wv[i * k..(i + 1) * k], g);
                    }
                });
                acc!(w, |gw| {
                    for (i, c) in xv.iter().enumerate() {
                        if *c == 0.0 {
                            continue;
                        }
                        gw[i * k..(i + 1) * k]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(o, d)| *o += c * d);
                    }
                });
            }
            Op::MatVecRows(w, x, ref rows) => {
                let k = self.shape(w)[1];
                let (wv, xv) = (self.value(w), self.value(x));
                acc!(w, |gw| {
                    for (d, &r) in g.iter().zip(rows) {
                        gw[r * k..(r + 1) * k]
                            .iter_mut()
                            .zip(xv)
                            .for_each(|(o, x)| *o += d * x);
                    }
                });
                acc!(x, |gx| {
                    for (d, &r) in g.iter().zip(rows) {
                        gx.iter_mut()
                            .zip(&wv[r * k..(r + 1) * k])
                            .for_each(|(o, w)| *o += d * w);
                    }
                });
            }
            Op::Sigmoid(a) => acc!(a, |ga| {
                for i in 0..g.len() {
                    ga[i] += g[i] * y[i] * (1.0 - y[i]);
                }
            }),
            Op::Tanh(a) => acc!(a, |ga| {
                for i in 0..g.len() {
                    ga[i] += g[i] * (1.0 - y[i] * y[i]);
                }
            }),
            Op::Exp(a) => acc!(a, |ga| {
                for i in 0..g.len() {
                    ga[i] += g[i] * y[i];
                }
            }),
            Op::LogFloor(a, floor) => {
                let av = self.value(a);
                acc!(a, |ga| {
                    for i in 0..g.len() {
                        if av[i] > floor {
                            ga[i] += g[i] / av[i];
                        }
                    }
                });
            }
            Op::Softmax(a) => acc!(a, |ga| {
                let s = dot(y, g);
                for i in 0..g.len() {
                    ga[i] += y[i] * (g[i] - s);
                }
            }),
            Op::Normalize(a) => {
                let total: f64 = self.value(a).iter().sum();
                acc!(a, |ga| {
                    let s = dot(y, g);
                    for i in 0..g.len() {
                        ga[i] += (g[i] - s) / total;
                    }
                });
            }
            Op::Sum(a) => acc!(a, |ga| {
                ga.iter_mut().for_each(|o| *o += g[0]);
            }),
            Op::AddN(ref xs) => {
                for &v in xs {
                    acc!(v, |gv| { add_into(gv, g) });
                }
            }
            Op::Concat(ref xs) => {
                let rows = if nodes[out].shape.len() == 2 {
                    nodes[out].shape[0]
                } else {
                    1
                };
                let total = *nodes[out].shape.last().unwrap();
                let mut off = 0;
                for &v in xs {
                    let w = *self.shape(v).last().unwrap();
                    acc!(v, |gv| {
                        for r in 0..rows {
                            let src = &g[r * total + off..r * total + off + w];
                            gv[r * w..(r + 1) * w]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(o, d)| *o += d);
                        }
                    });
                    off += w;
                }
            }
            Op::StackRows(ref xs) => {
                let d = nodes[out].shape[1];
                for (r, &v) in xs.iter().enumerate() {
                    acc!(v, |gv| { add_into(gv, &g[r * d..(r + 1) * d]) });
                }
            }
            Op::Row(m, i) => {
                let c = g.len();
                acc!(m, |gm| { add_into(&mut gm[i * c..(i + 1) * c], g) });
            }
            Op::GatherRows(t, ref ids) => {
                let d = self.shape(t)[1];
                acc!(t, |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                });
            }
            Op::Select(x, ref idx) => acc!(x, |gx| {
                for (d, &i) in g.iter().zip(idx) {
                    gx[i] += d;
                }
            }),
            Op::PadRows(m) => acc!(m, |gm| {
                let n = gm.len();
                add_into(gm, &g[..n]);
            }),
        }
    }

    /// Accumulated gradient of a leaf or parameter handle, if any.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        match self.nodes[v.0].op {
            Op::Param(id) => self.param_grads.get(id.0).and_then(|g| g.as_deref()),
            Op::Leaf => self.leaf_grads.get(&v.0).map(Vec::as_slice),
            _ => None,
        }
    }

    /// Parameter gradients accumulated so far.
    pub fn gradients(&self) -> Gradients {
        Gradients {
            grads: self.param_grads.clone(),
        }
    }

    pub fn into_gradients(self) -> Gradients {
        Gradients {
            grads: self.param_grads,
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(o, d)| *o += d);
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Logistic function, stable for large negative inputs.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
