//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every op applied to its [`Var`]s. Nodes are appended in
//! evaluation order, so the tape is topologically sorted by construction and
//! backward is a single reverse sweep. Only nodes with a tracked ancestor take
//! part in the sweep; constants never receive a gradient.
//!
//! Broadcasting is deliberately absent apart from [`Graph::add_bias`]; rows
//! are repeated explicitly with [`Graph::gather_rows`].

use std::collections::HashMap;

use crate::kernels;
use crate::optim::{ParamGrads, ParamId, ParamStore};
use crate::tensor::{mismatch, Tensor, TensorError};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SegmentMax { input: Var, argmax: Vec<usize> },
    Gather { input: Var, index: Vec<Option<usize>> },
    Reshape(Var),
    ChannelMix(Var, Var),
    Sum(Var),
    SmoothL1(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Knee of the smooth-L1 loss: quadratic below, linear above.
pub const SMOOTH_L1_KNEE: f64 = 0.01;

/// Piecewise smooth-L1 of one residual.
#[inline]
pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < SMOOTH_L1_KNEE {
        50.0 * x * x
    } else {
        x.abs() - 0.005
    }
}

#[inline]
fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < SMOOTH_L1_KNEE {
        100.0 * x
    } else {
        x.signum()
    }
}

#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    tracking: bool,
    params: HashMap<ParamId, Var>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// A graph that records gradients for parameters and tracked leaves.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            tracking: true,
            params: HashMap::new(),
        }
    }

    /// A graph in which nothing is tracked; backward yields no gradients.
    pub fn inference() -> Self {
        Self {
            tracking: false,
            ..Self::new()
        }
    }

    pub fn is_tracking(&self) -> bool {
        self.tracking
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var], name: &'static str) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let tracked = parents.iter().any(|p| self.nodes[p.0].tracked);
        self.nodes.push(Node { value, op, tracked });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf_node(&mut self, value: Tensor, tracked: bool) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked: tracked && self.tracking,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Untracked input.
    pub fn constant(&mut self, value: Tensor) -> Result<Var, TensorError> {
        self.leaf_node(value, false)
    }

    /// Tracked input (when the graph is tracking).
    pub fn leaf(&mut self, value: Tensor) -> Result<Var, TensorError> {
        self.leaf_node(value, true)
    }

    /// Parameter leaf, created once per graph and reused afterwards.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var, TensorError> {
        if let Some(&v) = self.params.get(&id) {
            return Ok(v);
        }
        let v = self.leaf_node(store.get(id).clone(), true)?;
        self.params.insert(id, v);
        Ok(v)
    }

    fn expect_rank2(&self, op: &'static str, v: Var) -> Result<(usize, usize), TensorError> {
        let s = self.shape(v);
        if s.len() != 2 {
            return Err(mismatch(op, format!("expected a matrix, got shape {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.expect_rank2("matmul", a)?;
        let (k2, n) = self.expect_rank2("matmul", b)?;
        if k != k2 {
            return Err(mismatch("matmul", format!("[{m}, {k}] x [{k2}, {n}]")));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), &[a, b], "matmul")
    }

    /// `a[i, :] + bias` for every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (m, n) = self.expect_rank2("add_bias", a)?;
        if self.shape(bias) != [n] {
            return Err(mismatch(
                "add_bias",
                format!("[{m}, {n}] + {:?}", self.shape(bias)),
            ));
        }
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, bi) in row.iter_mut().zip(&b) {
                *o += bi;
            }
        }
        self.push(Tensor::new(&[m, n], out)?, Op::AddBias(a, bias), &[a, bias], "add_bias")
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(
                name,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let shape = self.shape(a).to_vec();
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        self.push(Tensor::new(&shape, out)?, op, &[a, b], name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, TensorError> {
        let t = self.value(a);
        let out = Tensor::new(t.shape(), t.data().iter().map(|x| x * factor).collect())?;
        self.push(out, Op::Scale(a, factor), &[a], "scale")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        let out = Tensor::new(t.shape(), t.data().iter().map(|x| x.max(0.0)).collect())?;
        self.push(out, Op::Relu(a), &[a], "relu")
    }

    /// Concatenate matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(mismatch("concat_cols", "no inputs"));
        }
        let mut widths = Vec::with_capacity(parts.len());
        let (m, _) = self.expect_rank2("concat_cols", parts[0])?;
        for &p in parts {
            let (rows, cols) = self.expect_rank2("concat_cols", p)?;
            if rows != m {
                return Err(mismatch(
                    "concat_cols",
                    format!("row counts {m} and {rows}"),
                ));
            }
            widths.push(cols);
        }
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        self.push(
            Tensor::new(&[m, n], out)?,
            Op::ConcatCols(parts.to_vec()),
            parts,
            "concat_cols",
        )
    }

    /// Stack matrices with equal column counts along the row axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(mismatch("concat_rows", "no inputs"));
        }
        let (_, n) = self.expect_rank2("concat_rows", parts[0])?;
        let mut m = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (rows, cols) = self.expect_rank2("concat_rows", p)?;
            if cols != n {
                return Err(mismatch(
                    "concat_rows",
                    format!("column counts {n} and {cols}"),
                ));
            }
            m += rows;
            out.extend_from_slice(self.value(p).data());
        }
        self.push(
            Tensor::new(&[m, n], out)?,
            Op::ConcatRows(parts.to_vec()),
            parts,
            "concat_rows",
        )
    }

    /// Column-wise max over consecutive groups of `group` rows:
    /// `[g * group, c] -> [g, c]`. Ties go to the lowest row index, and the
    /// gradient is routed entirely to the winning row.
    pub fn segment_max(&mut self, a: Var, group: usize) -> Result<Var, TensorError> {
        let (m, c) = self.expect_rank2("segment_max", a)?;
        if group == 0 || m % group != 0 {
            return Err(mismatch(
                "segment_max",
                format!("{m} rows do not split into groups of {group}"),
            ));
        }
        let groups = m / group;
        let data = self.value(a).data();
        let mut out = vec![0.0; groups * c];
        let mut argmax = vec![0usize; groups * c];
        for gi in 0..groups {
            let base = gi * group;
            for ch in 0..c {
                let mut best = data[base * c + ch];
                let mut best_row = base;
                for r in base + 1..base + group {
                    let v = data[r * c + ch];
                    if v > best {
                        best = v;
                        best_row = r;
                    }
                }
                out[gi * c + ch] = best;
                argmax[gi * c + ch] = best_row;
            }
        }
        self.push(
            Tensor::new(&[groups, c], out)?,
            Op::SegmentMax { input: a, argmax },
            &[a],
            "segment_max",
        )
    }

    /// Row gather: output row `i` is `a[index[i], :]`, or zeros for `None`.
    pub fn gather_rows(&mut self, a: Var, index: &[Option<usize>]) -> Result<Var, TensorError> {
        let (m, c) = self.expect_rank2("gather_rows", a)?;
        let data = self.value(a).data();
        let mut out = vec![0.0; index.len() * c];
        for (i, idx) in index.iter().enumerate() {
            if let Some(r) = *idx {
                if r >= m {
                    return Err(TensorError::IndexOutOfRange {
                        op: "gather_rows",
                        index: r,
                        len: m,
                    });
                }
                out[i * c..(i + 1) * c].copy_from_slice(&data[r * c..(r + 1) * c]);
            }
        }
        self.push(
            Tensor::new(&[index.len(), c], out)?,
            Op::Gather {
                input: a,
                index: index.to_vec(),
            },
            &[a],
            "gather_rows",
        )
    }

    /// Convenience wrapper over [`Graph::gather_rows`] without padding rows.
    pub fn select_rows(&mut self, a: Var, index: &[usize]) -> Result<Var, TensorError> {
        let idx: Vec<Option<usize>> = index.iter().copied().map(Some).collect();
        self.gather_rows(a, &idx)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let out = self.value(a).clone().reshape(shape)?;
        self.push(out, Op::Reshape(a), &[a], "reshape")
    }

    /// Channel-wise graph aggregation:
    /// `out[j, c] = Σ_k adj[j, k, c] · x[k, c]` with `adj: [J, J, C]`.
    /// `x` may stack several `[J, C]` blocks (`[g * J, C]`); each block is
    /// aggregated independently with the same `adj`.
    pub fn channel_mix(&mut self, adj: Var, x: Var) -> Result<Var, TensorError> {
        let (rows, c) = self.expect_rank2("channel_mix", x)?;
        let adj_shape = self.shape(adj);
        if adj_shape.len() != 3
            || adj_shape[0] != adj_shape[1]
            || adj_shape[2] != c
            || adj_shape[0] == 0
            || rows % adj_shape[0] != 0
        {
            return Err(mismatch(
                "channel_mix",
                format!("adjacency {adj_shape:?} with features [{rows}, {c}]"),
            ));
        }
        let j = adj_shape[0];
        let a = self.value(adj).data();
        let xv = self.value(x).data();
        let mut out = vec![0.0; rows * c];
        for base in (0..rows).step_by(j) {
            for row in 0..j {
                let o = &mut out[(base + row) * c..(base + row + 1) * c];
                for k in 0..j {
                    let a_rk = &a[(row * j + k) * c..(row * j + k + 1) * c];
                    let x_k = &xv[(base + k) * c..(base + k + 1) * c];
                    for ch in 0..c {
                        o[ch] += a_rk[ch] * x_k[ch];
                    }
                }
            }
        }
        self.push(
            Tensor::new(&[rows, c], out)?,
            Op::ChannelMix(adj, x),
            &[adj, x],
            "channel_mix",
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a], "sum")
    }

    /// Elementwise smooth-L1 (see [`smooth_l1`]).
    pub fn smooth_l1(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        let out = Tensor::new(t.shape(), t.data().iter().map(|&x| smooth_l1(x)).collect())?;
        self.push(out, Op::SmoothL1(a), &[a], "smooth_l1")
    }

    /// `x · w + b` for `x: [m, in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, TensorError> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    /// 2D convolution over an `[h * w, c_in]` channels-last map.
    ///
    /// `weight` has shape `[k * k * c_in, c_out]` with rows ordered by
    /// `(ky, kx, c_in)`. Zero padding of `pad` pixels on every side. Returns
    /// the output map together with its spatial size.
    #[allow(clippy::too_many_arguments)]
    pub fn conv2d(
        &mut self,
        input: Var,
        height: usize,
        width: usize,
        weight: Var,
        bias: Option<Var>,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<(Var, usize, usize), TensorError> {
        let (pixels, c_in) = self.expect_rank2("conv2d", input)?;
        if pixels != height * width {
            return Err(mismatch(
                "conv2d",
                format!("{pixels} rows for a {height}x{width} map"),
            ));
        }
        if stride == 0 || kernel == 0 || height + 2 * pad < kernel || width + 2 * pad < kernel {
            return Err(mismatch(
                "conv2d",
                format!("kernel {kernel}, stride {stride}, pad {pad} on {height}x{width}"),
            ));
        }
        let (wk, _) = self.expect_rank2("conv2d", weight)?;
        if wk != kernel * kernel * c_in {
            return Err(mismatch(
                "conv2d",
                format!("weight has {wk} rows, expected {}", kernel * kernel * c_in),
            ));
        }
        let out_h = (height + 2 * pad - kernel) / stride + 1;
        let out_w = (width + 2 * pad - kernel) / stride + 1;
        let mut index = Vec::with_capacity(out_h * out_w * kernel * kernel);
        for oy in 0..out_h {
            for ox in 0..out_w {
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        let inside = iy >= 0 && ix >= 0 && (iy as usize) < height && (ix as usize) < width;
                        index.push(inside.then(|| iy as usize * width + ix as usize));
                    }
                }
            }
        }
        let patches = self.gather_rows(input, &index)?;
        let cols = self.reshape(patches, &[out_h * out_w, kernel * kernel * c_in])?;
        let out = self.linear(cols, weight, bias)?;
        Ok((out, out_h, out_w))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let loss_value = self.value(loss);
        if loss_value.numel() != 1 {
            return Err(TensorError::NotScalar(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].tracked {
            grads[loss.0] = Some(vec![1.0]);
        }

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &g, &mut grads);
        }

        let params = self.params.iter().map(|(&id, &v)| (id, v)).collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, op: &Op, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if let Some(ga) = self.slot(grads, *a) {
                    kernels::matmul_grad_lhs(g, self.value(*b).data(), m, k, n, ga);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    kernels::matmul_grad_rhs(self.value(*a).data(), g, m, k, n, gb);
                }
            }
            Op::AddBias(a, bias) => {
                if let Some(ga) = self.slot(grads, *a) {
                    add_into(ga, g);
                }
                let n = self.shape(*bias)[0];
                if let Some(gb) = self.slot(grads, *bias) {
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    add_into(gb, g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for (o, gi) in gb.iter_mut().zip(g) {
                        *o -= gi;
                    }
                }
            }
            Op::Mul(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, gi), y) in ga.iter_mut().zip(g).zip(self.value(*b).data()) {
                        *o += gi * y;
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for ((o, gi), x) in gb.iter_mut().zip(g).zip(self.value(*a).data()) {
                        *o += gi * x;
                    }
                }
            }
            Op::Scale(a, factor) => {
                if let Some(ga) = self.slot(grads, *a) {
                    kernels::axpy(ga, *factor, g);
                }
            }
            Op::Relu(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, gi), x) in ga.iter_mut().zip(g).zip(self.value(*a).data()) {
                        if *x > 0.0 {
                            *o += gi;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let widths: Vec<usize> = parts.iter().map(|p| self.shape(*p)[1]).collect();
                let n: usize = widths.iter().sum();
                let m = g.len().checked_div(n).unwrap_or(0);
                let mut offset = 0;
                for (p, w) in parts.iter().zip(&widths) {
                    if let Some(gp) = self.slot(grads, *p) {
                        for i in 0..m {
                            add_into(&mut gp[i * w..(i + 1) * w], &g[i * n + offset..i * n + offset + w]);
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).numel();
                    if let Some(gp) = self.slot(grads, *p) {
                        add_into(gp, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::SegmentMax { input, argmax } => {
                let c = self.shape(*input)[1];
                if let Some(ga) = self.slot(grads, *input) {
                    for (slot, (&row, gi)) in argmax.iter().zip(g).enumerate() {
                        ga[row * c + slot % c] += gi;
                    }
                }
            }
            Op::Gather { input, index } => {
                let c = self.shape(*input)[1];
                if let Some(ga) = self.slot(grads, *input) {
                    for (i, idx) in index.iter().enumerate() {
                        if let Some(r) = *idx {
                            add_into(&mut ga[r * c..(r + 1) * c], &g[i * c..(i + 1) * c]);
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    add_into(ga, g);
                }
            }
            Op::ChannelMix(adj, x) => {
                let (rows, c) = (self.shape(*x)[0], self.shape(*x)[1]);
                let j = self.shape(*adj)[0];
                let a = self.value(*adj).data();
                let xv = self.value(*x).data();
                if let Some(gadj) = self.slot(grads, *adj) {
                    for base in (0..rows).step_by(j) {
                        for row in 0..j {
                            let go = &g[(base + row) * c..(base + row + 1) * c];
                            for k in 0..j {
                                let dst = &mut gadj[(row * j + k) * c..(row * j + k + 1) * c];
                                let x_k = &xv[(base + k) * c..(base + k + 1) * c];
                                for ch in 0..c {
                                    dst[ch] += go[ch] * x_k[ch];
                                }
                            }
                        }
                    }
                }
                if let Some(gx) = self.slot(grads, *x) {
                    for base in (0..rows).step_by(j) {
                        for row in 0..j {
                            let go = &g[(base + row) * c..(base + row + 1) * c];
                            for k in 0..j {
                                let a_rk = &a[(row * j + k) * c..(row * j + k + 1) * c];
                                let dst = &mut gx[(base + k) * c..(base + k + 1) * c];
                                for ch in 0..c {
                                    dst[ch] += go[ch] * a_rk[ch];
                                }
                            }
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }
            }
            Op::SmoothL1(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, gi), x) in ga.iter_mut().zip(g).zip(self.value(*a).data()) {
                        *o += gi * smooth_l1_grad(*x);
                    }
                }
            }
        }
    }

    /// Gradient buffer of `v`, allocated on first use; `None` when untracked.
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut [f64]> {
        if !self.nodes[v.0].tracked {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]).as_mut_slice())
    }
}

#[inline]
fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Leaf gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient with respect to a leaf; `None` for untracked or unreached leaves.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradients for every parameter that entered the graph.
    pub fn param_grads(&self, store: &ParamStore) -> ParamGrads {
        let mut out = ParamGrads::empty(store);
        self.accumulate_into(&mut out, store, 1.0);
        out
    }

    /// `out += scale * ∂loss/∂param` for every parameter that entered the graph.
    pub fn accumulate_into(&self, out: &mut ParamGrads, store: &ParamStore, scale: f64) {
        let mut params = self.params.clone();
        params.sort_by_key(|(id, _)| *id);
        for (id, v) in params {
            if let Some(g) = self.wrt(v) {
                out.accumulate(id, g, store.get(id).shape(), scale);
            }
        }
    }
}
