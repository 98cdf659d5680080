use std::borrow::Cow;

use rayon::prelude::*;

use super::optim::{ranknet_grad, ranknet_loss};
use super::Tensor;
use crate::{Error, Result};

// Products at least this large split their rows across threads.
const PAR_WORK: usize = 1 << 18;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Relu(Var),
    Tanh(Var),
    Conv1d {
        input: Var,
        kernel: Var,
    },
    /// `argmax[i]` is the input offset that produced output `i`.
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    Hadamard(Var, Var),
    Concat(Vec<Var>),
    Mean(Var),
    Sum(Var),
    Scale(Var, f64),
    Dropout {
        input: Var,
        scale: Vec<f64>,
    },
    Lookup {
        table: Var,
        ids: Vec<Option<usize>>,
    },
    RankNet(Var, Var),
    PairwiseRankNet {
        scores: Var,
        pairs: Vec<(usize, usize)>,
    },
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    tracked: bool,
}

/// Records operations in creation order, which is a topological order;
/// [`Tape::backward`] walks it in reverse.
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Cow<'p, Tensor>, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let tracked = parents.iter().any(|p| self.nodes[p.0].tracked);
        self.push(Cow::Owned(value), op, tracked)
    }

    /// A leaf that receives a gradient. Borrowed, not copied.
    pub fn param(&mut self, t: &'p Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, true)
    }

    /// An owned leaf that receives a gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, true)
    }

    /// A leaf without gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v).dims2(op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a, "matmul")?;
        let (k2, n) = self.dims(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}, {k}] x [{k2}, {n}]")));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; m * n];
        let fill = |(i, row): (usize, &mut [f64])| {
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for (o, &w) in row.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *o += x * w;
                }
            }
        };
        if m * k * n >= PAR_WORK {
            out.par_chunks_mut(n).enumerate().for_each(fill);
        } else {
            out.chunks_mut(n).enumerate().for_each(fill);
        }
        Ok(self.push_op(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), &[a, b]))
    }

    /// Adds a `[1, n]` (or length-`n`) bias to every row of `[m, n]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims(x, "add_bias")?;
        if self.value(bias).len() != n {
            return Err(Error::shape(
                "add_bias",
                format!("[{m}, {n}] + bias {:?}", self.value(bias).shape()),
            ));
        }
        let b = self.value(bias).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, &bi) in row.iter_mut().zip(b) {
                *o += bi;
            }
        }
        Ok(self.push_op(Tensor::matrix(m, n, out)?, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push_op(Tensor::new(shape, out)?, Op::Add(a, b), &[a, b]))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| f(v)).collect(),
        };
        self.push_op(out, op, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map(x, |v| v * c, Op::Scale(x, c))
    }

    /// Same-padded 1-d convolution of `[len, in]` with a `[width, in, out]`
    /// kernel, giving `[len, out]`. Row `t` sees input rows
    /// `t - (width-1)/2 ..= t + width/2`; out-of-range rows are zeros.
    pub fn conv1d(&mut self, input: Var, kernel: Var) -> Result<Var> {
        let (len, cin) = self.dims(input, "conv1d")?;
        let (w, kin, cout) = match self.value(kernel).shape() {
            &[w, i, o] => (w, i, o),
            s => {
                return Err(Error::shape(
                    "conv1d",
                    format!("kernel must be [width, in, out], got {s:?}"),
                ))
            }
        };
        if kin != cin || w == 0 {
            return Err(Error::shape(
                "conv1d",
                format!("input [{len}, {cin}] with kernel [{w}, {kin}, {cout}]"),
            ));
        }
        let pad = (w - 1) / 2;
        let x = self.value(input).data();
        let k = self.value(kernel).data();
        let mut out = vec![0.0; len * cout];
        for t in 0..len {
            let row = &mut out[t * cout..(t + 1) * cout];
            for j in 0..w {
                let Some(src) = (t + j).checked_sub(pad).filter(|&s| s < len) else {
                    continue;
                };
                for c in 0..cin {
                    let xv = x[src * cin + c];
                    if xv == 0.0 {
                        continue;
                    }
                    let kr = &k[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                    for (o, &kv) in row.iter_mut().zip(kr) {
                        *o += xv * kv;
                    }
                }
            }
        }
        Ok(self.push_op(
            Tensor::matrix(len, cout, out)?,
            Op::Conv1d { input, kernel },
            &[input, kernel],
        ))
    }

    /// Column-wise max over row windows of `[len, c]`. Windows start every
    /// `stride` rows and must fit entirely; a sequence shorter than one
    /// window is pooled as a whole.
    pub fn max_pool_1d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let (len, c) = self.dims(x, "max_pool_1d")?;
        if window == 0 || stride == 0 || len == 0 {
            return Err(Error::shape(
                "max_pool_1d",
                format!("window {window}, stride {stride} over [{len}, {c}]"),
            ));
        }
        let starts: Vec<usize> = if len < window {
            vec![0]
        } else {
            (0..=(len - window)).step_by(stride).collect()
        };
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(starts.len() * c);
        let mut argmax = Vec::with_capacity(starts.len() * c);
        for &s in &starts {
            let end = (s + window).min(len);
            for col in 0..c {
                let mut best = s * c + col;
                for r in s + 1..end {
                    if data[r * c + col] > data[best] {
                        best = r * c + col;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
        let rows = starts.len();
        Ok(self.push_op(
            Tensor::matrix(rows, c, out)?,
            Op::MaxPool { input: x, argmax },
            &[x],
        ))
    }

    /// Column-wise max over all rows: `[len, c] -> [1, c]`.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var> {
        let (len, _) = self.dims(x, "global_max_pool")?;
        self.max_pool_1d(x, len.max(1), 1)
    }

    /// Elementwise product; a `[1, n]` left operand is broadcast over the
    /// rows of `b`.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.dims(a, "hadamard")?;
        let (rb, cb) = self.dims(b, "hadamard")?;
        if ca != cb || (ra != rb && ra != 1) {
            return Err(Error::shape(
                "hadamard",
                format!("[{ra}, {ca}] * [{rb}, {cb}]"),
            ));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let out: Vec<f64> = bv
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let ai = if ra == 1 { i % ca } else { i };
                av[ai] * y
            })
            .collect();
        Ok(self.push_op(Tensor::matrix(rb, cb, out)?, Op::Hadamard(a, b), &[a, b]))
    }

    /// Concatenates along columns; all parts share a row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no inputs"));
        }
        let rows = self.dims(parts[0], "concat")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims(p, "concat")?;
            if r != rows {
                return Err(Error::shape("concat", format!("row counts {rows} and {r}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        Ok(self.push_op(
            Tensor::matrix(rows, total, out)?,
            Op::Concat(parts.to_vec()),
            parts,
        ))
    }

    /// Mean of all elements as a `[1, 1]` scalar.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        Ok(self.push_op(Tensor::scalar(m), Op::Mean(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push_op(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Inverted dropout with a supplied keep mask (`true` keeps).
    /// Kept values are scaled by `1 / (1 - p)`.
    pub fn dropout(&mut self, x: Var, p: f64, keep: &[bool]) -> Result<Var> {
        if keep.len() != self.value(x).len() {
            return Err(Error::shape(
                "dropout",
                format!("mask of {} for {:?}", keep.len(), self.value(x).shape()),
            ));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate {p} outside [0,1]"
            )));
        }
        let s = if p < 1.0 { 1.0 / (1.0 - p) } else { 0.0 };
        let scale: Vec<f64> = keep.iter().map(|&k| if k { s } else { 0.0 }).collect();
        let t = self.value(x);
        let out = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().zip(&scale).map(|(v, s)| v * s).collect(),
        };
        Ok(self.push_op(out, Op::Dropout { input: x, scale }, &[x]))
    }

    /// Gathers rows of a `[vocab, dim]` table; `None` yields a zero row.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[Option<usize>]) -> Result<Var> {
        let (v, d) = self.dims(table, "embedding_lookup")?;
        if let Some(bad) = ids.iter().flatten().find(|&&i| i >= v) {
            return Err(Error::shape(
                "embedding_lookup",
                format!("id {bad} outside vocab {v}"),
            ));
        }
        let out = gather_rows(self.value(table).data(), d, ids);
        Ok(self.push_op(
            Tensor::matrix(ids.len(), d, out)?,
            Op::Lookup {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// RankNet loss of two `[1, 1]` scores.
    pub fn ranknet(&mut self, pos: Var, neg: Var) -> Result<Var> {
        if self.value(pos).len() != 1 || self.value(neg).len() != 1 {
            return Err(Error::shape("ranknet", "scores must be scalars"));
        }
        let l = ranknet_loss(self.value(pos).item(), self.value(neg).item());
        Ok(self.push_op(Tensor::scalar(l), Op::RankNet(pos, neg), &[pos, neg]))
    }

    /// Mean RankNet loss over `(preferred, other)` index pairs into a score
    /// column.
    pub fn pairwise_ranknet(&mut self, scores: Var, pairs: &[(usize, usize)]) -> Result<Var> {
        let n = self.value(scores).len();
        if pairs.is_empty() || pairs.iter().any(|&(i, j)| i >= n || j >= n) {
            return Err(Error::shape(
                "pairwise_ranknet",
                format!("{} pairs over {n} scores", pairs.len()),
            ));
        }
        let s = self.value(scores).data();
        let l = pairs
            .iter()
            .map(|&(i, j)| ranknet_loss(s[i], s[j]))
            .sum::<f64>()
            / pairs.len() as f64;
        Ok(self.push_op(
            Tensor::scalar(l),
            Op::PairwiseRankNet {
                scores,
                pairs: pairs.to_vec(),
            },
            &[scores],
        ))
    }

    /// Back-propagates from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].tracked {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    /// Gradient of a tracked node after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let tracked = |v: &Var| nodes[v.0].tracked;
        let val = |v: &Var| nodes[v.0].value.as_ref();
        let mut acc = |v: &Var, f: &mut dyn FnMut(&mut [f64])| {
            if tracked(v) {
                let n = val(v).len();
                f(grads[v.0].get_or_insert_with(|| vec![0.0; n]));
            }
        };
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (val(a).rows(), val(a).cols());
                let n = val(b).cols();
                let (av, bv) = (val(a).data(), val(b).data());
                let big = m * k * n >= PAR_WORK;
                acc(a, &mut |ga| {
                    let fill = |(r, gar): (usize, &mut [f64])| {
                        let gr = &g[r * n..(r + 1) * n];
                        for (p, o) in gar.iter_mut().enumerate() {
                            let br = &bv[p * n..(p + 1) * n];
                            *o += gr.iter().zip(br).map(|(x, y)| x * y).sum::<f64>();
                        }
                    };
                    if big {
                        ga.par_chunks_mut(k).enumerate().for_each(fill);
                    } else {
                        ga.chunks_mut(k).enumerate().for_each(fill);
                    }
                });
                acc(b, &mut |gb| {
                    let fill = |(p, gbr): (usize, &mut [f64])| {
                        for r in 0..m {
                            let x = av[r * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (o, &gv) in gbr.iter_mut().zip(&g[r * n..(r + 1) * n]) {
                                *o += x * gv;
                            }
                        }
                    };
                    if big {
                        gb.par_chunks_mut(n).enumerate().for_each(fill);
                    } else {
                        gb.chunks_mut(n).enumerate().for_each(fill);
                    }
                });
            }
            Op::AddBias(x, bias) => {
                acc(x, &mut |gx| add_into(gx, g));
                let n = val(bias).len();
                acc(bias, &mut |gb| {
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                });
            }
            Op::Add(a, b) => {
                acc(a, &mut |ga| add_into(ga, g));
                acc(b, &mut |gb| add_into(gb, g));
            }
            Op::Relu(x) => {
                let xv = val(x).data();
                acc(x, &mut |gx| {
                    for ((o, &gv), &v) in gx.iter_mut().zip(g).zip(xv) {
                        if v > 0.0 {
                            *o += gv;
                        }
                    }
                });
            }
            Op::Tanh(x) => {
                let y = nodes[i].value.data();
                acc(x, &mut |gx| {
                    for ((o, &gv), &yv) in gx.iter_mut().zip(g).zip(y) {
                        *o += gv * (1.0 - yv * yv);
                    }
                });
            }
            Op::Scale(x, c) => {
                acc(x, &mut |gx| {
                    for (o, &gv) in gx.iter_mut().zip(g) {
                        *o += gv * c;
                    }
                });
            }
            Op::Conv1d { input, kernel } => {
                let (len, cin) = (val(input).rows(), val(input).cols());
                let ks = val(kernel).shape();
                let (w, cout) = (ks[0], ks[2]);
                let pad = (w - 1) / 2;
                let (xv, kv) = (val(input).data(), val(kernel).data());
                let taps = |t: usize, j: usize| (t + j).checked_sub(pad).filter(|&s| s < len);
                acc(input, &mut |gx| {
                    for t in 0..len {
                        let gr = &g[t * cout..(t + 1) * cout];
                        for j in 0..w {
                            let Some(src) = taps(t, j) else { continue };
                            for c in 0..cin {
                                let kr = &kv[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                                gx[src * cin + c] +=
                                    gr.iter().zip(kr).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                });
                acc(kernel, &mut |gk| {
                    for t in 0..len {
                        let gr = &g[t * cout..(t + 1) * cout];
                        for j in 0..w {
                            let Some(src) = taps(t, j) else { continue };
                            for c in 0..cin {
                                let xval = xv[src * cin + c];
                                if xval == 0.0 {
                                    continue;
                                }
                                let off = (j * cin + c) * cout;
                                for (o, &gv) in gk[off..off + cout].iter_mut().zip(gr) {
                                    *o += xval * gv;
                                }
                            }
                        }
                    }
                });
            }
            Op::MaxPool { input, argmax } => {
                acc(input, &mut |gx| {
                    for (&src, &gv) in argmax.iter().zip(g) {
                        gx[src] += gv;
                    }
                });
            }
            Op::Hadamard(a, b) => {
                let (av, bv) = (val(a).data(), val(b).data());
                let broadcast = val(a).rows() != val(b).rows() || val(a).len() != val(b).len();
                let ca = val(a).cols();
                acc(a, &mut |ga| {
                    for (idx, (&gv, &y)) in g.iter().zip(bv).enumerate() {
                        let ai = if broadcast { idx % ca } else { idx };
                        ga[ai] += gv * y;
                    }
                });
                acc(b, &mut |gb| {
                    for (idx, (o, &gv)) in gb.iter_mut().zip(g).enumerate() {
                        let ai = if broadcast { idx % ca } else { idx };
                        *o += gv * av[ai];
                    }
                });
            }
            Op::Concat(parts) => {
                let rows = val(&parts[0]).rows();
                let total: usize = parts.iter().map(|p| val(p).cols()).sum();
                let mut offset = 0;
                for p in parts {
                    let w = val(p).cols();
                    acc(p, &mut |gp| {
                        for r in 0..rows {
                            add_into(
                                &mut gp[r * w..(r + 1) * w],
                                &g[r * total + offset..r * total + offset + w],
                            );
                        }
                    });
                    offset += w;
                }
            }
            Op::Mean(x) => {
                let n = val(x).len() as f64;
                acc(x, &mut |gx| gx.iter_mut().for_each(|o| *o += g[0] / n));
            }
            Op::Sum(x) => {
                acc(x, &mut |gx| gx.iter_mut().for_each(|o| *o += g[0]));
            }
            Op::Dropout { input, scale } => {
                acc(input, &mut |gx| {
                    for ((o, &gv), &s) in gx.iter_mut().zip(g).zip(scale) {
                        *o += gv * s;
                    }
                });
            }
            Op::Lookup { table, ids } => {
                let d = val(table).cols();
                acc(table, &mut |gt| {
                    for (r, id) in ids.iter().enumerate() {
                        if let Some(id) = id {
                            add_into(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                        }
                    }
                });
            }
            Op::RankNet(pos, neg) => {
                let d = ranknet_grad(val(pos).item(), val(neg).item()) * g[0];
                acc(pos, &mut |gp| gp[0] += d);
                acc(neg, &mut |gn| gn[0] -= d);
            }
            Op::PairwiseRankNet { scores, pairs } => {
                let s = val(scores).data();
                let inv = g[0] / pairs.len() as f64;
                acc(scores, &mut |gs| {
                    for &(a, b) in pairs {
                        let d = ranknet_grad(s[a], s[b]) * inv;
                        gs[a] += d;
                        gs[b] -= d;
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Row gather used by embedding lookups; `None` gives zeros.
pub(crate) fn gather_rows(table: &[f64], dim: usize, ids: &[Option<usize>]) -> Vec<f64> {
    let mut out = vec![0.0; ids.len() * dim];
    for (r, id) in ids.iter().enumerate() {
        if let Some(id) = id {
            out[r * dim..(r + 1) * dim].copy_from_slice(&table[id * dim..(id + 1) * dim]);
        }
    }
    out
}
