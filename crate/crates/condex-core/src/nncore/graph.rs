//! Reverse-mode autodiff on a flat tape.
//!
//! A `Graph` records every op as it runs; `backward` walks the tape in
//! reverse and accumulates gradients. Values are f64 end to end and every op
//! output is checked finite, so bad numerics surface at the op that produced
//! them rather than three modules downstream.

use crate::error::{CoreError, Result};

/// Handle into one graph's tape. Only valid for the graph that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    op: Op,
}

enum Op {
    Leaf,
    Conv2d { x: NodeId, w: NodeId, b: NodeId, stride: usize },
    Relu { x: NodeId },
    /// `arg` caches the winning input flat index per output element.
    MaxPool2 { x: NodeId, arg: Vec<u32> },
    Dense { x: NodeId, w: NodeId, b: NodeId },
    Sigmoid { x: NodeId },
    Mul { a: NodeId, b: NodeId },
    Concat { parts: Vec<NodeId> },
    Flatten { x: NodeId },
    MeanSet { items: Vec<NodeId> },
    /// `attn` caches the softmax weights from the forward pass.
    Attention { query: NodeId, keys: Vec<NodeId>, vals: Vec<NodeId>, attn: Vec<f64> },
    CrossEntropy { p: NodeId, label: f64 },
    AddN { xs: Vec<NodeId> },
    Scale { x: NodeId, c: f64 },
}

pub const CE_EPS: f64 = 1e-7;

fn ensure_finite(op: &'static str, vals: &[f64]) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::NonFinite(op.to_string()))
    }
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> CoreError {
    CoreError::ShapeMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

/// Tape of nodes. Gradients accumulate across `backward` calls until
/// `zero_grads`; each training step normally uses a fresh graph instead.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn values(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].values
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.nodes[id.0].values[0]
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    fn push(&mut self, op: &'static str, shape: Vec<usize>, values: Vec<f64>, node: Op) -> Result<NodeId> {
        ensure_finite(op, &values)?;
        self.nodes.push(Node { shape, values, op: node });
        self.grads.push(None);
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, shape: &[usize], values: &[f64]) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(shape_err("leaf", shape, &[values.len()]));
        }
        self.push("leaf", shape.to_vec(), values.to_vec(), Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> Result<NodeId> {
        self.leaf(&[1], &[v])
    }

    /// Valid cross-correlation. x: [c_in, h, w]; w: [c_out, c_in, kh, kw];
    /// b: [c_out]; output [c_out, (h-kh)/stride+1, (w-kw)/stride+1].
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> Result<NodeId> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 3 || ws.len() != 4 {
            return Err(shape_err("conv2d", xs, ws));
        }
        let (ci, ih, iw) = (xs[0], xs[1], xs[2]);
        let (co, wci, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        if wci != ci || bs != [co] {
            return Err(shape_err("conv2d", xs, ws));
        }
        if stride == 0 || ih < kh || iw < kw {
            return Err(CoreError::invalid(format!(
                "conv2d: kernel {kh}x{kw} stride {stride} does not fit input {ih}x{iw}"
            )));
        }
        let oh = (ih - kh) / stride + 1;
        let ow = (iw - kw) / stride + 1;
        let out = conv2d_forward(
            &self.nodes[x.0].values,
            &self.nodes[w.0].values,
            &self.nodes[b.0].values,
            [ci, ih, iw, co, kh, kw, oh, ow],
            stride,
        );
        self.push("conv2d", vec![co, oh, ow], out, Op::Conv2d { x, w, b, stride })
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let values = self.nodes[x.0].values.iter().map(|&v| v.max(0.0)).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push("relu", shape, values, Op::Relu { x })
    }

    /// 2x2 max pooling with stride 2; trailing odd row/column is dropped.
    pub fn maxpool2(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.shape(x);
        if xs.len() != 3 || xs[1] < 2 || xs[2] < 2 {
            return Err(shape_err("maxpool2", xs, &[0, 2, 2]));
        }
        let (c, ih, iw) = (xs[0], xs[1], xs[2]);
        let (oh, ow) = (ih / 2, iw / 2);
        let xv = &self.nodes[x.0].values;
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut arg = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let base = (ch * ih + oy * 2) * iw + ox * 2;
                    let mut best = base;
                    for &cand in &[base + 1, base + iw, base + iw + 1] {
                        if xv[cand] > xv[best] {
                            best = cand;
                        }
                    }
                    out.push(xv[best]);
                    arg.push(best as u32);
                }
            }
        }
        self.push("maxpool2", vec![c, oh, ow], out, Op::MaxPool2 { x, arg })
    }

    /// y = W x + b. x: [n]; w: [m, n]; b: [m].
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 1 || ws.len() != 2 || ws[1] != xs[0] || bs != [ws[0]] {
            return Err(shape_err("dense", ws, xs));
        }
        let (m, n) = (ws[0], ws[1]);
        let xv = &self.nodes[x.0].values;
        let wv = &self.nodes[w.0].values;
        let bv = &self.nodes[b.0].values;
        let mut out = Vec::with_capacity(m);
        for o in 0..m {
            let row = &wv[o * n..(o + 1) * n];
            let mut acc = bv[o];
            for i in 0..n {
                acc += row[i] * xv[i];
            }
            out.push(acc);
        }
        self.push("dense", vec![m], out, Op::Dense { x, w, b })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let values = self.nodes[x.0]
            .values
            .iter()
            .map(|&v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push("sigmoid", shape, values, Op::Sigmoid { x })
    }

    /// Elementwise product of same-shape nodes.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("mul", self.shape(a), self.shape(b)));
        }
        let values = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&av, &bv)| av * bv)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        self.push("mul", shape, values, Op::Mul { a, b })
    }

    /// Concatenate 1-d vectors in order.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(CoreError::invalid("concat of zero parts"));
        }
        let mut values = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(shape_err("concat", self.shape(p), &[0]));
            }
            values.extend_from_slice(&self.nodes[p.0].values);
        }
        let n = values.len();
        self.push("concat", vec![n], values, Op::Concat { parts: parts.to_vec() })
    }

    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let values = self.nodes[x.0].values.clone();
        let n = values.len();
        self.push("flatten", vec![n], values, Op::Flatten { x })
    }

    /// Arithmetic mean of same-shape nodes. Per element, addends are summed
    /// in value order (not argument order), so any permutation of `items`
    /// produces bit-identical output.
    pub fn mean_over_set(&mut self, items: &[NodeId]) -> Result<NodeId> {
        if items.is_empty() {
            return Err(CoreError::invalid("mean_over_set of an empty set"));
        }
        let shape = self.shape(items[0]).to_vec();
        for &it in items {
            if self.shape(it) != shape {
                return Err(shape_err("mean_over_set", &shape, self.shape(it)));
            }
        }
        let numel: usize = shape.iter().product();
        let n = items.len() as f64;
        let mut values = Vec::with_capacity(numel);
        let mut col = Vec::with_capacity(items.len());
        for d in 0..numel {
            col.clear();
            col.extend(items.iter().map(|&it| self.nodes[it.0].values[d]));
            col.sort_by(f64::total_cmp);
            values.push(col.iter().sum::<f64>() / n);
        }
        self.push("mean_over_set", shape, values, Op::MeanSet { items: items.to_vec() })
    }

    /// softmax(q . k_j / sqrt(dim)) weighted sum of values.
    pub fn dot_product_attention(
        &mut self,
        query: NodeId,
        keys: &[NodeId],
        values: &[NodeId],
    ) -> Result<NodeId> {
        if keys.is_empty() || keys.len() != values.len() {
            return Err(CoreError::invalid(format!(
                "attention wants matched non-empty keys/values, got {}/{}",
                keys.len(),
                values.len()
            )));
        }
        let qs = self.shape(query).to_vec();
        if qs.len() != 1 {
            return Err(shape_err("attention", &qs, &[0]));
        }
        let vs = self.shape(values[0]).to_vec();
        for (&k, &v) in keys.iter().zip(values) {
            if self.shape(k) != qs {
                return Err(shape_err("attention", &qs, self.shape(k)));
            }
            if self.shape(v) != vs {
                return Err(shape_err("attention", &vs, self.shape(v)));
            }
        }
        let d = qs[0];
        let scale = 1.0 / (d as f64).sqrt();
        let qv = &self.nodes[query.0].values;
        let mut scores: Vec<f64> = keys
            .iter()
            .map(|&k| {
                let kv = &self.nodes[k.0].values;
                qv.iter().zip(kv).map(|(a, b)| a * b).sum::<f64>() * scale
            })
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for s in &mut scores {
            *s = (*s - max).exp();
            z += *s;
        }
        let attn: Vec<f64> = scores.iter().map(|s| s / z).collect();
        let dv = vs[0];
        let mut out = vec![0.0; dv];
        for (&v, &a) in values.iter().zip(&attn) {
            for (o, x) in out.iter_mut().zip(&self.nodes[v.0].values) {
                *o += a * x;
            }
        }
        self.push(
            "attention",
            vs,
            out,
            Op::Attention { query, keys: keys.to_vec(), vals: values.to_vec(), attn },
        )
    }

    /// Binary cross-entropy of a scalar prediction in (0,1) against a 0/1
    /// label. The prediction is clamped to [CE_EPS, 1-CE_EPS] first.
    pub fn cross_entropy(&mut self, p: NodeId, label: f64) -> Result<NodeId> {
        if self.values(p).len() != 1 {
            return Err(shape_err("cross_entropy", self.shape(p), &[1]));
        }
        if label != 0.0 && label != 1.0 {
            return Err(CoreError::invalid(format!("label {label} is not 0 or 1")));
        }
        let pc = self.value(p).clamp(CE_EPS, 1.0 - CE_EPS);
        let loss = -(label * pc.ln() + (1.0 - label) * (1.0 - pc).ln());
        self.push("cross_entropy", vec![1], vec![loss], Op::CrossEntropy { p, label })
    }

    /// Elementwise sum of same-shape nodes.
    pub fn add_n(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(CoreError::invalid("add_n of zero terms"));
        }
        let shape = self.shape(xs[0]).to_vec();
        let mut values = vec![0.0; self.values(xs[0]).len()];
        for &x in xs {
            if self.shape(x) != shape {
                return Err(shape_err("add_n", &shape, self.shape(x)));
            }
            for (acc, v) in values.iter_mut().zip(&self.nodes[x.0].values) {
                *acc += v;
            }
        }
        self.push("add_n", shape, values, Op::AddN { xs: xs.to_vec() })
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let values = self.nodes[x.0].values.iter().map(|&v| v * c).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push("scale", shape, values, Op::Scale { x, c })
    }

    /// Propagate d(loss)/d(node) for every node reachable from `loss`.
    /// Gradients add onto whatever previous backward calls left behind;
    /// call `zero_grads` (or use a fresh graph) between optimizer steps.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.values(loss).len() != 1 {
            return Err(CoreError::Contract(format!(
                "backward wants a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut scratch: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        scratch[loss.0] = Some(vec![1.0]);

        for i in (0..self.nodes.len()).rev() {
            let Some(gout) = scratch[i].take() else { continue };
            ensure_finite("backward", &gout)?;
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Conv2d { x, w, b, stride } => {
                    let xs = &self.nodes[x.0].shape;
                    let ws = &self.nodes[w.0].shape;
                    let dims = [xs[0], xs[1], xs[2], ws[0], ws[2], ws[3], node.shape[1], node.shape[2]];
                    let (gx, gw, gb) = conv2d_backward(
                        &self.nodes[x.0].values,
                        &self.nodes[w.0].values,
                        &gout,
                        dims,
                        *stride,
                    );
                    accum(&mut scratch, x.0, &gx);
                    accum(&mut scratch, w.0, &gw);
                    accum(&mut scratch, b.0, &gb);
                }
                Op::Relu { x } => {
                    let xv = &self.nodes[x.0].values;
                    let g: Vec<f64> = gout
                        .iter()
                        .zip(xv)
                        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                        .collect();
                    accum(&mut scratch, x.0, &g);
                }
                Op::MaxPool2 { x, arg } => {
                    let mut g = vec![0.0; self.nodes[x.0].values.len()];
                    for (&a, &go) in arg.iter().zip(&gout) {
                        g[a as usize] += go;
                    }
                    accum(&mut scratch, x.0, &g);
                }
                Op::Dense { x, w, b } => {
                    let n = self.nodes[x.0].values.len();
                    let xv = &self.nodes[x.0].values;
                    let wv = &self.nodes[w.0].values;
                    let mut gx = vec![0.0; n];
                    let mut gw = vec![0.0; wv.len()];
                    for (o, &go) in gout.iter().enumerate() {
                        let row = &wv[o * n..(o + 1) * n];
                        let grow = &mut gw[o * n..(o + 1) * n];
                        for i in 0..n {
                            gx[i] += row[i] * go;
                            grow[i] += xv[i] * go;
                        }
                    }
                    accum(&mut scratch, x.0, &gx);
                    accum(&mut scratch, w.0, &gw);
                    accum(&mut scratch, b.0, &gout);
                }
                Op::Sigmoid { x } => {
                    let g: Vec<f64> = gout
                        .iter()
                        .zip(&node.values)
                        .map(|(&g, &y)| g * y * (1.0 - y))
                        .collect();
                    accum(&mut scratch, x.0, &g);
                }
                Op::Mul { a, b } => {
                    let av = self.nodes[a.0].values.clone();
                    let bv = self.nodes[b.0].values.clone();
                    let ga: Vec<f64> = gout.iter().zip(&bv).map(|(&g, &v)| g * v).collect();
                    let gb: Vec<f64> = gout.iter().zip(&av).map(|(&g, &v)| g * v).collect();
                    accum(&mut scratch, a.0, &ga);
                    accum(&mut scratch, b.0, &gb);
                }
                Op::Concat { parts } => {
                    let mut off = 0;
                    let parts = parts.clone();
                    for p in parts {
                        let len = self.nodes[p.0].values.len();
                        accum(&mut scratch, p.0, &gout[off..off + len]);
                        off += len;
                    }
                }
                Op::Flatten { x } => {
                    accum(&mut scratch, x.0, &gout);
                }
                Op::MeanSet { items } => {
                    let n = items.len() as f64;
                    let g: Vec<f64> = gout.iter().map(|&v| v / n).collect();
                    for it in items.clone() {
                        accum(&mut scratch, it.0, &g);
                    }
                }
                Op::Attention { query, keys, vals, attn } => {
                    let (query, keys, vals, attn) =
                        (*query, keys.clone(), vals.clone(), attn.clone());
                    let d = self.nodes[query.0].values.len();
                    let scale = 1.0 / (d as f64).sqrt();
                    // d(out)/d(v_j) = a_j; d(a)/d(s) is the softmax Jacobian.
                    let gs: Vec<f64> = {
                        let ga: Vec<f64> = vals
                            .iter()
                            .map(|v| {
                                gout.iter()
                                    .zip(&self.nodes[v.0].values)
                                    .map(|(g, x)| g * x)
                                    .sum()
                            })
                            .collect();
                        let dot: f64 = attn.iter().zip(&ga).map(|(a, g)| a * g).sum();
                        attn.iter().zip(&ga).map(|(a, g)| a * (g - dot)).collect()
                    };
                    let mut gq = vec![0.0; d];
                    for (j, &k) in keys.iter().enumerate() {
                        let kv = &self.nodes[k.0].values;
                        let gk: Vec<f64> = self.nodes[query.0]
                            .values
                            .iter()
                            .map(|&q| gs[j] * scale * q)
                            .collect();
                        for (gqe, &ke) in gq.iter_mut().zip(kv) {
                            *gqe += gs[j] * scale * ke;
                        }
                        accum(&mut scratch, k.0, &gk);
                    }
                    for (j, &v) in vals.iter().enumerate() {
                        let gv: Vec<f64> = gout.iter().map(|&g| g * attn[j]).collect();
                        accum(&mut scratch, v.0, &gv);
                    }
                    accum(&mut scratch, query.0, &gq);
                }
                Op::CrossEntropy { p, label } => {
                    let pv = self.nodes[p.0].values[0];
                    // The clamp has zero gradient outside its interior.
                    let g = if pv > CE_EPS && pv < 1.0 - CE_EPS {
                        (pv - label) / (pv * (1.0 - pv))
                    } else {
                        0.0
                    };
                    accum(&mut scratch, p.0, &[gout[0] * g]);
                }
                Op::AddN { xs } => {
                    for x in xs.clone() {
                        accum(&mut scratch, x.0, &gout);
                    }
                }
                Op::Scale { x, c } => {
                    let g: Vec<f64> = gout.iter().map(|&v| v * c).collect();
                    accum(&mut scratch, x.0, &g);
                }
            }
            scratch[i] = Some(gout);
        }

        for (slot, fresh) in self.grads.iter_mut().zip(scratch) {
            if let Some(f) = fresh {
                match slot {
                    Some(acc) => {
                        for (a, v) in acc.iter_mut().zip(&f) {
                            *a += v;
                        }
                    }
                    None => *slot = Some(f),
                }
            }
        }
        Ok(())
    }
}

fn accum(scratch: &mut [Option<Vec<f64>>], idx: usize, g: &[f64]) {
    match &mut scratch[idx] {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        slot => *slot = Some(g.to_vec()),
    }
}

/// dims = [ci, ih, iw, co, kh, kw, oh, ow]
fn conv2d_forward(x: &[f64], w: &[f64], b: &[f64], dims: [usize; 8], stride: usize) -> Vec<f64> {
    let [ci, ih, iw, co, kh, kw, oh, ow] = dims;
    let mut out = vec![0.0; co * oh * ow];
    for o in 0..co {
        out[o * oh * ow..(o + 1) * oh * ow].fill(b[o]);
        for c in 0..ci {
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = w[((o * ci + c) * kh + ky) * kw + kx];
                    for oy in 0..oh {
                        let xrow = (c * ih + oy * stride + ky) * iw + kx;
                        let orow = (o * oh + oy) * ow;
                        if stride == 1 {
                            let xs = &x[xrow..xrow + ow];
                            let os = &mut out[orow..orow + ow];
                            for i in 0..ow {
                                os[i] += wv * xs[i];
                            }
                        } else {
                            for i in 0..ow {
                                out[orow + i] += wv * x[xrow + i * stride];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Same dims convention as the forward pass.
fn conv2d_backward(
    x: &[f64],
    w: &[f64],
    gout: &[f64],
    dims: [usize; 8],
    stride: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let [ci, ih, iw, co, kh, kw, oh, ow] = dims;
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; co];
    for o in 0..co {
        gb[o] = gout[o * oh * ow..(o + 1) * oh * ow].iter().sum();
        for c in 0..ci {
            for ky in 0..kh {
                for kx in 0..kw {
                    let widx = ((o * ci + c) * kh + ky) * kw + kx;
                    let wv = w[widx];
                    let mut gw_acc = 0.0;
                    for oy in 0..oh {
                        let xrow = (c * ih + oy * stride + ky) * iw + kx;
                        let orow = (o * oh + oy) * ow;
                        if stride == 1 {
                            let go = &gout[orow..orow + ow];
                            let xs = &x[xrow..xrow + ow];
                            let gxs = &mut gx[xrow..xrow + ow];
                            for i in 0..ow {
                                gw_acc += go[i] * xs[i];
                                gxs[i] += wv * go[i];
                            }
                        } else {
                            for i in 0..ow {
                                let go = gout[orow + i];
                                gw_acc += go * x[xrow + i * stride];
                                gx[xrow + i * stride] += wv * go;
                            }
                        }
                    }
                    gw[widx] += gw_acc;
                }
            }
        }
    }
    (gx, gw, gb)
}
