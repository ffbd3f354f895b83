use rand::Rng;

use super::Tensor;
use crate::{Error, Result};

/// Index of a node on the tape.
pub type NodeId = usize;

/// Additive value used to mask attention logits before softmax.
pub const MASK_NEG: f64 = -1e30;

struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    grad: Vec<f64>,
    op: Op,
}

enum Op {
    Leaf,
    /// C[m×n] = A[m×k] · B[k×n]
    MatMul { a: NodeId, b: NodeId },
    /// y[r] = M[r×c] · v[c]
    MatVec { m: NodeId, v: NodeId },
    /// Elementwise sum of two same-shape nodes.
    Add { a: NodeId, b: NodeId },
    /// X[r×c] + b[c], broadcast over rows.
    AddBias { x: NodeId, b: NodeId },
    /// X[K×H×W] + b[K], broadcast over the spatial extent.
    ChannelBias { x: NodeId, b: NodeId },
    /// Elementwise product of two same-shape nodes.
    Mul { a: NodeId, b: NodeId },
    Scale { x: NodeId, factor: f64 },
    /// X + constant offsets (attention masking); the offsets need no
    /// storage since the gradient passes straight through.
    AddConst { x: NodeId },
    /// X ⊙ constant mask (dropout).
    MulConst { x: NodeId, mask: Vec<f64> },
    Relu { x: NodeId },
    /// Softmax along the last axis.
    Softmax { x: NodeId },
    /// Cross-correlation of input [C×H×W] with kernels [K×C×kh×kw].
    Conv2d { input: NodeId, kernels: NodeId, stride: usize, padding: usize },
    /// [K×H×W] -> [K], per-channel spatial mean.
    GlobalAvgPool { x: NodeId },
    /// 2×2 max pooling with stride 2; argmax holds the flat input index per output.
    MaxPool2 { x: NodeId, argmax: Vec<usize> },
    /// [K×H×W] -> [K×K] channel inner products divided by K·H·W.
    Gram { x: NodeId },
    /// Upper triangle (incl. diagonal) of a square matrix, flattened.
    TriU { x: NodeId },
    Transpose { x: NodeId },
    /// Columns [start, start+len) of a 2-D node.
    SliceCols { x: NodeId, start: usize, len: usize },
    /// Horizontal concatenation of 2-D nodes with equal row counts.
    ConcatCols { parts: Vec<NodeId> },
    /// Concatenation of 1-D nodes.
    ConcatVec { parts: Vec<NodeId> },
    /// Channel concatenation of [Ki×H×W] nodes with equal spatial extents.
    ConcatChannels { parts: Vec<NodeId> },
    /// View a node as a 1-D vector.
    Flatten { x: NodeId },
    /// Rows of `table` selected by token ids.
    Embedding { table: NodeId, ids: Vec<usize> },
    /// Per-row normalization of [n×d] over the last axis.
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, eps: f64 },
    /// Row `index` of a 2-D node as a vector.
    Row { x: NodeId, index: usize },
    /// Element `index` of a vector as a scalar.
    Pick { x: NodeId, index: usize },
    Sum { x: NodeId },
    MeanAll { x: NodeId },
    /// Mean of scalar nodes (batch loss).
    MeanOf { parts: Vec<NodeId> },
    /// Numerically stable −log softmax(logits)[label].
    CrossEntropyLogits { logits: NodeId, label: usize },
}

/// Records a computation as an ordered list of operations.
///
/// Inputs of every node precede it, so a single reverse sweep in
/// [`Tape::backward`] accumulates all gradients. A tape is confined to one
/// thread and can run backward once; build a fresh tape per forward pass.
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), backward_done: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Copy a tensor onto the tape as a leaf node.
    pub fn leaf(&mut self, tensor: &Tensor) -> NodeId {
        self.push(tensor.data().to_vec(), tensor.shape().to_vec(), Op::Leaf)
    }

    pub fn leaf_from(&mut self, data: Vec<f64>, shape: Vec<usize>) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "leaf shape {shape:?} wants {numel} elements, data has {}",
                data.len()
            )));
        }
        Ok(self.push(data, shape, Op::Leaf))
    }

    pub fn data(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].data
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id].shape
    }

    /// Copy a node out as a plain tensor.
    pub fn tensor(&self, id: NodeId) -> Tensor {
        Tensor::new(self.nodes[id].shape.clone(), self.nodes[id].data.clone())
            .expect("tape nodes are well-formed")
    }

    /// Gradient of the loss w.r.t. node `id`; valid after [`Tape::backward`].
    pub fn grad(&self, id: NodeId) -> Result<&[f64]> {
        if !self.backward_done {
            return Err(Error::Input("gradients requested before backward".into()));
        }
        self.check_id(id)?;
        Ok(&self.nodes[id].grad)
    }

    fn check_id(&self, id: NodeId) -> Result<()> {
        if id >= self.nodes.len() {
            return Err(Error::Input(format!(
                "dangling node id {id} on a tape of {} nodes",
                self.nodes.len()
            )));
        }
        Ok(())
    }

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, op: Op) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { data, shape, grad: Vec::new(), op });
        id
    }

    fn dims2(&self, id: NodeId) -> Result<(usize, usize)> {
        let s = &self.nodes[id].shape;
        if s.len() != 2 {
            return Err(Error::Shape(format!("expected a 2-D node, got shape {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    fn dims3(&self, id: NodeId) -> Result<(usize, usize, usize)> {
        let s = &self.nodes[id].shape;
        if s.len() != 3 {
            return Err(Error::Shape(format!("expected a 3-D node, got shape {s:?}")));
        }
        Ok((s[0], s[1], s[2]))
    }

    // ── Forward operations ──────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, ka) = self.dims2(a)?;
        let (kb, n) = self.dims2(b)?;
        if ka != kb {
            return Err(Error::Shape(format!(
                "matmul inner dimensions differ: {:?} vs {:?}",
                self.nodes[a].shape, self.nodes[b].shape
            )));
        }
        let out = matmul_raw(&self.nodes[a].data, &self.nodes[b].data, m, ka, n);
        Ok(self.push(out, vec![m, n], Op::MatMul { a, b }))
    }

    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims2(m)?;
        if self.nodes[v].shape != [c] {
            return Err(Error::Shape(format!(
                "matvec wants a vector of length {c}, got shape {:?}",
                self.nodes[v].shape
            )));
        }
        let md = &self.nodes[m].data;
        let vd = &self.nodes[v].data;
        let mut out = vec![0.0; r];
        for i in 0..r {
            let row = &md[i * c..(i + 1) * c];
            out[i] = row.iter().zip(vd).map(|(a, b)| a * b).sum();
        }
        Ok(self.push(out, vec![r], Op::MatVec { m, v }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.nodes[a].shape != self.nodes[b].shape {
            return Err(Error::Shape(format!(
                "add of mismatched shapes {:?} and {:?}",
                self.nodes[a].shape, self.nodes[b].shape
            )));
        }
        let out: Vec<f64> =
            self.nodes[a].data.iter().zip(&self.nodes[b].data).map(|(x, y)| x + y).collect();
        let shape = self.nodes[a].shape.clone();
        Ok(self.push(out, shape, Op::Add { a, b }))
    }

    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims2(x)?;
        if self.nodes[b].shape != [c] {
            return Err(Error::Shape(format!(
                "bias of shape {:?} does not match {c} columns",
                self.nodes[b].shape
            )));
        }
        let mut out = self.nodes[x].data.clone();
        for row in 0..r {
            for col in 0..c {
                out[row * c + col] += self.nodes[b].data[col];
            }
        }
        Ok(self.push(out, vec![r, c], Op::AddBias { x, b }))
    }

    pub fn channel_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (k, h, w) = self.dims3(x)?;
        if self.nodes[b].shape != [k] {
            return Err(Error::Shape(format!(
                "channel bias of shape {:?} does not match {k} channels",
                self.nodes[b].shape
            )));
        }
        let mut out = self.nodes[x].data.clone();
        for ch in 0..k {
            let bias = self.nodes[b].data[ch];
            for v in &mut out[ch * h * w..(ch + 1) * h * w] {
                *v += bias;
            }
        }
        Ok(self.push(out, vec![k, h, w], Op::ChannelBias { x, b }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.nodes[a].shape != self.nodes[b].shape {
            return Err(Error::Shape(format!(
                "mul of mismatched shapes {:?} and {:?}",
                self.nodes[a].shape, self.nodes[b].shape
            )));
        }
        let out: Vec<f64> =
            self.nodes[a].data.iter().zip(&self.nodes[b].data).map(|(x, y)| x * y).collect();
        let shape = self.nodes[a].shape.clone();
        Ok(self.push(out, shape, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let out: Vec<f64> = self.nodes[x].data.iter().map(|v| v * factor).collect();
        let shape = self.nodes[x].shape.clone();
        self.push(out, shape, Op::Scale { x, factor })
    }

    /// Add a constant offset vector (same numel); used for attention masking.
    pub fn add_const(&mut self, x: NodeId, offsets: Vec<f64>) -> Result<NodeId> {
        if offsets.len() != self.nodes[x].data.len() {
            return Err(Error::Shape(format!(
                "offset vector of length {} against node of {} elements",
                offsets.len(),
                self.nodes[x].data.len()
            )));
        }
        let out: Vec<f64> = self.nodes[x].data.iter().zip(&offsets).map(|(v, o)| v + o).collect();
        let shape = self.nodes[x].shape.clone();
        Ok(self.push(out, shape, Op::AddConst { x }))
    }

    fn mul_const(&mut self, x: NodeId, mask: Vec<f64>) -> NodeId {
        debug_assert_eq!(mask.len(), self.nodes[x].data.len());
        let out: Vec<f64> = self.nodes[x].data.iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.nodes[x].shape.clone();
        self.push(out, shape, Op::MulConst { x, mask })
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out: Vec<f64> = self.nodes[x].data.iter().map(|&v| v.max(0.0)).collect();
        let shape = self.nodes[x].shape.clone();
        self.push(out, shape, Op::Relu { x })
    }

    /// Numerically stabilized softmax along the last axis.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let shape = self.nodes[x].shape.clone();
        let n = *shape.last().expect("softmax needs at least one axis");
        let mut out = self.nodes[x].data.clone();
        for row in out.chunks_mut(n) {
            softmax_row(row);
        }
        self.push(out, shape, Op::Softmax { x })
    }

    /// Cross-correlation convolution. Output extent follows
    /// `(H + 2·padding − kh) / stride + 1` (floor), and must be positive.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernels: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let (c, h, w) = self.dims3(input)?;
        let ks = &self.nodes[kernels].shape;
        if ks.len() != 4 || ks[1] != c {
            return Err(Error::Shape(format!(
                "kernels of shape {ks:?} against input of shape {:?}",
                self.nodes[input].shape
            )));
        }
        let (k, kh, kw) = (ks[0], ks[2], ks[3]);
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be positive".into()));
        }
        let hp = h + 2 * padding;
        let wp = w + 2 * padding;
        if kh > hp || kw > wp {
            return Err(Error::Config(format!(
                "kernel {kh}×{kw} exceeds padded input {hp}×{wp}"
            )));
        }
        let oh = (hp - kh) / stride + 1;
        let ow = (wp - kw) / stride + 1;
        if oh == 0 || ow == 0 {
            return Err(Error::Config(format!(
                "conv2d output extent {oh}×{ow} is not positive"
            )));
        }

        let padded = pad_spatial(&self.nodes[input].data, c, h, w, padding);
        let kd = &self.nodes[kernels].data;
        let mut out = vec![0.0; k * oh * ow];
        for ko in 0..k {
            for ci in 0..c {
                let kern = &kd[(ko * c + ci) * kh * kw..(ko * c + ci + 1) * kh * kw];
                let plane = &padded[ci * hp * wp..(ci + 1) * hp * wp];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for dy in 0..kh {
                            let row = &plane[(oy * stride + dy) * wp + ox * stride..];
                            let krow = &kern[dy * kw..(dy + 1) * kw];
                            for dx in 0..kw {
                                acc += row[dx] * krow[dx];
                            }
                        }
                        out[(ko * oh + oy) * ow + ox] += acc;
                    }
                }
            }
        }
        Ok(self.push(out, vec![k, oh, ow], Op::Conv2d { input, kernels, stride, padding }))
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let (k, h, w) = self.dims3(x)?;
        let inv = 1.0 / (h * w) as f64;
        let d = &self.nodes[x].data;
        let out: Vec<f64> =
            (0..k).map(|ch| d[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() * inv).collect();
        Ok(self.push(out, vec![k], Op::GlobalAvgPool { x }))
    }

    /// 2×2 max pooling, stride 2; trailing odd rows/columns are dropped.
    pub fn max_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        let (k, h, w) = self.dims3(x)?;
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(Error::Config(format!("max_pool2 on {h}×{w} input has empty output")));
        }
        let d = &self.nodes[x].data;
        let mut out = vec![0.0; k * oh * ow];
        let mut argmax = vec![0usize; k * oh * ow];
        for ch in 0..k {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = 0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = (ch * h + oy * 2 + dy) * w + ox * 2 + dx;
                            if d[idx] > best {
                                best = d[idx];
                                best_at = idx;
                            }
                        }
                    }
                    out[(ch * oh + oy) * ow + ox] = best;
                    argmax[(ch * oh + oy) * ow + ox] = best_at;
                }
            }
        }
        Ok(self.push(out, vec![k, oh, ow], Op::MaxPool2 { x, argmax }))
    }

    /// Channel Gram matrix of conv features, normalized by K·H·W.
    pub fn gram_matrix(&mut self, x: NodeId) -> Result<NodeId> {
        let (k, h, w) = self.dims3(x)?;
        let hw = h * w;
        let norm = 1.0 / (k * hw) as f64;
        let d = &self.nodes[x].data;
        let mut out = vec![0.0; k * k];
        for i in 0..k {
            let fi = &d[i * hw..(i + 1) * hw];
            for j in 0..k {
                let fj = &d[j * hw..(j + 1) * hw];
                let dot: f64 = fi.iter().zip(fj).map(|(a, b)| a * b).sum();
                out[i * k + j] = dot * norm;
            }
        }
        Ok(self.push(out, vec![k, k], Op::Gram { x }))
    }

    /// Upper triangle (including diagonal) of a square matrix, row by row.
    pub fn triu(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims2(x)?;
        if r != c {
            return Err(Error::Shape(format!("triu of non-square shape {r}×{c}")));
        }
        let d = &self.nodes[x].data;
        let mut out = Vec::with_capacity(r * (r + 1) / 2);
        for i in 0..r {
            for j in i..r {
                out.push(d[i * c + j]);
            }
        }
        let n = out.len();
        Ok(self.push(out, vec![n], Op::TriU { x }))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.dims2(x)?;
        let d = &self.nodes[x].data;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        Ok(self.push(out, vec![c, r], Op::Transpose { x }))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.dims2(x)?;
        if start + len > c {
            return Err(Error::Shape(format!(
                "column slice {start}..{} out of {c} columns",
                start + len
            )));
        }
        let d = &self.nodes[x].data;
        let mut out = Vec::with_capacity(r * len);
        for row in 0..r {
            out.extend_from_slice(&d[row * c + start..row * c + start + len]);
        }
        Ok(self.push(out, vec![r, len], Op::SliceCols { x, start, len }))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_cols of no parts".into()));
        }
        let (r, _) = self.dims2(parts[0])?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (rp, cp) = self.dims2(p)?;
            if rp != r {
                return Err(Error::Shape(format!(
                    "concat_cols row mismatch: {r} vs {rp}"
                )));
            }
            widths.push(cp);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for row in 0..r {
            for (&p, &cp) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.nodes[p].data[row * cp..(row + 1) * cp]);
            }
        }
        Ok(self.push(out, vec![r, total], Op::ConcatCols { parts: parts.to_vec() }))
    }

    pub fn concat_vec(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_vec of no parts".into()));
        }
        let mut out = Vec::new();
        for &p in parts {
            if self.nodes[p].shape.len() != 1 {
                return Err(Error::Shape(format!(
                    "concat_vec expects vectors, got shape {:?}",
                    self.nodes[p].shape
                )));
            }
            out.extend_from_slice(&self.nodes[p].data);
        }
        let n = out.len();
        Ok(self.push(out, vec![n], Op::ConcatVec { parts: parts.to_vec() }))
    }

    /// Channel-major layout makes channel concatenation a buffer append.
    pub fn concat_channels(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_channels of no parts".into()));
        }
        let (_, h, w) = self.dims3(parts[0])?;
        let mut channels = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (kp, hp, wp) = self.dims3(p)?;
            if (hp, wp) != (h, w) {
                return Err(Error::Shape(format!(
                    "concat_channels spatial mismatch: {h}×{w} vs {hp}×{wp}"
                )));
            }
            channels += kp;
            out.extend_from_slice(&self.nodes[p].data);
        }
        Ok(self.push(out, vec![channels, h, w], Op::ConcatChannels { parts: parts.to_vec() }))
    }

    pub fn flatten(&mut self, x: NodeId) -> NodeId {
        let data = self.nodes[x].data.clone();
        let n = data.len();
        self.push(data, vec![n], Op::Flatten { x })
    }

    /// Select rows of an embedding table by id.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let (v, d) = self.dims2(table)?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Input(format!("token id {bad} outside vocabulary of {v}")));
        }
        let td = &self.nodes[table].data;
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&td[i * d..(i + 1) * d]);
        }
        let n = ids.len();
        Ok(self.push(out, vec![n, d], Op::Embedding { table, ids: ids.to_vec() }))
    }

    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> Result<NodeId> {
        let (r, c) = self.dims2(x)?;
        if self.nodes[gamma].shape != [c] || self.nodes[beta].shape != [c] {
            return Err(Error::Shape(format!(
                "layer_norm scale/shift must have shape [{c}]"
            )));
        }
        let d = &self.nodes[x].data;
        let g = &self.nodes[gamma].data;
        let b = &self.nodes[beta].data;
        let mut out = vec![0.0; r * c];
        for row in 0..r {
            let xs = &d[row * c..(row + 1) * c];
            let mean = xs.iter().sum::<f64>() / c as f64;
            let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            for col in 0..c {
                out[row * c + col] = (xs[col] - mean) * inv_std * g[col] + b[col];
            }
        }
        Ok(self.push(out, vec![r, c], Op::LayerNorm { x, gamma, beta, eps }))
    }

    pub fn row(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let (r, c) = self.dims2(x)?;
        if index >= r {
            return Err(Error::Shape(format!("row {index} of a {r}-row node")));
        }
        let out = self.nodes[x].data[index * c..(index + 1) * c].to_vec();
        Ok(self.push(out, vec![c], Op::Row { x, index }))
    }

    pub fn pick(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        if index >= self.nodes[x].data.len() {
            return Err(Error::Shape(format!(
                "pick index {index} of a node with {} elements",
                self.nodes[x].data.len()
            )));
        }
        let out = vec![self.nodes[x].data[index]];
        Ok(self.push(out, vec![1], Op::Pick { x, index }))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.nodes[x].data.iter().sum();
        self.push(vec![total], vec![1], Op::Sum { x })
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.nodes[x].data.iter().sum();
        let n = self.nodes[x].data.len() as f64;
        self.push(vec![total / n], vec![1], Op::MeanAll { x })
    }

    /// Mean of scalar nodes; the batch-loss reduction.
    pub fn mean_of(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("mean_of of no parts".into()));
        }
        for &p in parts {
            if self.nodes[p].data.len() != 1 {
                return Err(Error::Shape("mean_of expects scalar nodes".into()));
            }
        }
        let total: f64 = parts.iter().map(|&p| self.nodes[p].data[0]).sum();
        let mean = total / parts.len() as f64;
        Ok(self.push(vec![mean], vec![1], Op::MeanOf { parts: parts.to_vec() }))
    }

    /// −log softmax(logits)[label], computed via log-sum-exp.
    pub fn cross_entropy_logits(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let d = &self.nodes[logits].data;
        if self.nodes[logits].shape.len() != 1 || label >= d.len() {
            return Err(Error::Shape(format!(
                "cross entropy label {label} against logits of shape {:?}",
                self.nodes[logits].shape
            )));
        }
        let max = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + d.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - d[label];
        Ok(self.push(vec![loss], vec![1], Op::CrossEntropyLogits { logits, label }))
    }

    /// Zero each element with probability `rate` and scale survivors by
    /// 1/(1−rate); identity when not training or `rate` is zero.
    pub fn dropout<R: Rng>(
        &mut self,
        x: NodeId,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.nodes[x].data.len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep_scale })
            .collect();
        Ok(self.mul_const(x, mask))
    }

    /// Scaled dot-product attention over `heads` heads.
    ///
    /// `q`, `k`, `v` are [n×d] with d divisible by `heads`. When `mask` is
    /// given, logits toward positions with `mask[j] == false` are pushed to
    /// [`MASK_NEG`] before the softmax. Returns the output node and a
    /// [heads×n×n] tensor of attention weights.
    pub fn multi_head_attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        mask: Option<&[bool]>,
    ) -> Result<(NodeId, Tensor)> {
        let (n, d) = self.dims2(q)?;
        for &other in &[k, v] {
            if self.nodes[other].shape != [n, d] {
                return Err(Error::Shape(format!(
                    "attention inputs disagree: {:?} vs {:?}",
                    self.nodes[q].shape, self.nodes[other].shape
                )));
            }
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(format!(
                "model width {d} is not divisible by {heads} heads"
            )));
        }
        if let Some(m) = mask {
            if m.len() != n {
                return Err(Error::Shape(format!(
                    "attention mask of length {} against {n} positions",
                    m.len()
                )));
            }
        }
        let dh = d / heads;
        let scale_factor = 1.0 / (dh as f64).sqrt();
        let offsets = mask.map(|m| {
            let mut o = vec![0.0; n * n];
            for row in 0..n {
                for (col, &keep) in m.iter().enumerate() {
                    if !keep {
                        o[row * n + col] = MASK_NEG;
                    }
                }
            }
            o
        });

        let mut outputs = Vec::with_capacity(heads);
        let mut weights = Vec::with_capacity(heads * n * n);
        for h in 0..heads {
            let qh = self.slice_cols(q, h * dh, dh)?;
            let kh = self.slice_cols(k, h * dh, dh)?;
            let vh = self.slice_cols(v, h * dh, dh)?;
            let kt = self.transpose(kh)?;
            let scores = self.matmul(qh, kt)?;
            let scaled = self.scale(scores, scale_factor);
            let masked = match &offsets {
                Some(o) => self.add_const(scaled, o.clone())?,
                None => scaled,
            };
            let attn = self.softmax(masked);
            weights.extend_from_slice(&self.nodes[attn].data);
            outputs.push(self.matmul(attn, vh)?);
        }
        let out = self.concat_cols(&outputs)?;
        let weights = Tensor::new(vec![heads, n, n], weights)?;
        Ok((out, weights))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Accumulate gradients of a scalar loss into every node by reverse
    /// traversal. May be called once per tape.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        self.check_id(loss)?;
        if self.backward_done {
            return Err(Error::Input(
                "backward already ran on this tape; record a fresh tape".into(),
            ));
        }
        if self.nodes[loss].data.len() != 1 {
            return Err(Error::Shape(format!(
                "loss must be scalar, got shape {:?}",
                self.nodes[loss].shape
            )));
        }
        for node in &mut self.nodes {
            node.grad = vec![0.0; node.data.len()];
        }
        self.nodes[loss].grad[0] = 1.0;
        self.backward_done = true;

        for id in (0..self.nodes.len()).rev() {
            // Split off this node's gradient so the borrow checker lets us
            // write into earlier nodes.
            let grad = std::mem::take(&mut self.nodes[id].grad);
            self.backprop_node(id, &grad);
            self.nodes[id].grad = grad;
        }
        Ok(())
    }

    fn backprop_node(&mut self, id: NodeId, grad: &[f64]) {
        match &self.nodes[id].op {
            Op::Leaf => {}

            &Op::MatMul { a, b } => {
                let (m, k) = (self.nodes[a].shape[0], self.nodes[a].shape[1]);
                let n = self.nodes[b].shape[1];
                let bt = transpose_raw(&self.nodes[b].data, k, n);
                let da = matmul_raw(grad, &bt, m, n, k);
                let at = transpose_raw(&self.nodes[a].data, m, k);
                let db = matmul_raw(&at, grad, k, m, n);
                accumulate(&mut self.nodes[a].grad, &da);
                accumulate(&mut self.nodes[b].grad, &db);
            }

            &Op::MatVec { m, v } => {
                let (r, c) = (self.nodes[m].shape[0], self.nodes[m].shape[1]);
                let vd = self.nodes[v].data.clone();
                let md = self.nodes[m].data.clone();
                for i in 0..r {
                    let g = grad[i];
                    for j in 0..c {
                        self.nodes[m].grad[i * c + j] += g * vd[j];
                        self.nodes[v].grad[j] += g * md[i * c + j];
                    }
                }
            }

            &Op::Add { a, b } => {
                accumulate(&mut self.nodes[a].grad, grad);
                accumulate(&mut self.nodes[b].grad, grad);
            }

            &Op::AddBias { x, b } => {
                accumulate(&mut self.nodes[x].grad, grad);
                let c = self.nodes[b].data.len();
                for (i, g) in grad.iter().enumerate() {
                    self.nodes[b].grad[i % c] += g;
                }
            }

            &Op::ChannelBias { x, b } => {
                accumulate(&mut self.nodes[x].grad, grad);
                let (k, h, w) =
                    (self.nodes[x].shape[0], self.nodes[x].shape[1], self.nodes[x].shape[2]);
                for ch in 0..k {
                    self.nodes[b].grad[ch] += grad[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>();
                }
            }

            &Op::Mul { a, b } => {
                let ad = self.nodes[a].data.clone();
                let bd = self.nodes[b].data.clone();
                for (i, g) in grad.iter().enumerate() {
                    self.nodes[a].grad[i] += g * bd[i];
                    self.nodes[b].grad[i] += g * ad[i];
                }
            }

            &Op::Scale { x, factor } => {
                for (i, g) in grad.iter().enumerate() {
                    self.nodes[x].grad[i] += g * factor;
                }
            }

            &Op::AddConst { x } => {
                accumulate(&mut self.nodes[x].grad, grad);
            }

            Op::MulConst { x, mask } => {
                let x = *x;
                let mask = mask.clone();
                for (i, g) in grad.iter().enumerate() {
                    self.nodes[x].grad[i] += g * mask[i];
                }
            }

            &Op::Relu { x } => {
                let xd = self.nodes[x].data.clone();
                for (i, g) in grad.iter().enumerate() {
                    if xd[i] > 0.0 {
                        self.nodes[x].grad[i] += g;
                    }
                }
            }

            &Op::Softmax { x } => {
                let n = *self.nodes[id].shape.last().unwrap();
                let out = self.nodes[id].data.clone();
                for (row_idx, (g_row, s_row)) in grad.chunks(n).zip(out.chunks(n)).enumerate() {
                    let dot: f64 = g_row.iter().zip(s_row).map(|(g, s)| g * s).sum();
                    for col in 0..n {
                        self.nodes[x].grad[row_idx * n + col] +=
                            s_row[col] * (g_row[col] - dot);
                    }
                }
            }

            &Op::Conv2d { input, kernels, stride, padding } => {
                self.backprop_conv2d(id, input, kernels, stride, padding, grad);
            }

            &Op::GlobalAvgPool { x } => {
                let (k, h, w) =
                    (self.nodes[x].shape[0], self.nodes[x].shape[1], self.nodes[x].shape[2]);
                let inv = 1.0 / (h * w) as f64;
                for ch in 0..k {
                    let g = grad[ch] * inv;
                    for v in &mut self.nodes[x].grad[ch * h * w..(ch + 1) * h * w] {
                        *v += g;
                    }
                }
            }

            Op::MaxPool2 { x, argmax } => {
                let x = *x;
                let argmax = argmax.clone();
                for (i, g) in grad.iter().enumerate() {
                    self.nodes[x].grad[argmax[i]] += g;
                }
            }

            &Op::Gram { x } => {
                let (k, h, w) =
                    (self.nodes[x].shape[0], self.nodes[x].shape[1], self.nodes[x].shape[2]);
                let hw = h * w;
                let norm = 1.0 / (k * hw) as f64;
                let xd = self.nodes[x].data.clone();
                for i in 0..k {
                    for j in 0..k {
                        let g = (grad[i * k + j] + grad[j * k + i]) * norm;
                        if g == 0.0 {
                            continue;
                        }
                        for p in 0..hw {
                            self.nodes[x].grad[i * hw + p] += g * xd[j * hw + p];
                        }
                    }
                }
            }

            &Op::TriU { x } => {
                let k = self.nodes[x].shape[0];
                let mut t = 0;
                for i in 0..k {
                    for j in i..k {
                        self.nodes[x].grad[i * k + j] += grad[t];
                        t += 1;
                    }
                }
            }

            &Op::Transpose { x } => {
                let (r, c) = (self.nodes[x].shape[0], self.nodes[x].shape[1]);
                for i in 0..r {
                    for j in 0..c {
                        self.nodes[x].grad[i * c + j] += grad[j * r + i];
                    }
                }
            }

            &Op::SliceCols { x, start, len } => {
                let c = self.nodes[x].shape[1];
                let r = self.nodes[x].shape[0];
                for row in 0..r {
                    for col in 0..len {
                        self.nodes[x].grad[row * c + start + col] += grad[row * len + col];
                    }
                }
            }

            Op::ConcatCols { parts } => {
                let parts = parts.clone();
                let r = self.nodes[id].shape[0];
                let total = self.nodes[id].shape[1];
                let mut offset = 0;
                for p in parts {
                    let cp = self.nodes[p].shape[1];
                    for row in 0..r {
                        for col in 0..cp {
                            self.nodes[p].grad[row * cp + col] +=
                                grad[row * total + offset + col];
                        }
                    }
                    offset += cp;
                }
            }

            Op::ConcatVec { parts } | Op::ConcatChannels { parts } => {
                let parts = parts.clone();
                let mut offset = 0;
                for p in parts {
                    let len = self.nodes[p].data.len();
                    accumulate(&mut self.nodes[p].grad, &grad[offset..offset + len]);
                    offset += len;
                }
            }

            &Op::Flatten { x } => {
                accumulate(&mut self.nodes[x].grad, grad);
            }

            Op::Embedding { table, ids } => {
                let table = *table;
                let ids = ids.clone();
                let d = self.nodes[table].shape[1];
                for (pos, &tok) in ids.iter().enumerate() {
                    for col in 0..d {
                        self.nodes[table].grad[tok * d + col] += grad[pos * d + col];
                    }
                }
            }

            &Op::LayerNorm { x, gamma, beta, eps } => {
                let (r, c) = (self.nodes[x].shape[0], self.nodes[x].shape[1]);
                let xd = self.nodes[x].data.clone();
                let gd = self.nodes[gamma].data.clone();
                for row in 0..r {
                    let xs = &xd[row * c..(row + 1) * c];
                    let g_row = &grad[row * c..(row + 1) * c];
                    let mean = xs.iter().sum::<f64>() / c as f64;
                    let var =
                        xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
                    let inv_std = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = xs.iter().map(|&v| (v - mean) * inv_std).collect();
                    let dxhat: Vec<f64> =
                        g_row.iter().zip(&gd).map(|(g, gm)| g * gm).collect();
                    let sum_dxhat: f64 = dxhat.iter().sum();
                    let sum_dxhat_xhat: f64 =
                        dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum();
                    let cf = c as f64;
                    for col in 0..c {
                        self.nodes[gamma].grad[col] += g_row[col] * xhat[col];
                        self.nodes[beta].grad[col] += g_row[col];
                        self.nodes[x].grad[row * c + col] += inv_std / cf
                            * (cf * dxhat[col] - sum_dxhat - xhat[col] * sum_dxhat_xhat);
                    }
                }
            }

            &Op::Row { x, index } => {
                let c = self.nodes[x].shape[1];
                for col in 0..c {
                    self.nodes[x].grad[index * c + col] += grad[col];
                }
            }

            &Op::Pick { x, index } => {
                self.nodes[x].grad[index] += grad[0];
            }

            &Op::Sum { x } => {
                let g = grad[0];
                for v in &mut self.nodes[x].grad {
                    *v += g;
                }
            }

            &Op::MeanAll { x } => {
                let g = grad[0] / self.nodes[x].data.len() as f64;
                for v in &mut self.nodes[x].grad {
                    *v += g;
                }
            }

            Op::MeanOf { parts } => {
                let parts = parts.clone();
                let g = grad[0] / parts.len() as f64;
                for p in parts {
                    self.nodes[p].grad[0] += g;
                }
            }

            &Op::CrossEntropyLogits { logits, label } => {
                let d = self.nodes[logits].data.clone();
                let max = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = d.iter().map(|&v| (v - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                for (i, e) in exps.iter().enumerate() {
                    let p = e / total;
                    let onehot = if i == label { 1.0 } else { 0.0 };
                    self.nodes[logits].grad[i] += grad[0] * (p - onehot);
                }
            }
        }
    }

    fn backprop_conv2d(
        &mut self,
        out: NodeId,
        input: NodeId,
        kernels: NodeId,
        stride: usize,
        padding: usize,
        grad: &[f64],
    ) {
        let (c, h, w) =
            (self.nodes[input].shape[0], self.nodes[input].shape[1], self.nodes[input].shape[2]);
        let ks = &self.nodes[kernels].shape;
        let (k, kh, kw) = (ks[0], ks[2], ks[3]);
        let (oh, ow) = (self.nodes[out].shape[1], self.nodes[out].shape[2]);
        let hp = h + 2 * padding;
        let wp = w + 2 * padding;

        let padded = pad_spatial(&self.nodes[input].data, c, h, w, padding);
        let kd = self.nodes[kernels].data.clone();
        let mut dkern = vec![0.0; kd.len()];
        let mut dpad = vec![0.0; c * hp * wp];

        for ko in 0..k {
            let gout = &grad[ko * oh * ow..(ko + 1) * oh * ow];
            for ci in 0..c {
                let plane = &padded[ci * hp * wp..(ci + 1) * hp * wp];
                let kern = &kd[(ko * c + ci) * kh * kw..(ko * c + ci + 1) * kh * kw];
                let dk = &mut dkern[(ko * c + ci) * kh * kw..(ko * c + ci + 1) * kh * kw];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = gout[oy * ow + ox];
                        if g == 0.0 {
                            continue;
                        }
                        for dy in 0..kh {
                            let base = (oy * stride + dy) * wp + ox * stride;
                            for dx in 0..kw {
                                dk[dy * kw + dx] += g * plane[base + dx];
                                dpad[ci * hp * wp + base + dx] += g * kern[dy * kw + dx];
                            }
                        }
                    }
                }
            }
        }

        accumulate(&mut self.nodes[kernels].grad, &dkern);
        // Crop the padding halo back off.
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    self.nodes[input].grad[(ci * h + y) * w + x] +=
                        dpad[ci * hp * wp + (y + padding) * wp + x + padding];
                }
            }
        }
    }
}

fn accumulate(target: &mut [f64], src: &[f64]) {
    for (t, s) in target.iter_mut().zip(src) {
        *t += s;
    }
}

fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
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

fn pad_spatial(data: &[f64], c: usize, h: usize, w: usize, padding: usize) -> Vec<f64> {
    if padding == 0 {
        return data.to_vec();
    }
    let hp = h + 2 * padding;
    let wp = w + 2 * padding;
    let mut out = vec![0.0; c * hp * wp];
    for ci in 0..c {
        for y in 0..h {
            let src = &data[(ci * h + y) * w..(ci * h + y + 1) * w];
            let dst_start = ci * hp * wp + (y + padding) * wp + padding;
            out[dst_start..dst_start + w].copy_from_slice(src);
        }
    }
    out
}
