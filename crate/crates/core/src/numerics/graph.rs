//! Eager forward computation with a recorded tape for reverse-mode
//! gradients. Node ids are handed out in creation order, which is already a
//! topological order, so backward is a single reverse sweep.

use super::param::{ParamId, ParamSet};
use super::tensor::{Float, Tensor};
use super::NumericsError;

pub type NodeId = usize;

const LN_EPS: Float = 1e-5;

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, Float),
    Softmax(NodeId),
    MaskedSoftmax(NodeId, Vec<bool>),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    },
    Gelu(NodeId),
    Embedding {
        table: NodeId,
        ids: Vec<usize>,
    },
    ConcatCols(Vec<NodeId>),
    SliceCols {
        x: NodeId,
        start: usize,
        width: usize,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        ignore: Option<usize>,
        probs: Tensor,
    },
    Sum(NodeId),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// One recorded computation. Parameters are bound in with [`Graph::param`];
/// after [`Graph::backward`], [`Graph::accumulate_grads`] adds their
/// gradients back into the [`ParamSet`].
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    bindings: Vec<(ParamId, NodeId)>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            bindings: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        self.nodes.len() - 1
    }

    fn check(&self, id: NodeId) -> Result<(), NumericsError> {
        if id >= self.nodes.len() {
            return Err(NumericsError::UnknownNode(id));
        }
        Ok(())
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    /// Gradient of the last backward pass, if the node was reached.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id).and_then(Option::as_ref)
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Bind a parameter's current value into the graph as a leaf.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> NodeId {
        let node = self.push(params.get(id).value.clone(), Op::Leaf);
        self.bindings.push((id, node));
        node
    }

    /// Add each bound parameter's node gradient into `params`.
    pub fn accumulate_grads(&self, params: &mut ParamSet) {
        for &(pid, node) in &self.bindings {
            if let Some(g) = self.grads[node].as_ref() {
                params.get_mut(pid).grad.add_assign(g);
            }
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.check(a)?;
        self.check(b)?;
        let (_n, k) = self.nodes[a].value.dims2("matmul")?;
        let (k2, _m) = self.nodes[b].value.dims2("matmul")?;
        if k != k2 {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                lhs: self.nodes[a].value.shape().to_vec(),
                rhs: self.nodes[b].value.shape().to_vec(),
            });
        }
        let value = matmul_nn(&self.nodes[a].value, &self.nodes[b].value);
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        self.check(a)?;
        let value = transpose(&self.nodes[a].value)?;
        Ok(self.push(value, Op::Transpose(a)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.check(a)?;
        self.check(b)?;
        if self.nodes[a].value.shape() != self.nodes[b].value.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "add",
                lhs: self.nodes[a].value.shape().to_vec(),
                rhs: self.nodes[b].value.shape().to_vec(),
            });
        }
        let mut value = self.nodes[a].value.clone();
        value.add_assign(&self.nodes[b].value);
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// `x + b` with `b` broadcast over the rows of `x`.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.check(x)?;
        self.check(b)?;
        let (_, m) = self.nodes[x].value.dims2("add_bias")?;
        if self.nodes[b].value.shape() != [m] {
            return Err(NumericsError::ShapeMismatch {
                op: "add_bias",
                lhs: self.nodes[x].value.shape().to_vec(),
                rhs: self.nodes[b].value.shape().to_vec(),
            });
        }
        let mut value = self.nodes[x].value.clone();
        for row in value.data_mut().chunks_mut(m) {
            for (v, bv) in row.iter_mut().zip(self.nodes[b].value.data()) {
                *v += bv;
            }
        }
        Ok(self.push(value, Op::AddBias(x, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.check(a)?;
        self.check(b)?;
        if self.nodes[a].value.shape() != self.nodes[b].value.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "mul",
                lhs: self.nodes[a].value.shape().to_vec(),
                rhs: self.nodes[b].value.shape().to_vec(),
            });
        }
        let mut value = self.nodes[a].value.clone();
        for (v, bv) in value.data_mut().iter_mut().zip(self.nodes[b].value.data()) {
            *v *= bv;
        }
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, c: Float) -> Result<NodeId, NumericsError> {
        self.check(a)?;
        let mut value = self.nodes[a].value.clone();
        value.data_mut().iter_mut().for_each(|v| *v *= c);
        Ok(self.push(value, Op::Scale(a, c)))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        self.check(a)?;
        let cols = last_axis(&self.nodes[a].value, "softmax")?;
        let mut value = self.nodes[a].value.clone();
        for row in value.data_mut().chunks_mut(cols) {
            softmax_row(row);
        }
        Ok(self.push(value, Op::Softmax(a)))
    }

    /// Softmax over the last axis restricted to `allowed` entries.
    /// Disallowed entries come out 0; a fully disallowed row comes out all
    /// zeros (and propagates no gradient).
    pub fn masked_softmax(&mut self, a: NodeId, allowed: Vec<bool>) -> Result<NodeId, NumericsError> {
        self.check(a)?;
        let cols = last_axis(&self.nodes[a].value, "masked_softmax")?;
        if allowed.len() != self.nodes[a].value.len() {
            return Err(NumericsError::BadArgument {
                op: "masked_softmax",
                reason: format!(
                    "mask has {} entries for tensor of {}",
                    allowed.len(),
                    self.nodes[a].value.len()
                ),
            });
        }
        let mut value = self.nodes[a].value.clone();
        for (row, mask) in value.data_mut().chunks_mut(cols).zip(allowed.chunks(cols)) {
            masked_softmax_row(row, mask);
        }
        Ok(self.push(value, Op::MaskedSoftmax(a, allowed)))
    }

    /// Layer norm over the last axis with learned gain and bias, eps 1e-5.
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    ) -> Result<NodeId, NumericsError> {
        self.check(x)?;
        self.check(gain)?;
        self.check(bias)?;
        let cols = last_axis(&self.nodes[x].value, "layer_norm")?;
        for (other, name) in [(gain, "gain"), (bias, "bias")] {
            if self.nodes[other].value.shape() != [cols] {
                return Err(NumericsError::BadArgument {
                    op: "layer_norm",
                    reason: format!(
                        "{name} shape {:?} does not match last axis {cols}",
                        self.nodes[other].value.shape()
                    ),
                });
            }
        }
        let mut value = self.nodes[x].value.clone();
        let g = self.nodes[gain].value.data();
        let b = self.nodes[bias].value.data();
        for row in value.data_mut().chunks_mut(cols) {
            let (mean, inv_std) = moments(row);
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv_std * g[j] + b[j];
            }
        }
        Ok(self.push(value, Op::LayerNorm { x, gain, bias }))
    }

    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        self.check(a)?;
        let mut value = self.nodes[a].value.clone();
        value.data_mut().iter_mut().for_each(|v| *v = gelu(*v));
        Ok(self.push(value, Op::Gelu(a)))
    }

    /// Gather rows of `table` by index.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId, NumericsError> {
        self.check(table)?;
        let (rows, cols) = self.nodes[table].value.dims2("embedding")?;
        if let Some(&bad) = ids.iter().find(|&&id| id >= rows) {
            return Err(NumericsError::BadArgument {
                op: "embedding",
                reason: format!("index {bad} out of range for table with {rows} rows"),
            });
        }
        let src = self.nodes[table].value.data();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            data.extend_from_slice(&src[id * cols..(id + 1) * cols]);
        }
        let value = Tensor::from_vec(&[ids.len(), cols], data)?;
        Ok(self.push(
            value,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Concatenate 2-D tensors along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::BadArgument {
                op: "concat_cols",
                reason: "no inputs".to_string(),
            });
        }
        let mut rows = None;
        let mut total = 0;
        for &p in parts {
            self.check(p)?;
            let (n, m) = self.nodes[p].value.dims2("concat_cols")?;
            match rows {
                None => rows = Some(n),
                Some(r) if r != n => {
                    return Err(NumericsError::ShapeMismatch {
                        op: "concat_cols",
                        lhs: vec![r],
                        rhs: vec![n],
                    })
                }
                _ => {}
            }
            total += m;
        }
        let rows = rows.unwrap();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                let m = self.nodes[p].value.shape()[1];
                data.extend_from_slice(&self.nodes[p].value.data()[i * m..(i + 1) * m]);
            }
        }
        let value = Tensor::from_vec(&[rows, total], data)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    /// Columns `[start, start+width)` of a 2-D tensor.
    pub fn slice_cols(
        &mut self,
        x: NodeId,
        start: usize,
        width: usize,
    ) -> Result<NodeId, NumericsError> {
        self.check(x)?;
        let (rows, cols) = self.nodes[x].value.dims2("slice_cols")?;
        if start + width > cols {
            return Err(NumericsError::BadArgument {
                op: "slice_cols",
                reason: format!("slice {start}..{} out of {cols} cols", start + width),
            });
        }
        let src = self.nodes[x].value.data();
        let mut data = Vec::with_capacity(rows * width);
        for i in 0..rows {
            data.extend_from_slice(&src[i * cols + start..i * cols + start + width]);
        }
        let value = Tensor::from_vec(&[rows, width], data)?;
        Ok(self.push(value, Op::SliceCols { x, start, width }))
    }

    /// Mean cross-entropy between `logits` rows and target class ids,
    /// skipping positions whose target equals `ignore`.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        ignore: Option<usize>,
    ) -> Result<NodeId, NumericsError> {
        self.check(logits)?;
        let (rows, cols) = self.nodes[logits].value.dims2("cross_entropy")?;
        if targets.len() != rows {
            return Err(NumericsError::BadArgument {
                op: "cross_entropy",
                reason: format!("{} targets for {rows} logit rows", targets.len()),
            });
        }
        let live: Vec<usize> = targets
            .iter()
            .enumerate()
            .filter(|&(_, &t)| Some(t) != ignore)
            .map(|(i, _)| i)
            .collect();
        if live.is_empty() {
            return Err(NumericsError::NoTargets);
        }
        if let Some(&bad) = live.iter().map(|&i| &targets[i]).find(|&&t| t >= cols) {
            return Err(NumericsError::BadArgument {
                op: "cross_entropy",
                reason: format!("target class {bad} out of range for {cols} classes"),
            });
        }
        let mut probs = self.nodes[logits].value.clone();
        let mut loss = 0.0;
        for (i, row) in probs.data_mut().chunks_mut(cols).enumerate() {
            let lse = log_sum_exp(row);
            if Some(targets[i]) != ignore {
                loss -= row[targets[i]] - lse;
            }
            // Keep the probabilities for backward.
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        loss /= live.len() as Float;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                ignore,
                probs,
            },
        ))
    }

    /// Sum of all entries, as a scalar node.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        self.check(a)?;
        let total: Float = self.nodes[a].value.data().iter().sum();
        Ok(self.push(Tensor::scalar(total), Op::Sum(a)))
    }

    /// Reverse sweep from a scalar loss. Gradients of any previous backward
    /// pass on this graph are discarded first.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), NumericsError> {
        self.check(loss)?;
        if !self.nodes[loss].value.is_scalar() {
            return Err(NumericsError::NonScalarLoss(
                self.nodes[loss].value.shape().to_vec(),
            ));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss] = Some(Tensor::scalar(1.0));

        for id in (0..=loss).rev() {
            let Some(out_grad) = self.grads[id].take() else {
                continue;
            };
            self.propagate(id, &out_grad);
            self.grads[id] = Some(out_grad);
        }
        Ok(())
    }

    fn add_grad(&mut self, id: NodeId, contribution: Tensor) {
        match &mut self.grads[id] {
            Some(existing) => existing.add_assign(&contribution),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn propagate(&mut self, id: NodeId, g: &Tensor) {
        // Ops are matched by value patterns that borrow no node data across
        // the add_grad calls; anything needed is cloned or recomputed.
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let da = matmul_nt(g, &self.nodes[b].value);
                let db = matmul_tn(&self.nodes[a].value, g);
                self.add_grad(a, da);
                self.add_grad(b, db);
            }
            Op::Transpose(a) => {
                let a = *a;
                let da = transpose(g).expect("transpose grad shape");
                self.add_grad(a, da);
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.add_grad(a, g.clone());
                self.add_grad(b, g.clone());
            }
            Op::AddBias(x, b) => {
                let (x, b) = (*x, *b);
                let m = self.nodes[b].value.len();
                let mut db = Tensor::zeros(&[m]);
                for row in g.data().chunks(m) {
                    for (acc, &gv) in db.data_mut().iter_mut().zip(row) {
                        *acc += gv;
                    }
                }
                self.add_grad(x, g.clone());
                self.add_grad(b, db);
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let mut da = g.clone();
                for (v, bv) in da.data_mut().iter_mut().zip(self.nodes[b].value.data()) {
                    *v *= bv;
                }
                let mut db = g.clone();
                for (v, av) in db.data_mut().iter_mut().zip(self.nodes[a].value.data()) {
                    *v *= av;
                }
                self.add_grad(a, da);
                self.add_grad(b, db);
            }
            Op::Scale(a, c) => {
                let (a, c) = (*a, *c);
                let mut da = g.clone();
                da.data_mut().iter_mut().for_each(|v| *v *= c);
                self.add_grad(a, da);
            }
            Op::Softmax(a) => {
                let a = *a;
                let cols = *self.nodes[id].value.shape().last().unwrap();
                let mut da = g.clone();
                for (grow, srow) in da
                    .data_mut()
                    .chunks_mut(cols)
                    .zip(self.nodes[id].value.data().chunks(cols))
                {
                    let dot: Float = grow.iter().zip(srow).map(|(gv, sv)| gv * sv).sum();
                    for (gv, sv) in grow.iter_mut().zip(srow) {
                        *gv = sv * (*gv - dot);
                    }
                }
                self.add_grad(a, da);
            }
            Op::MaskedSoftmax(a, allowed) => {
                let a = *a;
                let cols = *self.nodes[id].value.shape().last().unwrap();
                let allowed = allowed.clone();
                let mut da = g.clone();
                for ((grow, srow), mrow) in da
                    .data_mut()
                    .chunks_mut(cols)
                    .zip(self.nodes[id].value.data().chunks(cols))
                    .zip(allowed.chunks(cols))
                {
                    let dot: Float = grow
                        .iter()
                        .zip(srow)
                        .zip(mrow)
                        .filter(|&(_, &m)| m)
                        .map(|((gv, sv), _)| gv * sv)
                        .sum();
                    for ((gv, sv), &m) in grow.iter_mut().zip(srow).zip(mrow) {
                        *gv = if m { sv * (*gv - dot) } else { 0.0 };
                    }
                }
                self.add_grad(a, da);
            }
            Op::LayerNorm { x, gain, bias } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let cols = *self.nodes[x].value.shape().last().unwrap();
                let xv = self.nodes[x].value.clone();
                let gv = self.nodes[gain].value.clone();
                let mut dx = Tensor::zeros(xv.shape());
                let mut dgain = Tensor::zeros(&[cols]);
                let mut dbias = Tensor::zeros(&[cols]);
                for ((xrow, grow), dxrow) in xv
                    .data()
                    .chunks(cols)
                    .zip(g.data().chunks(cols))
                    .zip(dx.data_mut().chunks_mut(cols))
                {
                    let (mean, inv_std) = moments(xrow);
                    let m = cols as Float;
                    let mut mean_dxhat = 0.0;
                    let mut mean_dxhat_xhat = 0.0;
                    for j in 0..cols {
                        let xhat = (xrow[j] - mean) * inv_std;
                        let dxhat = grow[j] * gv.data()[j];
                        mean_dxhat += dxhat;
                        mean_dxhat_xhat += dxhat * xhat;
                        dgain.data_mut()[j] += grow[j] * xhat;
                        dbias.data_mut()[j] += grow[j];
                    }
                    mean_dxhat /= m;
                    mean_dxhat_xhat /= m;
                    for j in 0..cols {
                        let xhat = (xrow[j] - mean) * inv_std;
                        let dxhat = grow[j] * gv.data()[j];
                        dxrow[j] = inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                    }
                }
                self.add_grad(x, dx);
                self.add_grad(gain, dgain);
                self.add_grad(bias, dbias);
            }
            Op::Gelu(a) => {
                let a = *a;
                let mut da = g.clone();
                for (gv, &xv) in da.data_mut().iter_mut().zip(self.nodes[a].value.data()) {
                    *gv *= gelu_grad(xv);
                }
                self.add_grad(a, da);
            }
            Op::Embedding { table, ids } => {
                let table = *table;
                let ids = ids.clone();
                let cols = self.nodes[table].value.shape()[1];
                let mut dt = Tensor::zeros(self.nodes[table].value.shape());
                for (i, &row_id) in ids.iter().enumerate() {
                    let dst = &mut dt.data_mut()[row_id * cols..(row_id + 1) * cols];
                    let src = &g.data()[i * cols..(i + 1) * cols];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
                self.add_grad(table, dt);
            }
            Op::ConcatCols(parts) => {
                let parts = parts.clone();
                let rows = self.nodes[id].value.shape()[0];
                let total = self.nodes[id].value.shape()[1];
                let mut offset = 0;
                for p in parts {
                    let m = self.nodes[p].value.shape()[1];
                    let mut dp = Tensor::zeros(&[rows, m]);
                    for i in 0..rows {
                        let src = &g.data()[i * total + offset..i * total + offset + m];
                        dp.data_mut()[i * m..(i + 1) * m].copy_from_slice(src);
                    }
                    offset += m;
                    self.add_grad(p, dp);
                }
            }
            Op::SliceCols { x, start, width } => {
                let (x, start, width) = (*x, *start, *width);
                let (rows, cols) = (self.nodes[x].value.shape()[0], self.nodes[x].value.shape()[1]);
                let mut dx = Tensor::zeros(&[rows, cols]);
                for i in 0..rows {
                    let dst = &mut dx.data_mut()[i * cols + start..i * cols + start + width];
                    dst.copy_from_slice(&g.data()[i * width..(i + 1) * width]);
                }
                self.add_grad(x, dx);
            }
            Op::CrossEntropy {
                logits,
                targets,
                ignore,
                probs,
            } => {
                let logits = *logits;
                let ignore = *ignore;
                let targets = targets.clone();
                let cols = probs.shape()[1];
                let live = targets.iter().filter(|&&t| Some(t) != ignore).count() as Float;
                let scale = g.item() / live;
                let mut dl = probs.clone();
                for (i, row) in dl.data_mut().chunks_mut(cols).enumerate() {
                    if Some(targets[i]) == ignore {
                        row.iter_mut().for_each(|v| *v = 0.0);
                    } else {
                        row[targets[i]] -= 1.0;
                        row.iter_mut().for_each(|v| *v *= scale);
                    }
                }
                self.add_grad(logits, dl);
            }
            Op::Sum(a) => {
                let a = *a;
                let mut da = Tensor::zeros(self.nodes[a].value.shape());
                da.fill(g.item());
                self.add_grad(a, da);
            }
        }
    }
}

fn last_axis(t: &Tensor, op: &'static str) -> Result<usize, NumericsError> {
    match t.shape().last() {
        Some(&m) if m > 0 => Ok(m),
        _ => Err(NumericsError::BadArgument {
            op,
            reason: format!("needs a non-empty last axis, got shape {:?}", t.shape()),
        }),
    }
}

fn softmax_row(row: &mut [Float]) {
    let max = row.iter().cloned().fold(Float::NEG_INFINITY, Float::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn masked_softmax_row(row: &mut [Float], mask: &[bool]) {
    let mut max = Float::NEG_INFINITY;
    for (v, &m) in row.iter().zip(mask) {
        if m {
            max = max.max(*v);
        }
    }
    if max == Float::NEG_INFINITY {
        row.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut sum = 0.0;
    for (v, &m) in row.iter_mut().zip(mask) {
        if m {
            *v = (*v - max).exp();
            sum += *v;
        } else {
            *v = 0.0;
        }
    }
    for (v, &m) in row.iter_mut().zip(mask) {
        if m {
            *v /= sum;
        }
    }
}

fn log_sum_exp(row: &[Float]) -> Float {
    let max = row.iter().cloned().fold(Float::NEG_INFINITY, Float::max);
    let sum: Float = row.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

fn moments(row: &[Float]) -> (Float, Float) {
    let m = row.len() as Float;
    let mean = row.iter().sum::<Float>() / m;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<Float>() / m;
    (mean, 1.0 / (var + LN_EPS).sqrt())
}

const GELU_C: Float = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: Float = 0.044_715;

fn gelu(x: Float) -> Float {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: Float) -> Float {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// a [n,k] @ b [k,m] -> [n,m]
fn matmul_nn(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = (a.shape()[0], a.shape()[1]);
    let m = b.shape()[1];
    let mut out = Tensor::zeros(&[n, m]);
    let (ad, bd) = (a.data(), b.data());
    let od = out.data_mut();
    for i in 0..n {
        let orow = &mut od[i * m..(i + 1) * m];
        for (kk, &av) in ad[i * k..(i + 1) * k].iter().enumerate() {
            let brow = &bd[kk * m..(kk + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// a [n,m] @ b^T, b [k,m] -> [n,k]
fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, m) = (a.shape()[0], a.shape()[1]);
    let k = b.shape()[0];
    let mut out = Tensor::zeros(&[n, k]);
    let (ad, bd) = (a.data(), b.data());
    let od = out.data_mut();
    for i in 0..n {
        let arow = &ad[i * m..(i + 1) * m];
        for j in 0..k {
            let brow = &bd[j * m..(j + 1) * m];
            od[i * k + j] = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
        }
    }
    out
}

/// a^T @ b, a [n,k], b [n,m] -> [k,m]
fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = (a.shape()[0], a.shape()[1]);
    let m = b.shape()[1];
    let mut out = Tensor::zeros(&[k, m]);
    let (ad, bd) = (a.data(), b.data());
    let od = out.data_mut();
    for i in 0..n {
        let brow = &bd[i * m..(i + 1) * m];
        for (kk, &av) in ad[i * k..(i + 1) * k].iter().enumerate() {
            let orow = &mut od[kk * m..(kk + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose(t: &Tensor) -> Result<Tensor, NumericsError> {
    let (n, m) = t.dims2("transpose")?;
    let mut out = Tensor::zeros(&[m, n]);
    let src = t.data();
    let dst = out.data_mut();
    for i in 0..n {
        for j in 0..m {
            dst[j * n + i] = src[i * m + j];
        }
    }
    Ok(out)
}
