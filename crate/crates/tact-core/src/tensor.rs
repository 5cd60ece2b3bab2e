//! Minimal dense 2-D tensor engine with reverse-mode differentiation.
//!
//! Everything is row-major `f64`. A [`Tape`] records the forward
//! computation as an arena of nodes in topological order; [`Tape::backward`]
//! walks it in reverse, accumulating gradients by summation in tape order so
//! repeated runs are bit-identical. Every operation validates shapes and
//! rejects non-finite outputs.

use rand::Rng;

use crate::error::{Result, TactError};

/// A stored parameter or constant value outside any tape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    requires_grad: bool,
}

impl Tensor {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(TactError::Contract(format!(
                "tensor data length {} does not match shape {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Tensor {
            rows,
            cols,
            data,
            requires_grad: false,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            requires_grad: false,
        }
    }

    /// Seeded uniform init on `[-bound, bound]`.
    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Tensor {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Tensor {
            rows,
            cols,
            data,
            requires_grad: false,
        }
    }

    pub fn with_grad(mut self) -> Tensor {
        self.requires_grad = true;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Handle to a node on a tape.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct TensorId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(TensorId, TensorId),
    Hadamard(TensorId, TensorId),
    Add(TensorId, TensorId),
    Scale(TensorId, f64),
    ConcatCols(TensorId, TensorId),
    StackRows(Vec<TensorId>),
    Relu(TensorId),
    MeanRows(TensorId),
    Sum(TensorId),
    Transpose(TensorId),
    MaskedSoftmax(TensorId, Vec<bool>),
    IndexRow(TensorId, usize),
}

struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Single-threaded recording context for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    empty_mask_events: usize,
}

/// Gradients produced by [`Tape::backward`], indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. the node, if the node tracks gradients.
    pub fn get(&self, id: TensorId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Masked-softmax calls that saw an all-false mask.
    pub fn empty_mask_events(&self) -> usize {
        self.empty_mask_events
    }

    /// Copy a stored tensor onto the tape as a leaf.
    pub fn leaf(&mut self, t: &Tensor) -> TensorId {
        self.push(t.rows, t.cols, t.data.clone(), Op::Leaf, t.requires_grad)
    }

    /// Constant leaf (no gradient).
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<TensorId> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(TactError::Contract(format!(
                "constant data length {} does not match shape {rows}x{cols}",
                data.len()
            )));
        }
        Ok(self.push(rows, cols, data, Op::Leaf, false))
    }

    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.push(1, 1, vec![v], Op::Leaf, false)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> TensorId {
        self.push(rows, cols, vec![0.0; rows * cols], Op::Leaf, false)
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: TensorId) -> Result<f64> {
        let n = &self.nodes[id.0];
        if (n.rows, n.cols) != (1, 1) {
            return Err(TactError::Contract(format!(
                "expected scalar, got {}x{}",
                n.rows, n.cols
            )));
        }
        Ok(n.value[0])
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, needs_grad: bool) -> TensorId {
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
        if data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(TactError::Numeric(format!("non-finite value produced by {op}")))
        }
    }

    /// `a @ b` for `(r x k) @ (k x c)`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ca != rb {
            return Err(TactError::Shape {
                op: "matmul",
                left: (ra, ca),
                right: (rb, cb),
            });
        }
        let mut out = vec![0.0; ra * cb];
        {
            let av = &self.nodes[a.0].value;
            let bv = &self.nodes[b.0].value;
            for i in 0..ra {
                for k in 0..ca {
                    let aik = av[i * ca + k];
                    if aik == 0.0 {
                        continue;
                    }
                    let brow = &bv[k * cb..(k + 1) * cb];
                    let orow = &mut out[i * cb..(i + 1) * cb];
                    for (o, &bkj) in orow.iter_mut().zip(brow) {
                        *o += aik * bkj;
                    }
                }
            }
        }
        Self::check_finite("matmul", &out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(ra, cb, out, Op::MatMul(a, b), needs))
    }

    /// Elementwise product of same-shape tensors.
    pub fn hadamard(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if (ra, ca) != (rb, cb) {
            return Err(TactError::Shape {
                op: "hadamard",
                left: (ra, ca),
                right: (rb, cb),
            });
        }
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        Self::check_finite("hadamard", &out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(ra, ca, out, Op::Hadamard(a, b), needs))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if (ra, ca) != (rb, cb) {
            return Err(TactError::Shape {
                op: "add",
                left: (ra, ca),
                right: (rb, cb),
            });
        }
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        Self::check_finite("add", &out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(ra, ca, out, Op::Add(a, b), needs))
    }

    pub fn scale(&mut self, a: TensorId, s: f64) -> Result<TensorId> {
        let (ra, ca) = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|x| x * s).collect();
        Self::check_finite("scale", &out)?;
        let needs = self.needs(a);
        Ok(self.push(ra, ca, out, Op::Scale(a, s), needs))
    }

    /// `[a | b]` for same-row-count tensors.
    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(TactError::Shape {
                op: "concat_cols",
                left: (ra, ca),
                right: (rb, cb),
            });
        }
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            out.extend_from_slice(&self.nodes[a.0].value[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&self.nodes[b.0].value[i * cb..(i + 1) * cb]);
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(ra, ca + cb, out, Op::ConcatCols(a, b), needs))
    }

    /// Stack 1-row tensors of equal width into a matrix.
    pub fn stack_rows(&mut self, rows: &[TensorId]) -> Result<TensorId> {
        if rows.is_empty() {
            return Err(TactError::Contract("stack_rows needs at least one row".into()));
        }
        let (r0, c0) = self.shape(rows[0]);
        if r0 != 1 {
            return Err(TactError::Shape {
                op: "stack_rows",
                left: (r0, c0),
                right: (1, c0),
            });
        }
        let mut out = Vec::with_capacity(rows.len() * c0);
        let mut needs = false;
        for &r in rows {
            let (rr, rc) = self.shape(r);
            if (rr, rc) != (1, c0) {
                return Err(TactError::Shape {
                    op: "stack_rows",
                    left: (rr, rc),
                    right: (1, c0),
                });
            }
            out.extend_from_slice(&self.nodes[r.0].value);
            needs |= self.needs(r);
        }
        Ok(self.push(rows.len(), c0, out, Op::StackRows(rows.to_vec()), needs))
    }

    /// `max(0, x)` elementwise; the derivative at 0 is taken as 0.
    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        let (ra, ca) = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|x| x.max(0.0)).collect();
        let needs = self.needs(a);
        Ok(self.push(ra, ca, out, Op::Relu(a), needs))
    }

    /// Column means over all rows, producing a `1 x cols` row.
    pub fn mean_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let (ra, ca) = self.shape(a);
        let mut out = vec![0.0; ca];
        for i in 0..ra {
            for j in 0..ca {
                out[j] += self.nodes[a.0].value[i * ca + j];
            }
        }
        for o in &mut out {
            *o /= ra as f64;
        }
        Self::check_finite("mean_rows", &out)?;
        let needs = self.needs(a);
        Ok(self.push(1, ca, out, Op::MeanRows(a), needs))
    }

    /// Sum of all entries as a `1 x 1` scalar.
    pub fn sum(&mut self, a: TensorId) -> Result<TensorId> {
        let total: f64 = self.nodes[a.0].value.iter().sum();
        Self::check_finite("sum", &[total])?;
        let needs = self.needs(a);
        Ok(self.push(1, 1, vec![total], Op::Sum(a), needs))
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let (ra, ca) = self.shape(a);
        let mut out = vec![0.0; ra * ca];
        for i in 0..ra {
            for j in 0..ca {
                out[j * ra + i] = self.nodes[a.0].value[i * ca + j];
            }
        }
        let needs = self.needs(a);
        Ok(self.push(ca, ra, out, Op::Transpose(a), needs))
    }

    /// Softmax of a `1 x n` score row restricted to `mask`; entries outside
    /// the mask are exactly zero. An all-false mask yields the zero vector
    /// and is counted in [`Tape::empty_mask_events`].
    pub fn masked_softmax(&mut self, scores: TensorId, mask: &[bool]) -> Result<TensorId> {
        let (r, c) = self.shape(scores);
        if r != 1 || c != mask.len() {
            return Err(TactError::Shape {
                op: "masked_softmax",
                left: (r, c),
                right: (1, mask.len()),
            });
        }
        let sv = &self.nodes[scores.0].value;
        let mut out = vec![0.0; c];
        if mask.iter().any(|&m| m) {
            let max = sv
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..c {
                if mask[j] {
                    out[j] = (sv[j] - max).exp();
                    z += out[j];
                }
            }
            for o in &mut out {
                *o /= z;
            }
        } else {
            self.empty_mask_events += 1;
        }
        Self::check_finite("masked_softmax", &out)?;
        let needs = self.needs(scores);
        Ok(self.push(1, c, out, Op::MaskedSoftmax(scores, mask.to_vec()), needs))
    }

    /// Row `i` of a matrix as a `1 x cols` tensor.
    pub fn index_row(&mut self, a: TensorId, row: usize) -> Result<TensorId> {
        let (ra, ca) = self.shape(a);
        if row >= ra {
            return Err(TactError::Index(format!(
                "row {row} out of range for {ra}x{ca} tensor"
            )));
        }
        let out = self.nodes[a.0].value[row * ca..(row + 1) * ca].to_vec();
        let needs = self.needs(a);
        Ok(self.push(1, ca, out, Op::IndexRow(a, row), needs))
    }

    /// Reverse pass from a scalar loss. Gradients for every grad-tracking
    /// node are allocated up front (so unreachable parameters report zeros)
    /// and accumulated in reverse tape order.
    pub fn backward(&mut self, loss: TensorId) -> Result<Gradients> {
        let n = &self.nodes[loss.0];
        if (n.rows, n.cols) != (1, 1) {
            return Err(TactError::Contract(format!(
                "backward requires a 1x1 loss, got {}x{}",
                n.rows, n.cols
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = self
            .nodes
            .iter()
            .map(|node| {
                if node.needs_grad {
                    Some(vec![0.0; node.rows * node.cols])
                } else {
                    None
                }
            })
            .collect();
        if grads[loss.0].is_none() {
            // Loss does not depend on any parameter; all gradients are zero.
            return Ok(Gradients { grads });
        }
        grads[loss.0].as_mut().unwrap()[0] = 1.0;

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            match self.nodes[id].op.clone() {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (ra, ca) = self.shape(a);
                    let (_, cb) = self.shape(b);
                    if self.needs(a) {
                        let bv = &self.nodes[b.0].value;
                        let da = grads[a.0].as_mut().unwrap();
                        for i in 0..ra {
                            for k in 0..ca {
                                let mut acc = 0.0;
                                for j in 0..cb {
                                    acc += g[i * cb + j] * bv[k * cb + j];
                                }
                                da[i * ca + k] += acc;
                            }
                        }
                    }
                    if self.needs(b) {
                        let av = &self.nodes[a.0].value;
                        let db = grads[b.0].as_mut().unwrap();
                        for k in 0..ca {
                            for i in 0..ra {
                                let aik = av[i * ca + k];
                                if aik == 0.0 {
                                    continue;
                                }
                                for j in 0..cb {
                                    db[k * cb + j] += aik * g[i * cb + j];
                                }
                            }
                        }
                    }
                }
                Op::Hadamard(a, b) => {
                    if self.needs(a) {
                        let bv = &self.nodes[b.0].value;
                        let da = grads[a.0].as_mut().unwrap();
                        for (d, (gi, bi)) in da.iter_mut().zip(g.iter().zip(bv)) {
                            *d += gi * bi;
                        }
                    }
                    if self.needs(b) {
                        let av = &self.nodes[a.0].value;
                        let db = grads[b.0].as_mut().unwrap();
                        for (d, (gi, ai)) in db.iter_mut().zip(g.iter().zip(av)) {
                            *d += gi * ai;
                        }
                    }
                }
                Op::Add(a, b) => {
                    for side in [a, b] {
                        if self.needs(side) {
                            let ds = grads[side.0].as_mut().unwrap();
                            for (d, gi) in ds.iter_mut().zip(&g) {
                                *d += gi;
                            }
                        }
                    }
                }
                Op::Scale(a, s) => {
                    if self.needs(a) {
                        let da = grads[a.0].as_mut().unwrap();
                        for (d, gi) in da.iter_mut().zip(&g) {
                            *d += s * gi;
                        }
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (ra, ca) = self.shape(a);
                    let (_, cb) = self.shape(b);
                    if self.needs(a) {
                        let da = grads[a.0].as_mut().unwrap();
                        for i in 0..ra {
                            for j in 0..ca {
                                da[i * ca + j] += g[i * (ca + cb) + j];
                            }
                        }
                    }
                    if self.needs(b) {
                        let db = grads[b.0].as_mut().unwrap();
                        for i in 0..ra {
                            for j in 0..cb {
                                db[i * cb + j] += g[i * (ca + cb) + ca + j];
                            }
                        }
                    }
                }
                Op::StackRows(rows) => {
                    let c = self.shape(rows[0]).1;
                    for (i, r) in rows.iter().enumerate() {
                        if self.needs(*r) {
                            let dr = grads[r.0].as_mut().unwrap();
                            for j in 0..c {
                                dr[j] += g[i * c + j];
                            }
                        }
                    }
                }
                Op::Relu(a) => {
                    if self.needs(a) {
                        let av = &self.nodes[a.0].value;
                        let da = grads[a.0].as_mut().unwrap();
                        for (d, (gi, ai)) in da.iter_mut().zip(g.iter().zip(av)) {
                            if *ai > 0.0 {
                                *d += gi;
                            }
                        }
                    }
                }
                Op::MeanRows(a) => {
                    if self.needs(a) {
                        let (ra, ca) = self.shape(a);
                        let da = grads[a.0].as_mut().unwrap();
                        let inv = 1.0 / ra as f64;
                        for i in 0..ra {
                            for j in 0..ca {
                                da[i * ca + j] += g[j] * inv;
                            }
                        }
                    }
                }
                Op::Sum(a) => {
                    if self.needs(a) {
                        let da = grads[a.0].as_mut().unwrap();
                        for d in da.iter_mut() {
                            *d += g[0];
                        }
                    }
                }
                Op::Transpose(a) => {
                    if self.needs(a) {
                        let (ra, ca) = self.shape(a);
                        let da = grads[a.0].as_mut().unwrap();
                        for i in 0..ra {
                            for j in 0..ca {
                                da[i * ca + j] += g[j * ra + i];
                            }
                        }
                    }
                }
                Op::MaskedSoftmax(s, mask) => {
                    if self.needs(s) {
                        let y = &self.nodes[id].value;
                        let dot: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                        let ds = grads[s.0].as_mut().unwrap();
                        for j in 0..mask.len() {
                            if mask[j] {
                                ds[j] += y[j] * (g[j] - dot);
                            }
                        }
                    }
                }
                Op::IndexRow(a, row) => {
                    if self.needs(a) {
                        let ca = self.shape(a).1;
                        let da = grads[a.0].as_mut().unwrap();
                        for j in 0..ca {
                            da[row * ca + j] += g[j];
                        }
                    }
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

/// Max relative error between analytic gradients and central finite
/// differences over a random coordinate subset of each parameter.
///
/// `f` evaluates the loss and its analytic gradients (one `Vec<f64>` per
/// parameter, in order) at the given parameter values. The relative error
/// denominator is `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(
    f: F,
    params: &[Tensor],
    eps: f64,
    coords_per_tensor: usize,
    rng: &mut impl Rng,
) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<(f64, Vec<Vec<f64>>)>,
{
    let (_, analytic) = f(params)?;
    if analytic.len() != params.len() {
        return Err(TactError::Contract(format!(
            "grad_check closure returned {} gradients for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut worst = 0.0f64;
    for (pi, p) in params.iter().enumerate() {
        let len = p.data().len();
        let coords: Vec<usize> = if len <= coords_per_tensor {
            (0..len).collect()
        } else {
            rand::seq::index::sample(rng, len, coords_per_tensor).into_vec()
        };
        for ci in coords {
            let mut plus = params.to_vec();
            plus[pi].data_mut()[ci] += eps;
            let (lp, _) = f(&plus)?;
            let mut minus = params.to_vec();
            minus[pi].data_mut()[ci] -= eps;
            let (lm, _) = f(&minus)?;
            let numeric = (lp - lm) / (2.0 * eps);
            let a = analytic[pi][ci];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
