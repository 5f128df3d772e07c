use super::{axis_split, numel, Scalar, TensorError};

/// Handle to a value in a [`Tape`] arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

/// One dense value in the arena. Immutable after creation except for the
/// gradient buffer, which the backward pass fills in.
#[derive(Debug, Clone)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
    pub fn data(&self) -> &[T] {
        &self.data
    }
    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }
    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Padding scheme for 1-D convolution. Both preserve the input length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// All padding on the left; output step t sees inputs at steps <= t.
    Causal,
    /// Padding split evenly; requires an odd kernel width.
    Symmetric,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Add { a: TensorId, b: TensorId, out: TensorId },
    Sub { a: TensorId, b: TensorId, out: TensorId },
    Mul { a: TensorId, b: TensorId, out: TensorId },
    Scale { x: TensorId, factor: T, out: TensorId },
    Matmul { a: TensorId, b: TensorId, out: TensorId, batch: usize, m: usize, k: usize, n: usize, a_batched: bool, b_batched: bool },
    Softmax { x: TensorId, out: TensorId, axis: usize },
    Relu { x: TensorId, out: TensorId },
    PRelu { x: TensorId, slope: TensorId, out: TensorId },
    Concat { inputs: Vec<TensorId>, out: TensorId, axis: usize },
    Mean { x: TensorId, out: TensorId, axis: usize },
    SumAll { x: TensorId, out: TensorId },
    Reshape { x: TensorId, out: TensorId },
    Permute { x: TensorId, out: TensorId, perm: Vec<usize> },
    Slice { x: TensorId, out: TensorId, axis: usize, start: usize, len: usize },
    L2NormLast { x: TensorId, out: TensorId },
    MaskFill { x: TensorId, out: TensorId, keep: Vec<bool> },
    Conv1d { x: TensorId, kernel: TensorId, bias: TensorId, out: TensorId, dilation: usize, pad_left: usize },
    Conv2d { x: TensorId, kernel: TensorId, bias: TensorId, out: TensorId, stride: usize, pad_top: usize, pad_left: usize },
    CumSum { x: TensorId, out: TensorId, axis: usize },
}

/// Arena of tensors plus the ordered record of operations that produced them.
///
/// Single-writer: one forward pass followed by at most one [`Tape::backward`].
/// Gradients accumulate additively when a tensor feeds multiple consumers.
pub struct Tape<T: Scalar> {
    nodes: Vec<Tensor<T>>,
    ops: Vec<Op<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), ops: Vec::new() }
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    pub fn node(&self, id: TensorId) -> &Tensor<T> {
        &self.nodes[id.0]
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn data(&self, id: TensorId) -> &[T] {
        &self.nodes[id.0].data
    }

    pub fn grad(&self, id: TensorId) -> Option<&[T]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self, id: TensorId) -> T {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    fn alloc(&mut self, op: &'static str, data: Vec<T>, shape: Vec<usize>, requires_grad: bool) -> Result<TensorId, TensorError> {
        if shape.iter().any(|&e| e == 0) {
            return Err(TensorError::Contract { op, msg: format!("zero extent in shape {shape:?}") });
        }
        if numel(&shape) != data.len() {
            return Err(TensorError::Contract {
                op,
                msg: format!("shape {:?} implies {} elements, buffer has {}", shape, numel(&shape), data.len()),
            });
        }
        let id = TensorId(self.nodes.len());
        self.nodes.push(Tensor { shape, data, requires_grad, grad: None });
        Ok(id)
    }

    /// Constant input value; no gradient is computed for it.
    pub fn leaf(&mut self, data: Vec<T>, shape: &[usize]) -> Result<TensorId, TensorError> {
        self.alloc("leaf", data, shape.to_vec(), false)
    }

    /// Trainable or checked input value; backward fills its gradient.
    pub fn leaf_grad(&mut self, data: Vec<T>, shape: &[usize]) -> Result<TensorId, TensorError> {
        self.alloc("leaf", data, shape.to_vec(), true)
    }

    /// Convenience leaf from `f64` host data.
    pub fn leaf_from_f64(&mut self, data: &[f64], shape: &[usize]) -> Result<TensorId, TensorError> {
        let v = data.iter().map(|&x| T::from_f64(x)).collect();
        self.leaf(v, shape)
    }

    fn push(&mut self, op: &'static str, data: Vec<T>, shape: Vec<usize>, requires_grad: bool, rec: impl FnOnce(TensorId) -> Op<T>) -> Result<TensorId, TensorError> {
        let out = self.alloc(op, data, shape, requires_grad)?;
        let record = rec(out);
        self.ops.push(record);
        Ok(out)
    }

    fn needs_grad(&self, ids: &[TensorId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    // ── element-wise and structural ops ─────────────────────────────────

    /// Element-wise sum. `b` may also be a trailing-shape (leading-batch
    /// broadcast) of `a`, e.g. adding a `[d]` bias onto `[m, d]`.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let suffix = sa.len() >= sb.len() && sa[sa.len() - sb.len()..] == sb[..];
        if !suffix {
            return Err(TensorError::ShapeMismatch { op: "add", lhs: sa, rhs: sb });
        }
        let nb = numel(&sb);
        let data: Vec<T> = self.data(a)
            .iter()
            .enumerate()
            .map(|(i, &x)| x + self.data(b)[i % nb])
            .collect();
        let rg = self.needs_grad(&[a, b]);
        self.push("add", data, sa, rg, |out| Op::Add { a, b, out })
    }

    /// Element-wise difference of same-shape tensors.
    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(TensorError::ShapeMismatch { op: "sub", lhs: sa, rhs: sb });
        }
        let data: Vec<T> = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x - y).collect();
        let rg = self.needs_grad(&[a, b]);
        self.push("sub", data, sa, rg, |out| Op::Sub { a, b, out })
    }

    /// Element-wise product of same-shape tensors.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(TensorError::ShapeMismatch { op: "mul", lhs: sa, rhs: sb });
        }
        let data: Vec<T> = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x * y).collect();
        let rg = self.needs_grad(&[a, b]);
        self.push("mul", data, sa, rg, |out| Op::Mul { a, b, out })
    }

    /// Multiplication by a compile-time constant.
    pub fn scale(&mut self, x: TensorId, factor: f64) -> Result<TensorId, TensorError> {
        let f = T::from_f64(factor);
        let data: Vec<T> = self.data(x).iter().map(|&v| v * f).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.needs_grad(&[x]));
        self.push("scale", data, shape, rg, |out| Op::Scale { x, factor: f, out })
    }

    pub fn relu(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let data: Vec<T> = self.data(x).iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.needs_grad(&[x]));
        self.push("relu", data, shape, rg, |out| Op::Relu { x, out })
    }

    /// Parametric ReLU with a single shared trainable slope.
    pub fn prelu(&mut self, x: TensorId, slope: TensorId) -> Result<TensorId, TensorError> {
        if self.node(slope).numel() != 1 {
            return Err(TensorError::Contract { op: "prelu", msg: format!("slope must be a single value, got shape {:?}", self.shape(slope)) });
        }
        let a = self.data(slope)[0];
        let data: Vec<T> = self.data(x).iter().map(|&v| if v > T::zero() { v } else { a * v }).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.needs_grad(&[x, slope]));
        self.push("prelu", data, shape, rg, |out| Op::PRelu { x, slope, out })
    }

    /// Concatenation along `axis`; inputs must agree on all other extents.
    pub fn concat(&mut self, inputs: &[TensorId], axis: usize) -> Result<TensorId, TensorError> {
        let first = inputs.first().ok_or_else(|| TensorError::Contract { op: "concat", msg: "no inputs".into() })?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::AxisOutOfRange { op: "concat", axis, rank: base.len() });
        }
        let mut total = 0;
        for &id in inputs {
            let s = self.shape(id);
            if s.len() != base.len()
                || s.iter().zip(&base).enumerate().any(|(d, (x, y))| d != axis && x != y)
            {
                return Err(TensorError::ShapeMismatch { op: "concat", lhs: base, rhs: s.to_vec() });
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut data = vec![T::zero(); numel(&shape)];
        for o in 0..outer {
            let mut dst = o * total * inner;
            for &id in inputs {
                let len = self.shape(id)[axis];
                let src = o * len * inner;
                data[dst..dst + len * inner].copy_from_slice(&self.data(id)[src..src + len * inner]);
                dst += len * inner;
            }
        }
        let rg = self.needs_grad(inputs);
        let ids = inputs.to_vec();
        self.push("concat", data, shape, rg, |out| Op::Concat { inputs: ids, out, axis })
    }

    /// Arithmetic mean along `axis` (the axis is removed).
    pub fn mean(&mut self, x: TensorId, axis: usize) -> Result<TensorId, TensorError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::AxisOutOfRange { op: "mean", axis, rank: shape.len() });
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let inv = T::from_f64(1.0 / len as f64);
        let mut data = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    data[o * inner + i] += self.data(x)[(o * len + j) * inner + i];
                }
            }
        }
        for v in &mut data {
            *v *= inv;
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let rg = self.needs_grad(&[x]);
        self.push("mean", data, out_shape, rg, |out| Op::Mean { x, out, axis })
    }

    /// Sum of all elements; yields a scalar (rank-0) tensor.
    pub fn sum_all(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let mut acc = T::zero();
        for &v in self.data(x) {
            acc += v;
        }
        let rg = self.needs_grad(&[x]);
        self.push("sum_all", vec![acc], vec![], rg, |out| Op::SumAll { x, out })
    }

    pub fn reshape(&mut self, x: TensorId, new_shape: &[usize]) -> Result<TensorId, TensorError> {
        if numel(new_shape) != self.node(x).numel() {
            return Err(TensorError::ShapeMismatch { op: "reshape", lhs: self.shape(x).to_vec(), rhs: new_shape.to_vec() });
        }
        let data = self.data(x).to_vec();
        let rg = self.needs_grad(&[x]);
        self.push("reshape", data, new_shape.to_vec(), rg, |out| Op::Reshape { x, out })
    }

    /// Axis permutation; `perm[d]` names the input axis that becomes output axis `d`.
    pub fn permute(&mut self, x: TensorId, perm: &[usize]) -> Result<TensorId, TensorError> {
        let shape = self.shape(x).to_vec();
        let rank = shape.len();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::Contract { op: "permute", msg: format!("{perm:?} is not a permutation of 0..{rank}") });
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let data = permute_data(self.data(x), &shape, perm);
        let rg = self.needs_grad(&[x]);
        let perm = perm.to_vec();
        self.push("permute", data, out_shape, rg, |out| Op::Permute { x, out, perm })
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn slice(&mut self, x: TensorId, axis: usize, start: usize, len: usize) -> Result<TensorId, TensorError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::AxisOutOfRange { op: "slice", axis, rank: shape.len() });
        }
        if len == 0 || start + len > shape[axis] {
            return Err(TensorError::Contract { op: "slice", msg: format!("range {start}..{} out of bounds for extent {}", start + len, shape[axis]) });
        }
        let (outer, full, inner) = axis_split(&shape, axis);
        let mut data = vec![T::zero(); outer * len * inner];
        for o in 0..outer {
            let src = (o * full + start) * inner;
            let dst = o * len * inner;
            data[dst..dst + len * inner].copy_from_slice(&self.data(x)[src..src + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let rg = self.needs_grad(&[x]);
        self.push("slice", data, out_shape, rg, |out| Op::Slice { x, out, axis, start, len })
    }

    /// Euclidean norm along the last axis; `[.., d] -> [..]`.
    pub fn l2norm(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() {
            return Err(TensorError::Contract { op: "l2norm", msg: "rank-0 input".into() });
        }
        let d = shape[shape.len() - 1];
        let lanes = numel(&shape) / d;
        let mut data = vec![T::zero(); lanes];
        for lane in 0..lanes {
            let mut acc = T::zero();
            for i in 0..d {
                let v = self.data(x)[lane * d + i];
                acc += v * v;
            }
            data[lane] = acc.sqrt();
        }
        let out_shape = shape[..shape.len() - 1].to_vec();
        let rg = self.needs_grad(&[x]);
        self.push("l2norm", data, out_shape, rg, |out| Op::L2NormLast { x, out })
    }

    /// Replaces entries where `keep` is false with `fill`. Gradient flows only
    /// through kept entries; the mask itself is constant.
    pub fn mask_fill(&mut self, x: TensorId, keep: &[bool], fill: T) -> Result<TensorId, TensorError> {
        if keep.len() != self.node(x).numel() {
            return Err(TensorError::Contract { op: "mask_fill", msg: format!("mask has {} entries, tensor has {}", keep.len(), self.node(x).numel()) });
        }
        let data: Vec<T> = self.data(x).iter().zip(keep).map(|(&v, &k)| if k { v } else { fill }).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.needs_grad(&[x]));
        let keep = keep.to_vec();
        self.push("mask_fill", data, shape, rg, |out| Op::MaskFill { x, out, keep })
    }

    /// Running sum along `axis`.
    pub fn cumsum(&mut self, x: TensorId, axis: usize) -> Result<TensorId, TensorError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::AxisOutOfRange { op: "cumsum", axis, rank: shape.len() });
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let mut data = self.data(x).to_vec();
        for o in 0..outer {
            for j in 1..len {
                for i in 0..inner {
                    let prev = data[(o * len + j - 1) * inner + i];
                    data[(o * len + j) * inner + i] += prev;
                }
            }
        }
        let rg = self.needs_grad(&[x]);
        self.push("cumsum", data, shape, rg, |out| Op::CumSum { x, out, axis })
    }

    // ── linear algebra ──────────────────────────────────────────────────

    /// Matrix product over the two trailing axes. Leading batch extents must
    /// match exactly, or be absent on one side (that side is broadcast).
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let mismatch = || TensorError::ShapeMismatch { op: "matmul", lhs: sa.clone(), rhs: sb.clone() };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch());
        }
        let (m, ka) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if ka != kb {
            return Err(mismatch());
        }
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        let (batch_shape, a_batched, b_batched) = if ba == bb {
            (ba.to_vec(), !ba.is_empty(), !bb.is_empty())
        } else if ba.is_empty() {
            (bb.to_vec(), false, true)
        } else if bb.is_empty() {
            (ba.to_vec(), true, false)
        } else {
            return Err(mismatch());
        };
        let batch = numel(&batch_shape);
        let k = ka;
        let mut data = vec![T::zero(); batch * m * n];
        for bi in 0..batch {
            let ao = if a_batched { bi * m * k } else { 0 };
            let bo = if b_batched { bi * k * n } else { 0 };
            let co = bi * m * n;
            matmul_slice(&self.data(a)[ao..ao + m * k], &self.data(b)[bo..bo + k * n], &mut data[co..co + m * n], m, k, n);
        }
        let mut out_shape = batch_shape;
        out_shape.push(m);
        out_shape.push(n);
        let rg = self.needs_grad(&[a, b]);
        self.push("matmul", data, out_shape, rg, |out| Op::Matmul { a, b, out, batch, m, k, n, a_batched, b_batched })
    }

    /// Numerically stable softmax along `axis` (max-subtraction). Entries of
    /// `-inf` come out as exact zeros.
    pub fn softmax(&mut self, x: TensorId, axis: usize) -> Result<TensorId, TensorError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::AxisOutOfRange { op: "softmax", axis, rank: shape.len() });
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let mut data = vec![T::zero(); numel(&shape)];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let mut mx = T::neg_infinity();
                for j in 0..len {
                    mx = mx.max(self.data(x)[at(j)]);
                }
                let mut denom = T::zero();
                for j in 0..len {
                    let e = (self.data(x)[at(j)] - mx).exp();
                    data[at(j)] = e;
                    denom += e;
                }
                for j in 0..len {
                    data[at(j)] = data[at(j)] / denom;
                }
            }
        }
        let rg = self.needs_grad(&[x]);
        self.push("softmax", data, shape, rg, |out| Op::Softmax { x, out, axis })
    }

    // ── convolutions ────────────────────────────────────────────────────

    /// Dilated 1-D cross-correlation plus bias, output length == input length.
    /// `x: [n, c_in, t]`, `kernel: [c_out, c_in, k]`, `bias: [c_out]`.
    pub fn conv1d(&mut self, x: TensorId, kernel: TensorId, bias: TensorId, dilation: usize, padding: Padding) -> Result<TensorId, TensorError> {
        let sx = self.shape(x).to_vec();
        let sk = self.shape(kernel).to_vec();
        if sx.len() != 3 || sk.len() != 3 || sx[1] != sk[1] {
            return Err(TensorError::ShapeMismatch { op: "conv1d", lhs: sx, rhs: sk });
        }
        let (n, c_in, t) = (sx[0], sx[1], sx[2]);
        let (c_out, _, k) = (sk[0], sk[1], sk[2]);
        if self.shape(bias) != [c_out] {
            return Err(TensorError::ShapeMismatch { op: "conv1d", lhs: self.shape(bias).to_vec(), rhs: vec![c_out] });
        }
        if dilation == 0 {
            return Err(TensorError::Contract { op: "conv1d", msg: "dilation must be >= 1".into() });
        }
        if padding == Padding::Symmetric && k % 2 == 0 {
            return Err(TensorError::Contract { op: "conv1d", msg: format!("symmetric padding requires odd kernel width, got {k}") });
        }
        let pad_left = match padding {
            Padding::Causal => (k - 1) * dilation,
            Padding::Symmetric => (k - 1) / 2 * dilation,
        };
        let mut data = vec![T::zero(); n * c_out * t];
        for ni in 0..n {
            for co in 0..c_out {
                for ti in 0..t {
                    let mut acc = self.data(bias)[co];
                    for ci in 0..c_in {
                        for j in 0..k {
                            let src = (ti + j * dilation) as isize - pad_left as isize;
                            if src >= 0 && (src as usize) < t {
                                acc += self.data(x)[(ni * c_in + ci) * t + src as usize]
                                    * self.data(kernel)[(co * c_in + ci) * k + j];
                            }
                        }
                    }
                    data[(ni * c_out + co) * t + ti] = acc;
                }
            }
        }
        let rg = self.needs_grad(&[x, kernel, bias]);
        self.push("conv1d", data, vec![n, c_out, t], rg, |out| Op::Conv1d { x, kernel, bias, out, dilation, pad_left })
    }

    /// Strided 2-D cross-correlation plus bias with "same" padding, so the
    /// output grid is `ceil(input / stride)` in each spatial dimension.
    /// `x: [n, c_in, h, w]`, `kernel: [c_out, c_in, kh, kw]`, `bias: [c_out]`.
    pub fn conv2d(&mut self, x: TensorId, kernel: TensorId, bias: TensorId, stride: usize) -> Result<TensorId, TensorError> {
        let sx = self.shape(x).to_vec();
        let sk = self.shape(kernel).to_vec();
        if sx.len() != 4 || sk.len() != 4 || sx[1] != sk[1] {
            return Err(TensorError::ShapeMismatch { op: "conv2d", lhs: sx, rhs: sk });
        }
        let (n, c_in, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let (c_out, _, kh, kw) = (sk[0], sk[1], sk[2], sk[3]);
        if self.shape(bias) != [c_out] {
            return Err(TensorError::ShapeMismatch { op: "conv2d", lhs: self.shape(bias).to_vec(), rhs: vec![c_out] });
        }
        if stride == 0 {
            return Err(TensorError::Contract { op: "conv2d", msg: "stride must be >= 1".into() });
        }
        let out_h = h.div_ceil(stride);
        let out_w = w.div_ceil(stride);
        let pad_top = (((out_h - 1) * stride + kh).saturating_sub(h)) / 2;
        let pad_left = (((out_w - 1) * stride + kw).saturating_sub(w)) / 2;
        let mut data = vec![T::zero(); n * c_out * out_h * out_w];
        for ni in 0..n {
            for co in 0..c_out {
                for oh in 0..out_h {
                    for ow in 0..out_w {
                        let mut acc = self.data(bias)[co];
                        for ci in 0..c_in {
                            for r in 0..kh {
                                let ih = (oh * stride + r) as isize - pad_top as isize;
                                if ih < 0 || ih as usize >= h {
                                    continue;
                                }
                                for c in 0..kw {
                                    let iw = (ow * stride + c) as isize - pad_left as isize;
                                    if iw < 0 || iw as usize >= w {
                                        continue;
                                    }
                                    acc += self.data(x)[((ni * c_in + ci) * h + ih as usize) * w + iw as usize]
                                        * self.data(kernel)[((co * c_in + ci) * kh + r) * kw + c];
                                }
                            }
                        }
                        data[((ni * c_out + co) * out_h + oh) * out_w + ow] = acc;
                    }
                }
            }
        }
        let rg = self.needs_grad(&[x, kernel, bias]);
        self.push("conv2d", data, vec![n, c_out, out_h, out_w], rg, |out| Op::Conv2d { x, kernel, bias, out, stride, pad_top, pad_left })
    }

    // ── backward pass ───────────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar loss. Visits operations in exact
    /// reverse execution order; every `requires_grad` tensor reachable from
    /// the loss ends up holding its gradient.
    pub fn backward(&mut self, loss: TensorId) -> Result<(), TensorError> {
        if self.node(loss).numel() != 1 {
            return Err(TensorError::Contract { op: "backward", msg: format!("loss must be scalar, got shape {:?}", self.shape(loss)) });
        }
        if self.ops.is_empty() {
            return Err(TensorError::Contract { op: "backward", msg: "tape is empty".into() });
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for idx in (0..self.ops.len()).rev() {
            let op = self.ops[idx].clone();
            self.backward_op(&op);
        }
        Ok(())
    }

    fn take_out_grad(&self, out: TensorId) -> Option<Vec<T>> {
        self.nodes[out.0].grad.clone()
    }

    fn accumulate(&mut self, id: TensorId, contrib: &[T]) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut self.nodes[id.0].grad {
            Some(g) => {
                for (gi, &c) in g.iter_mut().zip(contrib) {
                    *gi += c;
                }
            }
            None => self.nodes[id.0].grad = Some(contrib.to_vec()),
        }
    }

    fn backward_op(&mut self, op: &Op<T>) {
        match op {
            Op::Add { a, b, out } => {
                if let Some(d) = self.take_out_grad(*out) {
                    self.accumulate(*a, &d);
                    if self.nodes[b.0].requires_grad {
                        let nb = self.node(*b).numel();
                        let mut db = vec![T::zero(); nb];
                        for (i, &v) in d.iter().enumerate() {
                            db[i % nb] += v;
                        }
                        self.accumulate(*b, &db);
                    }
                }
            }
            Op::Sub { a, b, out } => {
                if let Some(d) = self.take_out_grad(*out) {
                    self.accumulate(*a, &d);
                    if self.nodes[b.0].requires_grad {
                        let neg: Vec<T> = d.iter().map(|&v| -v).collect();
                        self.accumulate(*b, &neg);
                    }
                }
            }
            Op::Mul { a, b, out } => {
                if let Some(d) = self.take_out_grad(*out) {
                    if self.nodes[a.0].requires_grad {
                        let da: Vec<T> = d.iter().zip(self.data(*b)).map(|(&g, &y)| g * y).collect();
                        self.accumulate(*a, &da);
                    }
                    if self.nodes[b.0].requires_grad {
                        let db: Vec<T> = d.iter().zip(self.data(*a)).map(|(&g, &x)| g * x).collect();
                        self.accumulate(*b, &db);
                    }
                }
            }
            Op::Scale { x, factor, out } => {
                if let Some(d) = self.take_out_grad(*out) {
                    let dx: Vec<T> = d.iter().map(|&g| g * *factor).collect();
                    self.accumulate(*x, &dx);
                }
            }
            Op::Matmul { a, b, out, batch, m, k, n, a_batched, b_batched } => {
                if let Some(d) = self.take_out_grad(*out) {
                    let (batch, m, k, n) = (*batch, *m, *k, *n);
                    if self.nodes[a.0].requires_grad {
                        let mut da = vec![T::zero(); if *a_batched { batch } else { 1 } * m * k];
                        for bi in 0..batch {
                            let bo = if *b_batched { bi * k * n } else { 0 };
                            let ao = if *a_batched { bi * m * k } else { 0 };
                            // d_a[i,p] += sum_j d[i,j] * b[p,j]
                            let bd = &self.data(*b)[bo..bo + k * n];
                            for i in 0..m {
                                for p in 0..k {
                                    let mut acc = T::zero();
                                    for j in 0..n {
                                        acc += d[bi * m * n + i * n + j] * bd[p * n + j];
                                    }
                                    da[ao + i * k + p] += acc;
                                }
                            }
                        }
                        self.accumulate(*a, &da);
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut db = vec![T::zero(); if *b_batched { batch } else { 1 } * k * n];
                        for bi in 0..batch {
                            let ao = if *a_batched { bi * m * k } else { 0 };
                            let bo = if *b_batched { bi * k * n } else { 0 };
                            // d_b[p,j] += sum_i a[i,p] * d[i,j]
                            let ad = &self.data(*a)[ao..ao + m * k];
                            for p in 0..k {
                                for j in 0..n {
                                    let mut acc = T::zero();
                                    for i in 0..m {
                                        acc += ad[i * k + p] * d[bi * m * n + i * n + j];
                                    }
                                    db[bo + p * n + j] += acc;
                                }
                            }
                        }
                        self.accumulate(*b, &db);
                    }
                }
            }
            Op::Softmax { x, out, axis } => {
                if let Some(d) = self.take_out_grad(*out) {
                    let shape = self.shape(*out).to_vec();
                    let (outer, len, inner) = axis_split(&shape, *axis);
                    let y = self.data(*out);
                    let mut dx = vec![T::zero(); d.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| (o * len + j) * inner + i;
                            let mut dot = T::zero();
                            for j in 0..len {
                                dot += d[at(j)] * y[at(j)];
                            }
                            for j in 0..len {
                                dx[at(j)] = y[at(j)] * (d[at(j)] - dot);
                            }
                        }
                    }
                    self.accumulate(*x, &dx);
                }
            }
            Op::Relu { x, out } => {
                if let Some(d) = self.take_out_grad(*out) {
                    let dx: Vec<T> = d.iter().zip(self.data(*x)).map(|(&g, &v)| if v > T::zero() { g } else { T::zero() }).collect();
                    self.accumulate(*x, &dx);
                }
            }
            Op::PRelu { x, slope, out } => {
                if let Some(d) = self.take_out_grad(*out) {
                    let a = self.data(*slope)[0];
                    if self.nodes[x.0].requires_grad {
                        let dx: Vec<T> = d.iter().zip(self.data(*x)).map(|(&g, &v)| if v > T::zero() { g } else { g * a }).collect();
                        self.accumulate(*x, &dx);
                    }
                    if self.nodes[slope.0].requires_grad {
                        let mut ds = T::zero();
                        for (&g, &v) in d.iter().zip(self.data(*x)) {
                            if v <= T::zero() {
                                ds += g * v;
                            }
                        }
                        self.accumulate(*slope, &[ds]);
                    }
                }
            }
            Op::Concat { inputs, out, axis } => {
                if let Some(d) = self.take_out_grad(*out) {
                    let shape = self.shape(*out).to_vec();
                    let (outer, total, inner) = axis_split(&shape, *axis);
                    for (pos, id) in {
                        // prefix offsets along the concat axis
                        let mut offs = Vec::with_capacity(inputs.len());
                        let mut acc = 0;
                        for &id in inputs {
                            offs.push((acc, id));
                            acc += self.shape(id)[*axis];
                        }
                        offs
                    } {
                        if !self.nodes[id.0].requires_grad {
                            continue;
                        }
                        let len = self.shape(id)[*axis];
                        let mut di = vec![T::zero(); self.node(id).numel()];
                        for o in 0..outer {
                            let src = (o * total + pos) * inner;
                            let dst = o * len * inner;
                            di[dst..dst + len * inner].copy_from_slice(&d[src..src + len * inner]);
                        }
                        self.accumulate(id, &di);
                    }
                }
            }
            Op::Mean { x, out, axis } => {
                if let Some(d) = self.take_out_grad(*out) {
                    let shape = self.shape(*x).to_vec();
                    let (outer, len, inner) = axis_split(&shape, *axis);
                    let inv = T::from_f64(1.0 / len as f64);
                    let mut dx = vec![T::zero(); numel(&shape)];
                    for o in 0..outer {
                        for j in 0..len {
                            for i in 0..inner {
                                dx[(o * len + j) * inner + i] = d[o * inner + i] * inv;
                            }
                        }
                    }
                    self.accumulate(*x, &dx);
                }
            }
            Op::SumAll { x, out } => {
                if let Some(d) = self.take_out_grad(*out) {
                    let dx = vec![d[0]; self.node(*x).numel()];
                    self.accumulate(*x, &dx);
                }
            }
            Op::Reshape { x, out } => {
                if let Some(d) = self.take_out_grad(*out) {
                    self.accumulate(*x, &d);
                }
            }
            Op::Permute { x, out, perm } => {
                if let Some(d) = self.take_out_grad(*out) {
                    // invert the permutation to route gradients back
                    let mut inv = vec![0usize; perm.len()];
                    for (d_axis, &s_axis) in perm.iter().enumerate() {
                        inv[s_axis] = d_axis;
                    }
                    let dx = permute_data(&d, self.shape(*out), &inv);
                    self.accumulate(*x, &dx);
                }
            }
            Op::Slice { x, out, axis, start, len } => {
                if let Some(d) = self.take_out_grad(*out) {
                    let shape = self.shape(*x).to_vec();
                    let (outer, full, inner) = axis_split(&shape, *axis);
                    let mut dx = vec![T::zero(); numel(&shape)];
                    for o in 0..outer {
                        let dst = (o * full + start) * inner;
                        let src = o * len * inner;
                        dx[dst..dst + len * inner].copy_from_slice(&d[src..src + len * inner]);
                    }
                    self.accumulate(*x, &dx);
                }
            }
            Op::L2NormLast { x, out } => {
                if let Some(d) = self.take_out_grad(*out) {
                    let shape = self.shape(*x).to_vec();
                    let dim = shape[shape.len() - 1];
                    let mut dx = vec![T::zero(); numel(&shape)];
                    for lane in 0..d.len() {
                        let norm = self.data(*out)[lane];
                        if norm > T::zero() {
                            for i in 0..dim {
                                dx[lane * dim + i] = d[lane] * self.data(*x)[lane * dim + i] / norm;
                            }
                        }
                    }
                    self.accumulate(*x, &dx);
                }
            }
            Op::MaskFill { x, out, keep } => {
                if let Some(d) = self.take_out_grad(*out) {
                    let dx: Vec<T> = d.iter().zip(keep).map(|(&g, &k)| if k { g } else { T::zero() }).collect();
                    self.accumulate(*x, &dx);
                }
            }
            Op::CumSum { x, out, axis } => {
                if let Some(d) = self.take_out_grad(*out) {
                    let shape = self.shape(*x).to_vec();
                    let (outer, len, inner) = axis_split(&shape, *axis);
                    // d_x[j] = sum_{j' >= j} d_out[j']  (reverse running sum)
                    let mut dx = d.clone();
                    for o in 0..outer {
                        for j in (0..len.saturating_sub(1)).rev() {
                            for i in 0..inner {
                                let next = dx[(o * len + j + 1) * inner + i];
                                dx[(o * len + j) * inner + i] += next;
                            }
                        }
                    }
                    self.accumulate(*x, &dx);
                }
            }
            Op::Conv1d { x, kernel, bias, out, dilation, pad_left } => {
                if let Some(d) = self.take_out_grad(*out) {
                    let sx = self.shape(*x).to_vec();
                    let sk = self.shape(*kernel).to_vec();
                    let (n, c_in, t) = (sx[0], sx[1], sx[2]);
                    let (c_out, _, k) = (sk[0], sk[1], sk[2]);
                    let (dil, pad) = (*dilation, *pad_left);
                    if self.nodes[x.0].requires_grad {
                        let mut dx = vec![T::zero(); n * c_in * t];
                        for ni in 0..n {
                            for co in 0..c_out {
                                for ti in 0..t {
                                    let g = d[(ni * c_out + co) * t + ti];
                                    for ci in 0..c_in {
                                        for j in 0..k {
                                            let src = (ti + j * dil) as isize - pad as isize;
                                            if src >= 0 && (src as usize) < t {
                                                dx[(ni * c_in + ci) * t + src as usize] +=
                                                    g * self.data(*kernel)[(co * c_in + ci) * k + j];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        self.accumulate(*x, &dx);
                    }
                    if self.nodes[kernel.0].requires_grad {
                        let mut dk = vec![T::zero(); c_out * c_in * k];
                        for ni in 0..n {
                            for co in 0..c_out {
                                for ti in 0..t {
                                    let g = d[(ni * c_out + co) * t + ti];
                                    for ci in 0..c_in {
                                        for j in 0..k {
                                            let src = (ti + j * dil) as isize - pad as isize;
                                            if src >= 0 && (src as usize) < t {
                                                dk[(co * c_in + ci) * k + j] +=
                                                    g * self.data(*x)[(ni * c_in + ci) * t + src as usize];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        self.accumulate(*kernel, &dk);
                    }
                    if self.nodes[bias.0].requires_grad {
                        let mut db = vec![T::zero(); c_out];
                        for ni in 0..n {
                            for co in 0..c_out {
                                for ti in 0..t {
                                    db[co] += d[(ni * c_out + co) * t + ti];
                                }
                            }
                        }
                        self.accumulate(*bias, &db);
                    }
                }
            }
            Op::Conv2d { x, kernel, bias, out, stride, pad_top, pad_left } => {
                if let Some(d) = self.take_out_grad(*out) {
                    let sx = self.shape(*x).to_vec();
                    let sk = self.shape(*kernel).to_vec();
                    let so = self.shape(*out).to_vec();
                    let (n, c_in, h, w) = (sx[0], sx[1], sx[2], sx[3]);
                    let (c_out, _, kh, kw) = (sk[0], sk[1], sk[2], sk[3]);
                    let (out_h, out_w) = (so[2], so[3]);
                    let (s, pt, pl) = (*stride, *pad_top, *pad_left);
                    let need_dx = self.nodes[x.0].requires_grad;
                    let need_dk = self.nodes[kernel.0].requires_grad;
                    let mut dx = vec![T::zero(); if need_dx { n * c_in * h * w } else { 0 }];
                    let mut dk = vec![T::zero(); if need_dk { c_out * c_in * kh * kw } else { 0 }];
                    if need_dx || need_dk {
                        for ni in 0..n {
                            for co in 0..c_out {
                                for oh in 0..out_h {
                                    for ow in 0..out_w {
                                        let g = d[((ni * c_out + co) * out_h + oh) * out_w + ow];
                                        for ci in 0..c_in {
                                            for r in 0..kh {
                                                let ih = (oh * s + r) as isize - pt as isize;
                                                if ih < 0 || ih as usize >= h {
                                                    continue;
                                                }
                                                for c in 0..kw {
                                                    let iw = (ow * s + c) as isize - pl as isize;
                                                    if iw < 0 || iw as usize >= w {
                                                        continue;
                                                    }
                                                    let xi = ((ni * c_in + ci) * h + ih as usize) * w + iw as usize;
                                                    let ki = ((co * c_in + ci) * kh + r) * kw + c;
                                                    if need_dx {
                                                        dx[xi] += g * self.data(*kernel)[ki];
                                                    }
                                                    if need_dk {
                                                        dk[ki] += g * self.data(*x)[xi];
                                                    }
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    if need_dx {
                        self.accumulate(*x, &dx);
                    }
                    if need_dk {
                        self.accumulate(*kernel, &dk);
                    }
                    if self.nodes[bias.0].requires_grad {
                        let mut db = vec![T::zero(); c_out];
                        for ni in 0..n {
                            for co in 0..c_out {
                                for oh in 0..out_h {
                                    for ow in 0..out_w {
                                        db[co] += d[((ni * c_out + co) * out_h + oh) * out_w + ow];
                                    }
                                }
                            }
                        }
                        self.accumulate(*bias, &db);
                    }
                }
            }
        }
    }
}

fn matmul_slice<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for j in 0..n {
            let mut acc = T::zero();
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = acc;
        }
    }
}

fn permute_data<T: Scalar>(src: &[T], in_shape: &[usize], perm: &[usize]) -> Vec<T> {
    let rank = in_shape.len();
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let in_strides = row_major_strides(in_shape);
    let out_strides = row_major_strides(&out_shape);
    // out_idx[j] = in_idx[perm[j]], so input axis d lands on output axis dest[d].
    let mut dest = vec![0usize; rank];
    for (j, &p) in perm.iter().enumerate() {
        dest[p] = j;
    }
    let mut out = vec![T::zero(); src.len()];
    for (lin, v) in src.iter().enumerate() {
        let mut rem = lin;
        let mut off = 0;
        for d in 0..rank {
            let idx = rem / in_strides[d];
            rem %= in_strides[d];
            off += idx * out_strides[dest[d]];
        }
        out[off] = *v;
    }
    out
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}
