//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every op applied to its [`Var`]s together with the
//! forward values; [`Graph::backward`] walks the tape in reverse and returns
//! gradients for every parameter that was read.

use alloc::vec;
use alloc::vec::Vec;

use super::exact::{ExactSum, MAX_TERM};
use super::{NumericError, ParamStore, Tensor};

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Precision {
    /// Every op output is rounded through `f32`.
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Sigmoid(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<f64>,
    },
    Gate {
        hf: Var,
        hstar: Var,
        phi: Var,
    },
    Concat {
        parts: Vec<Var>,
        axis: Axis,
    },
    Reshape(Var),
    Gather {
        x: Var,
        idx: Vec<Option<u32>>,
    },
    SegmentMean {
        x: Var,
        seg: Vec<u32>,
        counts: Vec<u32>,
    },
    Sum(Var),
    Mean(Var),
    Mse(Var, Var),
    BceLogits {
        logits: Var,
        labels: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Parameter gradients aligned with a [`ParamStore`]'s ids. Parameters the
/// loss never touched have zero gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    grads: Vec<Tensor>,
}

impl Grads {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self {
            grads: (0..params.len())
                .map(|i| Tensor::zeros(params.by_id(i).shape()))
                .collect(),
        }
    }

    pub fn by_id(&self, id: usize) -> &Tensor {
        &self.grads[id]
    }

    pub fn by_id_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.grads[id]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        libm::sqrt(
            self.grads
                .iter()
                .flat_map(|g| g.data().iter())
                .map(|x| x * x)
                .sum::<f64>(),
        )
    }
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node>,
    precision: Precision,
}

fn dims2(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.last_dim())
}

fn mismatch(op: &'static str, expected: &[usize], got: &[usize]) -> NumericError {
    NumericError::ShapeMismatch {
        op,
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}

#[inline]
fn gelu(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const A: f64 = 0.044_715;
    let inner = C * (x + A * x * x * x);
    let t = libm::tanh(inner);
    let y = 0.5 * x * (1.0 + t);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * A * x * x);
    (y, dy)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `c[m,n] += a[m,k] * b[k,n]`
fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for i in chunks * 4..a.len() {
        s0 += a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3)
}

const LN_EPS: f64 = 1e-5;

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self::with_precision(params, Precision::F64)
    }

    pub fn with_precision(params: &'p ParamStore, precision: Precision) -> Self {
        Self {
            params,
            param_vars: vec![None; params.len()],
            nodes: Vec::with_capacity(256),
            precision,
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op: Op, mut value: Tensor, name: &'static str) -> Result<Var, NumericError> {
        if self.precision == Precision::F32 {
            value.round_f32();
        }
        if !value.is_finite() {
            return Err(NumericError::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input (no gradient flows out of the graph through it).
    pub fn input(&mut self, t: Tensor) -> Result<Var, NumericError> {
        self.push(Op::Leaf, t, "input")
    }

    pub fn param(&mut self, name: &str) -> Result<Var, NumericError> {
        let id = self
            .params
            .id(name)
            .ok_or_else(|| NumericError::UnknownParam(name.into()))?;
        if let Some(v) = self.param_vars[id] {
            return Ok(v);
        }
        let v = self.push(Op::Param(id), self.params.by_id(id).clone(), "param")?;
        self.param_vars[id] = Some(v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (m, k) = dims2(self.value(a));
        let (k2, n) = dims2(self.value(b));
        if self.value(b).rank() != 2 || k != k2 {
            return Err(mismatch("matmul", &[k, n], self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let mut shape = self.shape(a).to_vec();
        *shape.last_mut().unwrap() = n;
        self.push(Op::MatMul(a, b), Tensor::new(&shape, out)?, "matmul")
    }

    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, NumericError> {
        let n = self.value(x).last_dim();
        if self.value(b).numel() != n {
            return Err(mismatch("add_bias", &[n], self.shape(b)));
        }
        let bias = self.value(b).data();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, &bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        self.push(Op::AddBias(x, b), out.with_grad(false), "add_bias")
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        op: Op,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, NumericError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(name, self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(self.shape(a), data)?;
        self.push(op, t, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_same(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_same(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_same(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var, NumericError> {
        let t = self.value(x).map(|v| v * s);
        self.push(Op::Scale(x, s), t, "scale")
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var, NumericError> {
        let t = self.value(x).map(|v| gelu(v).0);
        self.push(Op::Gelu(x), t, "gelu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, NumericError> {
        let t = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), t, "sigmoid")
    }

    /// Row-wise layer normalization with learnable gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, NumericError> {
        let (r, n) = dims2(self.value(x));
        if self.value(gain).numel() != n || self.value(bias).numel() != n {
            return Err(mismatch("layer_norm", &[n], self.shape(gain)));
        }
        let xv = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![0.0; r * n];
        let mut rstd = vec![0.0; r];
        let mut out = vec![0.0; r * n];
        for i in 0..r {
            let row = &xv[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let rs = 1.0 / libm::sqrt(var + LN_EPS);
            rstd[i] = rs;
            for j in 0..n {
                let h = (row[j] - mean) * rs;
                xhat[i * n + j] = h;
                out[i * n + j] = g[j] * h + b[j];
            }
        }
        let t = Tensor::new(self.shape(x), out)?;
        self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            t,
            "layer_norm",
        )
    }

    /// Multi-head scaled dot-product attention. `q: (Tq, d)`, `k, v: (Tk, d)`.
    ///
    /// Reductions over the key axis are order independent, so permuting the
    /// key/value rows together leaves the output bit-identical.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var, NumericError> {
        let (tq, d) = dims2(self.value(q));
        let (tk, dk) = dims2(self.value(k));
        if tk == 0 || tq == 0 {
            return Err(NumericError::EmptySequence);
        }
        if dk != d || self.shape(v) != self.shape(k) {
            return Err(mismatch("attention", &[tk, d], self.shape(v)));
        }
        if heads == 0 || d % heads != 0 {
            return Err(NumericError::Dimension("model width must divide into heads"));
        }
        let vdata = self.value(v).data();
        if vdata.iter().any(|x| libm::fabs(*x) > MAX_TERM) {
            return Err(NumericError::NonFinite { op: "attention" });
        }
        let dh = d / heads;
        let scale = 1.0 / libm::sqrt(dh as f64);
        let qd = self.value(q).data();
        let kd = self.value(k).data();
        let mut probs = vec![0.0; heads * tq * tk];
        let mut out = vec![0.0; tq * d];
        let mut scores = vec![0.0; tk];
        let mut acc = vec![ExactSum::new(); dh];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..tq {
                let qi = &qd[i * d + off..i * d + off + dh];
                let mut mx = f64::NEG_INFINITY;
                for j in 0..tk {
                    let s = dot(qi, &kd[j * d + off..j * d + off + dh]) * scale;
                    scores[j] = s;
                    if s > mx {
                        mx = s;
                    }
                }
                let mut den = ExactSum::new();
                for s in scores.iter_mut() {
                    *s = libm::exp(*s - mx);
                    den.add(*s);
                }
                let inv = 1.0 / den.value();
                let prow = &mut probs[(h * tq + i) * tk..(h * tq + i + 1) * tk];
                acc.iter_mut().for_each(|a| *a = ExactSum::new());
                for j in 0..tk {
                    let p = scores[j] * inv;
                    prow[j] = p;
                    let vj = &vdata[j * d + off..j * d + off + dh];
                    for (a, &vv) in acc.iter_mut().zip(vj) {
                        a.add(p * vv);
                    }
                }
                for (c, a) in acc.iter().enumerate() {
                    out[i * d + off + c] = a.value();
                }
            }
        }
        let t = Tensor::new(self.shape(q), out)?;
        self.push(
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            },
            t,
            "attention",
        )
    }

    /// `phi * hf + (1 - phi) * hstar` with a one-element `phi`.
    pub fn gate(&mut self, hf: Var, hstar: Var, phi: Var) -> Result<Var, NumericError> {
        if self.shape(hf) != self.shape(hstar) {
            return Err(mismatch("gate", self.shape(hf), self.shape(hstar)));
        }
        if self.value(phi).numel() != 1 {
            return Err(mismatch("gate", &[1], self.shape(phi)));
        }
        let p = self.value(phi).data()[0];
        let data = self
            .value(hf)
            .data()
            .iter()
            .zip(self.value(hstar).data())
            .map(|(&f, &s)| p * f + (1.0 - p) * s)
            .collect();
        let t = Tensor::new(self.shape(hf), data)?;
        self.push(Op::Gate { hf, hstar, phi }, t, "gate")
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var, NumericError> {
        let first = *parts.first().ok_or(NumericError::EmptySequence)?;
        let (r0, c0) = dims2(self.value(first));
        let t = match axis {
            Axis::Cols => {
                let mut total = 0;
                for &p in parts {
                    let (r, c) = dims2(self.value(p));
                    if r != r0 {
                        return Err(mismatch("concat", &[r0, c], self.shape(p)));
                    }
                    total += c;
                }
                let mut out = Vec::with_capacity(r0 * total);
                for i in 0..r0 {
                    for &p in parts {
                        out.extend_from_slice(self.value(p).row(i));
                    }
                }
                Tensor::new(&[r0, total], out)?
            }
            Axis::Rows => {
                let mut total = 0;
                for &p in parts {
                    let (r, c) = dims2(self.value(p));
                    if c != c0 {
                        return Err(mismatch("concat", &[r, c0], self.shape(p)));
                    }
                    total += r;
                }
                let mut out = Vec::with_capacity(total * c0);
                for &p in parts {
                    out.extend_from_slice(self.value(p).data());
                }
                Tensor::new(&[total, c0], out)?
            }
        };
        self.push(
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            t,
            "concat",
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NumericError> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push(Op::Reshape(x), t.with_grad(false), "reshape")
    }

    /// Row gather; `None` yields a zero row (padding).
    pub fn gather_rows(&mut self, x: Var, idx: &[Option<u32>]) -> Result<Var, NumericError> {
        let (r, c) = dims2(self.value(x));
        let mut out = vec![0.0; idx.len() * c];
        for (o, i) in idx.iter().enumerate() {
            if let Some(i) = *i {
                let i = i as usize;
                if i >= r {
                    return Err(NumericError::Dimension("gather index out of range"));
                }
                out[o * c..(o + 1) * c].copy_from_slice(self.value(x).row(i));
            }
        }
        let t = Tensor::new(&[idx.len(), c], out)?;
        self.push(
            Op::Gather {
                x,
                idx: idx.to_vec(),
            },
            t,
            "gather_rows",
        )
    }

    /// Mean of the rows of `x` grouped by `seg` into `segments` output rows.
    /// Every segment must be non-empty. Order independent within a segment.
    pub fn segment_mean(&mut self, x: Var, seg: &[u32], segments: usize) -> Result<Var, NumericError> {
        let (r, c) = dims2(self.value(x));
        if seg.len() != r {
            return Err(mismatch("segment_mean", &[r], &[seg.len()]));
        }
        let mut counts = vec![0u32; segments];
        let mut acc = vec![ExactSum::new(); segments * c];
        let xd = self.value(x).data();
        for (i, &s) in seg.iter().enumerate() {
            let s = s as usize;
            if s >= segments {
                return Err(NumericError::Dimension("segment id out of range"));
            }
            counts[s] += 1;
            for j in 0..c {
                acc[s * c + j].add(xd[i * c + j]);
            }
        }
        if counts.iter().any(|&n| n == 0) {
            return Err(NumericError::EmptySequence);
        }
        let out = acc
            .iter()
            .enumerate()
            .map(|(k, a)| a.value() / counts[k / c] as f64)
            .collect();
        let t = Tensor::new(&[segments, c], out)?;
        self.push(
            Op::SegmentMean {
                x,
                seg: seg.to_vec(),
                counts,
            },
            t,
            "segment_mean",
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, NumericError> {
        let s = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s), "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, NumericError> {
        let n = self.value(x).numel().max(1) as f64;
        let s = self.value(x).data().iter().sum::<f64>() / n;
        self.push(Op::Mean(x), Tensor::scalar(s), "mean")
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("mse", self.shape(a), self.shape(b)));
        }
        let n = self.value(a).numel().max(1) as f64;
        let s = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n;
        self.push(Op::Mse(a, b), Tensor::scalar(s), "mse")
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `labels`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[f64]) -> Result<Var, NumericError> {
        let z = self.value(logits).data();
        if z.len() != labels.len() {
            return Err(mismatch("bce_with_logits", &[labels.len()], self.shape(logits)));
        }
        let s = z
            .iter()
            .zip(labels)
            .map(|(&z, &y)| z.max(0.0) - z * y + libm::log1p(libm::exp(-libm::fabs(z))))
            .sum::<f64>()
            / labels.len().max(1) as f64;
        self.push(
            Op::BceLogits {
                logits,
                labels: labels.to_vec(),
            },
            Tensor::scalar(s),
            "bce_with_logits",
        )
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads, NumericError> {
        if self.value(loss).numel() != 1 {
            return Err(NumericError::Dimension("backward needs a scalar loss"));
        }
        let n = loss.0 + 1;
        let mut g: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        g[loss.0] = Some(vec![1.0]);

        fn acc(g: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            g[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        let mut out = Grads::zeros_like(self.params);
        for idx in (0..n).rev() {
            let Some(dy) = g[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    for (o, d) in out.grads[*id].data_mut().iter_mut().zip(&dy) {
                        *o += d;
                    }
                }
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let (m, k) = dims2(av);
                    let nn = bv.last_dim();
                    // dA = dY B^T
                    {
                        let da = acc(&mut g, *a, m * k);
                        for i in 0..m {
                            let dyr = &dy[i * nn..(i + 1) * nn];
                            for p in 0..k {
                                da[i * k + p] += dot(dyr, &bv.data()[p * nn..(p + 1) * nn]);
                            }
                        }
                    }
                    // dB = A^T dY
                    {
                        let db = acc(&mut g, *b, k * nn);
                        for i in 0..m {
                            let dyr = &dy[i * nn..(i + 1) * nn];
                            for p in 0..k {
                                let a_ip = av.data()[i * k + p];
                                if a_ip == 0.0 {
                                    continue;
                                }
                                for (dbv, &d) in db[p * nn..(p + 1) * nn].iter_mut().zip(dyr) {
                                    *dbv += a_ip * d;
                                }
                            }
                        }
                    }
                }
                Op::AddBias(x, b) => {
                    let nn = self.value(*b).numel();
                    let dx = acc(&mut g, *x, dy.len());
                    dx.iter_mut().zip(&dy).for_each(|(o, d)| *o += d);
                    let db = acc(&mut g, *b, nn);
                    for row in dy.chunks(nn) {
                        db.iter_mut().zip(row).for_each(|(o, d)| *o += d);
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        let d = acc(&mut g, v, dy.len());
                        d.iter_mut().zip(&dy).for_each(|(o, x)| *o += x);
                    }
                }
                Op::Sub(a, b) => {
                    let da = acc(&mut g, *a, dy.len());
                    da.iter_mut().zip(&dy).for_each(|(o, x)| *o += x);
                    let db = acc(&mut g, *b, dy.len());
                    db.iter_mut().zip(&dy).for_each(|(o, x)| *o -= x);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    {
                        let da = acc(&mut g, *a, dy.len());
                        for i in 0..dy.len() {
                            da[i] += dy[i] * bv[i];
                        }
                    }
                    let db = acc(&mut g, *b, dy.len());
                    for i in 0..dy.len() {
                        db[i] += dy[i] * av[i];
                    }
                }
                Op::Scale(x, s) => {
                    let dx = acc(&mut g, *x, dy.len());
                    dx.iter_mut().zip(&dy).for_each(|(o, d)| *o += d * s);
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x).data();
                    let dx = acc(&mut g, *x, dy.len());
                    for i in 0..dy.len() {
                        dx[i] += dy[i] * gelu(xv[i]).1;
                    }
                }
                Op::Sigmoid(x) => {
                    let yv = node.value.data();
                    let dx = acc(&mut g, *x, dy.len());
                    for i in 0..dy.len() {
                        dx[i] += dy[i] * yv[i] * (1.0 - yv[i]);
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let nn = self.value(*gain).numel();
                    let r = dy.len() / nn;
                    let gv = self.value(*gain).data();
                    {
                        let dgain = acc(&mut g, *gain, nn);
                        for i in 0..r {
                            for j in 0..nn {
                                dgain[j] += dy[i * nn + j] * xhat[i * nn + j];
                            }
                        }
                    }
                    {
                        let dbias = acc(&mut g, *bias, nn);
                        for i in 0..r {
                            for j in 0..nn {
                                dbias[j] += dy[i * nn + j];
                            }
                        }
                    }
                    let dx = acc(&mut g, *x, dy.len());
                    let mut dxhat = vec![0.0; nn];
                    for i in 0..r {
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for j in 0..nn {
                            let d = dy[i * nn + j] * gv[j];
                            dxhat[j] = d;
                            m1 += d;
                            m2 += d * xhat[i * nn + j];
                        }
                        m1 /= nn as f64;
                        m2 /= nn as f64;
                        for j in 0..nn {
                            dx[i * nn + j] += rstd[i] * (dxhat[j] - m1 - xhat[i * nn + j] * m2);
                        }
                    }
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    probs,
                } => {
                    let (tq, d) = dims2(self.value(*q));
                    let tk = self.value(*k).rows();
                    let dh = d / heads;
                    let scale = 1.0 / libm::sqrt(dh as f64);
                    let qd = self.value(*q).data();
                    let kd = self.value(*k).data();
                    let vd = self.value(*v).data();
                    let mut dq = vec![0.0; tq * d];
                    let mut dk = vec![0.0; tk * d];
                    let mut dv = vec![0.0; tk * d];
                    let mut ds = vec![0.0; tk];
                    for h in 0..*heads {
                        let off = h * dh;
                        for i in 0..tq {
                            let prow = &probs[(h * tq + i) * tk..(h * tq + i + 1) * tk];
                            let doi = &dy[i * d + off..i * d + off + dh];
                            let mut wsum = 0.0;
                            for j in 0..tk {
                                let dp = dot(doi, &vd[j * d + off..j * d + off + dh]);
                                ds[j] = dp;
                                wsum += prow[j] * dp;
                            }
                            let qi = &qd[i * d + off..i * d + off + dh];
                            for j in 0..tk {
                                let p = prow[j];
                                let s = p * (ds[j] - wsum) * scale;
                                let kj = &kd[j * d + off..j * d + off + dh];
                                let dqi = &mut dq[i * d + off..i * d + off + dh];
                                for c in 0..dh {
                                    dqi[c] += s * kj[c];
                                }
                                let dkj = &mut dk[j * d + off..j * d + off + dh];
                                for c in 0..dh {
                                    dkj[c] += s * qi[c];
                                }
                                let dvj = &mut dv[j * d + off..j * d + off + dh];
                                for c in 0..dh {
                                    dvj[c] += p * doi[c];
                                }
                            }
                        }
                    }
                    for (var, grad) in [(*q, dq), (*k, dk), (*v, dv)] {
                        let t = acc(&mut g, var, grad.len());
                        t.iter_mut().zip(&grad).for_each(|(o, x)| *o += x);
                    }
                }
                Op::Gate { hf, hstar, phi } => {
                    let p = self.value(*phi).data()[0];
                    let fv = self.value(*hf).data();
                    let sv = self.value(*hstar).data();
                    let dphi: f64 = (0..dy.len()).map(|i| dy[i] * (fv[i] - sv[i])).sum();
                    {
                        let d = acc(&mut g, *hf, dy.len());
                        d.iter_mut().zip(&dy).for_each(|(o, x)| *o += p * x);
                    }
                    {
                        let d = acc(&mut g, *hstar, dy.len());
                        d.iter_mut().zip(&dy).for_each(|(o, x)| *o += (1.0 - p) * x);
                    }
                    acc(&mut g, *phi, 1)[0] += dphi;
                }
                Op::Concat { parts, axis } => match axis {
                    Axis::Cols => {
                        let r = node.value.rows();
                        let total = node.value.last_dim();
                        let mut off = 0;
                        for &p in parts {
                            let c = self.value(p).last_dim();
                            let len = self.value(p).numel();
                            let d = acc(&mut g, p, len);
                            for i in 0..r {
                                for j in 0..c {
                                    d[i * c + j] += dy[i * total + off + j];
                                }
                            }
                            off += c;
                        }
                    }
                    Axis::Rows => {
                        let mut off = 0;
                        for &p in parts {
                            let len = self.value(p).numel();
                            let d = acc(&mut g, p, len);
                            d.iter_mut()
                                .zip(&dy[off..off + len])
                                .for_each(|(o, x)| *o += x);
                            off += len;
                        }
                    }
                },
                Op::Reshape(x) => {
                    let d = acc(&mut g, *x, dy.len());
                    d.iter_mut().zip(&dy).for_each(|(o, x)| *o += x);
                }
                Op::Gather { x, idx } => {
                    let c = node.value.last_dim();
                    let len = self.value(*x).numel();
                    let d = acc(&mut g, *x, len);
                    for (o, i) in idx.iter().enumerate() {
                        if let Some(i) = *i {
                            let i = i as usize;
                            for j in 0..c {
                                d[i * c + j] += dy[o * c + j];
                            }
                        }
                    }
                }
                Op::SegmentMean { x, seg, counts } => {
                    let c = node.value.last_dim();
                    let len = self.value(*x).numel();
                    let d = acc(&mut g, *x, len);
                    for (i, &s) in seg.iter().enumerate() {
                        let s = s as usize;
                        let inv = 1.0 / counts[s] as f64;
                        for j in 0..c {
                            d[i * c + j] += dy[s * c + j] * inv;
                        }
                    }
                }
                Op::Sum(x) => {
                    let len = self.value(*x).numel();
                    let d = acc(&mut g, *x, len);
                    d.iter_mut().for_each(|o| *o += dy[0]);
                }
                Op::Mean(x) => {
                    let len = self.value(*x).numel();
                    let s = dy[0] / len.max(1) as f64;
                    let d = acc(&mut g, *x, len);
                    d.iter_mut().for_each(|o| *o += s);
                }
                Op::Mse(a, b) => {
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    let len = av.len();
                    let s = 2.0 * dy[0] / len.max(1) as f64;
                    {
                        let da = acc(&mut g, *a, len);
                        for i in 0..len {
                            da[i] += s * (av[i] - bv[i]);
                        }
                    }
                    let db = acc(&mut g, *b, len);
                    for i in 0..len {
                        db[i] -= s * (av[i] - bv[i]);
                    }
                }
                Op::BceLogits { logits, labels } => {
                    let z = self.value(*logits).data();
                    let s = dy[0] / labels.len().max(1) as f64;
                    let d = acc(&mut g, *logits, z.len());
                    for i in 0..z.len() {
                        d[i] += s * (sigmoid(z[i]) - labels[i]);
                    }
                }
            }
        }
        Ok(out)
    }
}
