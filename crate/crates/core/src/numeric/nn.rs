//! Network building blocks on top of [`Graph`].
//!
//! Parameters are addressed by dotted names; each `declare_*` function
//! registers exactly the names its forward counterpart reads.

use alloc::string::String;
use alloc::vec::Vec;

use super::params::{join, join_idx, Init};
use super::{Axis, Graph, NumericError, Tensor, Var};

pub fn linear(g: &mut Graph, prefix: &str, x: Var) -> Result<Var, NumericError> {
    let w = g.param(&join(prefix, "w"))?;
    let b = g.param(&join(prefix, "b"))?;
    let y = g.matmul(x, w)?;
    g.add_bias(y, b)
}

pub fn layer_norm(g: &mut Graph, prefix: &str, x: Var) -> Result<Var, NumericError> {
    let gain = g.param(&join(prefix, "g"))?;
    let bias = g.param(&join(prefix, "b"))?;
    g.layer_norm(x, gain, bias)
}

/// Stack of dense layers over the last axis with GELU between layers (none
/// after the last). `layer_dims` lists the input width followed by every
/// layer's output width, e.g. `[6, 64, 128, 512]`.
pub fn mlp_apply(g: &mut Graph, prefix: &str, x: Var, layer_dims: &[usize]) -> Result<Var, NumericError> {
    if layer_dims.len() < 2 {
        return Err(NumericError::Dimension("mlp needs at least one layer"));
    }
    if g.value(x).last_dim() != layer_dims[0] {
        return Err(NumericError::ShapeMismatch {
            op: "mlp_apply",
            expected: alloc::vec![layer_dims[0]],
            got: g.shape(x).to_vec(),
        });
    }
    let mut h = x;
    let layers = layer_dims.len() - 1;
    for i in 0..layers {
        let name = join_idx(prefix, i);
        let w = g.params().get(&join(&name, "w"))?;
        if w.shape() != [layer_dims[i], layer_dims[i + 1]] {
            return Err(NumericError::ShapeMismatch {
                op: "mlp_apply",
                expected: alloc::vec![layer_dims[i], layer_dims[i + 1]],
                got: w.shape().to_vec(),
            });
        }
        h = linear(g, &name, h)?;
        if i + 1 < layers {
            h = g.gelu(h)?;
        }
    }
    Ok(h)
}

/// Sinusoidal encoding of a single (possibly fractional) position.
pub fn sinusoidal_row(pos: f64, d: usize, out: &mut [f64]) {
    for i in 0..d / 2 {
        let freq = libm::pow(10_000.0, (2 * i) as f64 / d as f64);
        out[2 * i] = libm::sin(pos / freq);
        out[2 * i + 1] = libm::cos(pos / freq);
    }
}

/// `pe[t, 2i] = sin(t / 10000^(2i/d))`, `pe[t, 2i+1] = cos(t / 10000^(2i/d))`.
pub fn sinusoidal_pe(len: usize, d: usize) -> Result<Tensor, NumericError> {
    if d % 2 != 0 {
        return Err(NumericError::Dimension("sinusoidal encoding width must be even"));
    }
    let mut data = alloc::vec![0.0; len * d];
    for t in 0..len {
        sinusoidal_row(t as f64, d, &mut data[t * d..(t + 1) * d]);
    }
    Tensor::new(&[len, d], data)
}

/// Shape of a transformer encoder with a readout token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EncoderSpec {
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    /// Self-attention blocks before the readout (decoding) block.
    pub blocks: usize,
}

fn declare_attn(init: &mut Init, p: &str, d: usize) -> Result<(), NumericError> {
    for name in ["q", "k", "v", "o"] {
        init.linear(&join(p, name), d, d)?;
    }
    Ok(())
}

pub fn declare_attention_encoder(init: &mut Init, prefix: &str, spec: &EncoderSpec) -> Result<(), NumericError> {
    let d = spec.d_model;
    for b in 0..spec.blocks {
        let p = join_idx(&join(prefix, "enc"), b);
        init.layer_norm(&join(&p, "ln1"), d)?;
        declare_attn(init, &join(&p, "attn"), d)?;
        init.layer_norm(&join(&p, "ln2"), d)?;
        init.mlp(&join(&p, "ff"), &[d, spec.d_ff, d])?;
    }
    let p = join(prefix, "dec");
    init.layer_norm(&join(&p, "lnq"), d)?;
    init.layer_norm(&join(&p, "lnm"), d)?;
    declare_attn(init, &join(&p, "attn"), d)?;
    init.layer_norm(&join(&p, "ln2"), d)?;
    init.mlp(&join(&p, "ff"), &[d, spec.d_ff, d])?;
    init.layer_norm(&join(&p, "lnf"), d)
}

fn mha(g: &mut Graph, p: &str, query: Var, memory: Var, heads: usize) -> Result<Var, NumericError> {
    let q = linear(g, &join(p, "q"), query)?;
    let k = linear(g, &join(p, "k"), memory)?;
    let v = linear(g, &join(p, "v"), memory)?;
    let a = g.attention(q, k, v, heads)?;
    linear(g, &join(p, "o"), a)
}

fn feed_forward(g: &mut Graph, p: &str, x: Var, d: usize, d_ff: usize) -> Result<Var, NumericError> {
    mlp_apply(g, p, x, &[d, d_ff, d])
}

/// Pre-norm self-attention block over `x: (T, d)`.
pub fn encoder_block(g: &mut Graph, p: &str, x: Var, spec: &EncoderSpec) -> Result<Var, NumericError> {
    let h = layer_norm(g, &join(p, "ln1"), x)?;
    let a = mha(g, &join(p, "attn"), h, h, spec.heads)?;
    let x = g.add(x, a)?;
    let h = layer_norm(g, &join(p, "ln2"), x)?;
    let f = feed_forward(g, &join(p, "ff"), h, spec.d_model, spec.d_ff)?;
    g.add(x, f)
}

/// Encodes `tokens + pos_enc` with the self-attention stack, then lets the
/// readout token cross-attend to the result. Returns the readout embedding
/// as a `(1, d)` row.
pub fn attention_encode(
    g: &mut Graph,
    prefix: &str,
    tokens: Var,
    pos_enc: Var,
    readout_init: Var,
    spec: &EncoderSpec,
) -> Result<Var, NumericError> {
    let t = g.value(tokens).rows();
    if t == 0 {
        return Err(NumericError::EmptySequence);
    }
    let d = g.value(tokens).last_dim();
    if d != spec.d_model || g.value(readout_init).numel() != d {
        return Err(NumericError::ShapeMismatch {
            op: "attention_encode",
            expected: alloc::vec![t, spec.d_model],
            got: g.shape(tokens).to_vec(),
        });
    }
    let mut x = g.add(tokens, pos_enc)?;
    for b in 0..spec.blocks {
        x = encoder_block(g, &join_idx(&join(prefix, "enc"), b), x, spec)?;
    }
    let p = join(prefix, "dec");
    let r = if g.shape(readout_init).len() == 2 {
        readout_init
    } else {
        g.reshape(readout_init, &[1, d])?
    };
    let rq = layer_norm(g, &join(&p, "lnq"), r)?;
    let mem = layer_norm(g, &join(&p, "lnm"), x)?;
    let a = mha(g, &join(&p, "attn"), rq, mem, spec.heads)?;
    let r = g.add(r, a)?;
    let h = layer_norm(g, &join(&p, "ln2"), r)?;
    let f = feed_forward(g, &join(&p, "ff"), h, spec.d_model, spec.d_ff)?;
    let r = g.add(r, f)?;
    layer_norm(g, &join(&p, "lnf"), r)
}

/// Geometry of a 2-D convolution over an `(H*W, C)` row-major image.
#[derive(Debug, Clone, Copy)]
pub struct Conv2d {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.h + 2 * self.pad - self.kernel) / self.stride + 1,
            (self.w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    pub fn declare(&self, init: &mut Init, prefix: &str) -> Result<(), NumericError> {
        init.linear(prefix, self.kernel * self.kernel * self.cin, self.cout)
    }

    fn im2col_index(&self) -> Vec<Option<u32>> {
        let (ho, wo) = self.out_hw();
        let k = self.kernel;
        let mut idx = Vec::with_capacity(ho * wo * k * k);
        for oy in 0..ho {
            for ox in 0..wo {
                for ky in 0..k {
                    for kx in 0..k {
                        let y = (oy * self.stride + ky) as isize - self.pad as isize;
                        let x = (ox * self.stride + kx) as isize - self.pad as isize;
                        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
                            idx.push(None);
                        } else {
                            idx.push(Some((y as usize * self.w + x as usize) as u32));
                        }
                    }
                }
            }
        }
        idx
    }

    /// `x: (H*W, cin)` → `(Ho*Wo, cout)`.
    pub fn apply(&self, g: &mut Graph, prefix: &str, x: Var) -> Result<Var, NumericError> {
        if g.shape(x) != [self.h * self.w, self.cin] {
            return Err(NumericError::ShapeMismatch {
                op: "conv2d",
                expected: alloc::vec![self.h * self.w, self.cin],
                got: g.shape(x).to_vec(),
            });
        }
        let (ho, wo) = self.out_hw();
        let cols = g.gather_rows(x, &self.im2col_index())?;
        let cols = g.reshape(cols, &[ho * wo, self.kernel * self.kernel * self.cin])?;
        linear(g, prefix, cols)
    }
}

/// Flattens any tensor into a single `(1, n)` row.
pub fn flatten_row(g: &mut Graph, x: Var) -> Result<Var, NumericError> {
    let n = g.value(x).numel();
    g.reshape(x, &[1, n])
}

/// Row of zeros as a constant input.
pub fn zeros_row(g: &mut Graph, width: usize) -> Result<Var, NumericError> {
    g.input(Tensor::zeros(&[1, width]))
}

pub fn concat_cols(g: &mut Graph, parts: &[Var]) -> Result<Var, NumericError> {
    g.concat(parts, Axis::Cols)
}

pub fn name(parts: &[&str]) -> String {
    parts.join(".")
}
