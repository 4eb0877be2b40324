//! Deterministic single-sample forward inference.
//!
//! Activations are `f32`; every dot product and window sum is accumulated in
//! `f64` and rounded once when stored.

use crate::error::{Error, Result};
use crate::model::{LayerSpec, ModelGraph};
use crate::tensor::Tensor;

/// Output of every layer for one input, in layer order.
#[derive(Debug, Clone)]
pub struct Trace {
    outputs: Vec<Tensor>,
}

impl Trace {
    pub fn outputs(&self) -> &[Tensor] {
        &self.outputs
    }

    pub fn output(&self) -> Option<&Tensor> {
        self.outputs.last()
    }
}

impl ModelGraph {
    /// Runs the model on one input.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut trace = self.forward_trace(input)?;
        Ok(trace.outputs.pop().unwrap_or_else(|| input.clone()))
    }

    /// Runs the model and keeps every intermediate output.
    pub fn forward_trace(&self, input: &Tensor) -> Result<Trace> {
        self.check_input(input)?;
        let outputs = self.run(0, input, &[])?;
        Ok(Trace { outputs })
    }

    /// Re-runs layers `start..` reusing `trace` (recorded on a model that
    /// agrees with `self` on layers `..start`) for everything before `start`.
    pub fn forward_from(&self, input: &Tensor, trace: &Trace, start: usize) -> Result<Tensor> {
        self.check_input(input)?;
        if start > self.layers().len() || trace.outputs.len() < start {
            return Err(Error::InvalidArgument(format!(
                "cannot resume at layer {start} from a trace of {} layers",
                trace.outputs.len()
            )));
        }
        if start == self.layers().len() {
            return Ok(trace
                .outputs
                .get(start.wrapping_sub(1))
                .unwrap_or(input)
                .clone());
        }
        let mut tail = self.run(start, input, &trace.outputs[..start])?;
        Ok(tail.pop().expect("at least one layer ran"))
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape() {
            return Err(Error::InputShape {
                expected: self.input_shape().to_vec(),
                got: input.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn run(&self, start: usize, input: &Tensor, prefix: &[Tensor]) -> Result<Vec<Tensor>> {
        let layers = self.layers();
        let mut produced: Vec<Tensor> = Vec::with_capacity(layers.len() - start);
        for (idx, layer) in layers.iter().enumerate().skip(start) {
            let lookup = |i: usize| -> Option<&Tensor> {
                if i < start {
                    prefix.get(i)
                } else {
                    produced.get(i - start)
                }
            };
            let current = if idx == 0 {
                input
            } else {
                lookup(idx - 1).expect("previous layer output recorded")
            };
            let out = apply_layer(idx, layer, current, lookup)?;
            produced.push(out);
        }
        Ok(produced)
    }

    /// `‖f(x; self) − f(x; other)‖²` for two structurally identical models.
    pub fn output_sq_error(&self, other: &ModelGraph, input: &Tensor) -> Result<f64> {
        self.check_same_structure(other)?;
        let a = self.forward(input)?;
        let b = other.forward(input)?;
        a.sq_distance(&b)
    }
}

fn apply_layer<'a>(
    idx: usize,
    layer: &LayerSpec,
    x: &Tensor,
    lookup: impl Fn(usize) -> Option<&'a Tensor>,
) -> Result<Tensor> {
    let mismatch = |detail: String| Error::ShapeMismatch { layer: idx, detail };
    let skip_shape = match layer {
        LayerSpec::AddSkip { source } if *source < idx => lookup(*source).map(Tensor::shape),
        _ => None,
    };
    let out_shape = layer
        .output_shape(x.shape(), skip_shape)
        .map_err(mismatch)?;
    let out = match layer {
        LayerSpec::Dense { weight, bias } => dense(weight, bias.as_ref(), x),
        LayerSpec::Conv2d {
            weight,
            bias,
            stride,
            padding,
        } => conv2d(weight, bias.as_ref(), *stride, *padding, x, &out_shape),
        LayerSpec::Relu => {
            let data = x
                .data()
                .iter()
                .map(|&v| if v > 0.0 { v } else { 0.0 })
                .collect();
            Tensor::new(out_shape, data)?
        }
        LayerSpec::MaxPool2d { kernel, stride } => pool(x, *kernel, *stride, &out_shape, Pool::Max),
        LayerSpec::AvgPool2d { kernel, stride } => pool(x, *kernel, *stride, &out_shape, Pool::Avg),
        LayerSpec::Flatten => x.clone().reshape(out_shape),
        LayerSpec::AddSkip { source } => {
            let src = lookup(*source).expect("checked by output_shape");
            let data = x
                .data()
                .iter()
                .zip(src.data())
                .map(|(a, b)| a + b)
                .collect();
            Tensor::new(out_shape, data)?
        }
    };
    Ok(out)
}

fn dense(weight: &Tensor, bias: Option<&Tensor>, x: &Tensor) -> Tensor {
    let (out, inp) = (weight.shape()[0], weight.shape()[1]);
    let w = weight.data();
    let xs = x.data();
    let data = (0..out)
        .map(|o| {
            let row = &w[o * inp..(o + 1) * inp];
            let mut acc: f64 = bias.map_or(0.0, |b| b.data()[o] as f64);
            for (wi, xi) in row.iter().zip(xs) {
                acc += *wi as f64 * *xi as f64;
            }
            acc as f32
        })
        .collect();
    Tensor::vector(data)
}

fn conv2d(
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
    x: &Tensor,
    out_shape: &[usize],
) -> Tensor {
    let ws = weight.shape();
    let (oc, ic, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    let (h, w) = (x.shape()[1], x.shape()[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let xd = x.data();
    let positions = oh * ow;
    let taps = ic * kh * kw;
    // Patch matrix, one row per tap in (channel, ky, kx) order; padding reads zero.
    let mut cols = vec![0.0f64; taps * positions];
    for c in 0..ic {
        for ky in 0..kh {
            for kx in 0..kw {
                let row = &mut cols[((c * kh + ky) * kw + kx) * positions..][..positions];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix >= 0 && ix < w as isize {
                            row[oy * ow + ox] = xd[(c * h + iy as usize) * w + ix as usize] as f64;
                        }
                    }
                }
            }
        }
    }
    let mut data = Vec::with_capacity(oc * positions);
    let mut acc = vec![0.0f64; positions];
    for (o, wo) in weight.data().chunks_exact(taps).enumerate() {
        acc.fill(bias.map_or(0.0, |b| b.data()[o] as f64));
        for (&wv, row) in wo.iter().zip(cols.chunks_exact(positions)) {
            let wv = wv as f64;
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += wv * v;
            }
        }
        data.extend(acc.iter().map(|&v| v as f32));
    }
    Tensor::new(out_shape.to_vec(), data).expect("conv output shape")
}

#[derive(Clone, Copy)]
enum Pool {
    Max,
    Avg,
}

fn pool(x: &Tensor, kernel: usize, stride: usize, out_shape: &[usize], mode: Pool) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let xd = x.data();
    let mut data = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let window = (0..kernel).flat_map(|ky| {
                    let row = (ch * h + oy * stride + ky) * w + ox * stride;
                    xd[row..row + kernel].iter().copied()
                });
                let v = match mode {
                    Pool::Max => window.fold(f32::NEG_INFINITY, f32::max),
                    Pool::Avg => {
                        let sum: f64 = window.map(f64::from).sum();
                        (sum / (kernel * kernel) as f64) as f32
                    }
                };
                data.push(v);
            }
        }
    }
    Tensor::new(out_shape.to_vec(), data).expect("pool output shape")
}
