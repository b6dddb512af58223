use std::sync::Arc;

use super::ops::{self, ConvGeom};
use super::{dims4, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A fixed linear operator that can sit inside a recorded computation.
///
/// Its backward rule is the adjoint, so implementations must satisfy
/// `<apply(x), y> == <x, adjoint(y)>`.
fn send(grads: &mut [Option<Vec<f32>>], to: Var, contrib: Vec<f32>) {
    match &mut grads[to.0] {
        Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(contrib),
    }
}

pub trait LinearMap: Send + Sync {
    fn input_shape(&self) -> Vec<usize>;
    fn output_shape(&self) -> Vec<usize>;
    fn apply(&self, input: &[f32]) -> Vec<f32>;
    fn adjoint(&self, output_grad: &[f32]) -> Vec<f32>;
}

enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
    },
    Relu(Var),
    MaxPool2 {
        input: Var,
        argmax: Vec<u32>,
    },
    Upsample2 {
        input: Var,
        planes: usize,
        h: usize,
        w: usize,
    },
    Concat {
        a: Var,
        b: Var,
        n: usize,
        ca: usize,
        cb: usize,
        plane: usize,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Sum(Var),
    Mse {
        pred: Var,
        target: Arc<[f32]>,
    },
    Linear {
        input: Var,
        map: Arc<dyn LinearMap>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    // true when this node or anything upstream of it is a grad-requiring leaf
    tracked: bool,
}

/// Records values and the operations that produced them, in execution
/// order. Since a node can only reference nodes created before it, the
/// record is always topologically sorted.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds an input. It collects gradients iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let tracked = tensor.requires_grad;
        self.push(tensor, Op::Leaf, tracked)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    /// Gradient accumulated on a leaf by the last [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.nodes[v.0].value.grad()
    }

    /// Removes a leaf's tensor (with its gradient) from the tape.
    pub fn take(&mut self, v: Var) -> Tensor {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::zeros(&[0]))
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn data(&self, v: Var) -> &[f32] {
        &self.nodes[v.0].value.data
    }

    /// Cross-correlation of `[N, C, H, W]` input with `[F, C, k, k]` kernels
    /// plus a per-filter bias, zero padded by `padding` on every side.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, padding: usize) -> Result<Var> {
        let [n, c, h, w] = dims4(self.shape(input), "conv2d input")?;
        let [f, kc, k, k2] = dims4(self.shape(kernel), "conv2d kernel")?;
        if kc != c || k != k2 {
            return Err(Error::shape("conv2d", self.shape(input), self.shape(kernel)));
        }
        if k % 2 == 0 {
            return Err(Error::InvalidArgument(format!("conv2d kernel size {k} must be odd")));
        }
        if self.shape(bias) != [f] {
            return Err(Error::shape("conv2d bias", self.shape(kernel), self.shape(bias)));
        }
        if h + 2 * padding < k || w + 2 * padding < k {
            return Err(Error::shape("conv2d", self.shape(input), self.shape(kernel)));
        }
        let geom = ConvGeom {
            n,
            c,
            h,
            w,
            f,
            k,
            pad: padding,
        };
        let out = ops::conv2d_forward(&geom, self.data(input), self.data(kernel), self.data(bias));
        let value = Tensor::new(vec![n, f, geom.out_h(), geom.out_w()], out)?;
        let tracked = self.tracked(input) || self.tracked(kernel) || self.tracked(bias);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
            tracked,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = &self.nodes[x.0].value;
        let data = src.data.iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(src.shape.clone(), data).expect("same shape");
        let tracked = self.tracked(x);
        self.push(value, Op::Relu(x), tracked)
    }

    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = dims4(self.shape(x), "maxpool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "maxpool2 needs even spatial extents, got {h}x{w}"
            )));
        }
        let (out, argmax) = ops::maxpool2_forward(n * c, h, w, self.data(x));
        let value = Tensor::new(vec![n, c, h / 2, w / 2], out)?;
        let tracked = self.tracked(x);
        Ok(self.push(value, Op::MaxPool2 { input: x, argmax }, tracked))
    }

    pub fn upsample2_nearest(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = dims4(self.shape(x), "upsample2_nearest")?;
        let out = ops::upsample2_forward(n * c, h, w, self.data(x));
        let value = Tensor::new(vec![n, c, 2 * h, 2 * w], out)?;
        let tracked = self.tracked(x);
        Ok(self.push(
            value,
            Op::Upsample2 {
                input: x,
                planes: n * c,
                h,
                w,
            },
            tracked,
        ))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let [n, ca, h, w] = dims4(self.shape(a), "concat_channels")?;
        let [nb, cb, hb, wb] = dims4(self.shape(b), "concat_channels")?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::shape("concat_channels", self.shape(a), self.shape(b)));
        }
        let out = ops::concat_forward(n, ca, cb, h * w, self.data(a), self.data(b));
        let value = Tensor::new(vec![n, ca + cb, h, w], out)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(
            value,
            Op::Concat {
                a,
                b,
                n,
                ca,
                cb,
                plane: h * w,
            },
            tracked,
        ))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Add(a, b), tracked))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::Mul(a, b), tracked))
    }

    pub fn scale(&mut self, x: Var, factor: f32) -> Var {
        let data = self.data(x).iter().map(|v| v * factor).collect();
        let value = Tensor::new(self.shape(x).to_vec(), data).expect("same shape");
        let tracked = self.tracked(x);
        self.push(value, Op::Scale(x, factor), tracked)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().map(|&v| v as f64).sum::<f64>() as f32;
        let tracked = self.tracked(x);
        self.push(Tensor::scalar(s), Op::Sum(x), tracked)
    }

    /// Mean squared difference between `pred` and a constant target.
    pub fn mse(&mut self, pred: Var, target: &[f32]) -> Result<Var> {
        if self.data(pred).len() != target.len() || target.is_empty() {
            return Err(Error::shape("mse", self.shape(pred), &[target.len()]));
        }
        let n = target.len() as f64;
        let loss = self
            .data(pred)
            .iter()
            .zip(target)
            .map(|(&p, &t)| {
                let d = (p - t) as f64;
                d * d
            })
            .sum::<f64>()
            / n;
        let tracked = self.tracked(pred);
        Ok(self.push(
            Tensor::scalar(loss as f32),
            Op::Mse {
                pred,
                target: target.into(),
            },
            tracked,
        ))
    }

    pub fn linear(&mut self, x: Var, map: Arc<dyn LinearMap>) -> Result<Var> {
        let expected = map.input_shape();
        if self.shape(x) != expected.as_slice() {
            return Err(Error::shape("linear map", self.shape(x), &expected));
        }
        let out = map.apply(self.data(x));
        let value = Tensor::new(map.output_shape(), out)?;
        let tracked = self.tracked(x);
        Ok(self.push(value, Op::Linear { input: x, map }, tracked))
    }

    /// Reverse pass from a scalar `loss`. Gradients are summed into the
    /// `grad` buffer of every grad-requiring leaf that `loss` depends on.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.tracked(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].tracked {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.nodes[i].value.accumulate_grad(&g);
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf => unreachable!(),
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    geom,
                } => {
                    let want = [self.tracked(*input), self.tracked(*kernel), self.tracked(*bias)];
                    let cg = ops::conv2d_backward(geom, self.data(*input), self.data(*kernel), &g, want);
                    if let Some(gi) = cg.input {
                        send(&mut grads, *input, gi);
                    }
                    if let Some(gk) = cg.kernel {
                        send(&mut grads, *kernel, gk);
                    }
                    if let Some(gb) = cg.bias {
                        send(&mut grads, *bias, gb);
                    }
                }
                Op::Relu(x) => {
                    let gx = self
                        .data(*x)
                        .iter()
                        .zip(&g)
                        .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                        .collect();
                    send(&mut grads, *x, gx);
                }
                Op::MaxPool2 { input, argmax } => {
                    let mut gx = vec![0.0f32; self.data(*input).len()];
                    for (&idx, &d) in argmax.iter().zip(&g) {
                        gx[idx as usize] += d;
                    }
                    send(&mut grads, *input, gx);
                }
                Op::Upsample2 { input, planes, h, w } => {
                    let gx = ops::upsample2_backward(*planes, *h, *w, &g);
                    send(&mut grads, *input, gx);
                }
                Op::Concat { a, b, n, ca, cb, plane } => {
                    let (a, b) = (*a, *b);
                    let (ta, tb) = (self.tracked(a), self.tracked(b));
                    let mut ga = Vec::with_capacity(if ta { n * ca * plane } else { 0 });
                    let mut gb = Vec::with_capacity(if tb { n * cb * plane } else { 0 });
                    for chunk in g.chunks((ca + cb) * plane) {
                        if ta {
                            ga.extend_from_slice(&chunk[..ca * plane]);
                        }
                        if tb {
                            gb.extend_from_slice(&chunk[ca * plane..]);
                        }
                    }
                    if ta {
                        send(&mut grads, a, ga);
                    }
                    if tb {
                        send(&mut grads, b, gb);
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.tracked(a) {
                        send(&mut grads, a, g.clone());
                    }
                    if self.tracked(b) {
                        send(&mut grads, b, g);
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.tracked(a) {
                        let ga = g.iter().zip(self.data(b)).map(|(d, y)| d * y).collect();
                        send(&mut grads, a, ga);
                    }
                    if self.tracked(b) {
                        let gb = g.iter().zip(self.data(a)).map(|(d, x)| d * x).collect();
                        send(&mut grads, b, gb);
                    }
                }
                Op::Scale(x, factor) => {
                    let gx = g.iter().map(|d| d * factor).collect();
                    send(&mut grads, *x, gx);
                }
                Op::Sum(x) => {
                    let gx = vec![g[0]; self.data(*x).len()];
                    send(&mut grads, *x, gx);
                }
                Op::Mse { pred, target } => {
                    let scale = 2.0 * g[0] / target.len() as f32;
                    let gp = self
                        .data(*pred)
                        .iter()
                        .zip(target.iter())
                        .map(|(p, t)| scale * (p - t))
                        .collect();
                    send(&mut grads, *pred, gp);
                }
                Op::Linear { input, map } => {
                    let gx = map.adjoint(&g);
                    send(&mut grads, *input, gx);
                }
            }
        }
        Ok(())
    }
}
