//! Compact U-Net used as the learnable collaborative filter.
//!
//! A stack of `K` patches enters as `K` channels. With `widths = [w0, .., wd]`
//! the network is
//!
//! ```text
//! level i < d : conv3x3(in -> wi) relu, conv3x3(wi -> wi) relu, maxpool2
//! bottom      : conv3x3(w(d-1) -> wd) relu
//! level i < d : upsample2, concat skip i, conv3x3(w(i+1) + wi -> wi) relu
//! output      : conv3x3(w0 -> K), linear
//! ```
//!
//! and predicts the clean stack directly. The default `[16, 32]` gives the
//! two-level 16/32-channel network.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::matching::StackBatch;
use crate::rng::Rng;
use crate::tensor::{Tape, Tensor, Var};

const KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Descriptor {
    /// Input and output channels: the group size `K`, or 1 on whole images.
    pub channels: usize,
    /// Feature widths from the top level down to the bottleneck.
    pub widths: Vec<usize>,
}

impl Descriptor {
    pub fn new(channels: usize, widths: Vec<usize>) -> Result<Self> {
        let d = Descriptor { channels, widths };
        d.validate()?;
        Ok(d)
    }

    pub fn compact(channels: usize) -> Self {
        Descriptor {
            channels,
            widths: vec![16, 32],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "descriptor needs channels >= 1 and at least two non-zero widths, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Number of 2x downsamplings.
    pub fn levels(&self) -> usize {
        self.widths.len() - 1
    }

    /// Spatial extents must be multiples of this.
    pub fn spatial_multiple(&self) -> usize {
        1 << self.levels()
    }

    /// `(name, in_channels, out_channels)` of every convolution, in
    /// execution order.
    pub fn layers(&self) -> Vec<(String, usize, usize)> {
        let w = &self.widths;
        let d = self.levels();
        let mut layers = Vec::new();
        let mut input = self.channels;
        for (i, &wi) in w.iter().enumerate().take(d) {
            layers.push((format!("enc{i}.conv1"), input, wi));
            layers.push((format!("enc{i}.conv2"), wi, wi));
            input = wi;
        }
        layers.push(("mid.conv".to_string(), w[d - 1], w[d]));
        let mut below = w[d];
        for i in (0..d).rev() {
            layers.push((format!("dec{i}.conv"), below + w[i], w[i]));
            below = w[i];
        }
        layers.push(("out.conv".to_string(), w[0], self.channels));
        layers
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|(_, cin, cout)| cin * cout * KERNEL * KERNEL + cout)
            .sum()
    }
}

/// Named parameter tensors in a fixed order: for each layer, `.weight`
/// (`[out, in, 3, 3]`) then `.bias` (`[out]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    descriptor: Descriptor,
    tensors: Vec<(String, Tensor)>,
}

impl ModelParams {
    pub fn from_tensors(descriptor: Descriptor, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        descriptor.validate()?;
        let expected = Self::expected_shapes(&descriptor);
        if tensors.len() != expected.len() {
            return Err(Error::InvalidArgument(format!(
                "descriptor needs {} tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((name, t), (ename, eshape)) in tensors.iter().zip(&expected) {
            if name != ename || t.shape() != eshape.as_slice() {
                return Err(Error::InvalidArgument(format!(
                    "expected {ename} {eshape:?}, found {name} {:?}",
                    t.shape()
                )));
            }
            if t.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("model parameters"));
            }
        }
        Ok(ModelParams { descriptor, tensors })
    }

    fn expected_shapes(d: &Descriptor) -> Vec<(String, Vec<usize>)> {
        d.layers()
            .into_iter()
            .flat_map(|(name, cin, cout)| {
                [
                    (format!("{name}.weight"), vec![cout, cin, KERNEL, KERNEL]),
                    (format!("{name}.bias"), vec![cout]),
                ]
            })
            .collect()
    }

    /// Glorot-uniform kernels, `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`,
    /// and zero biases.
    pub fn init(descriptor: &Descriptor, seed: u64) -> Result<Self> {
        descriptor.validate()?;
        let mut rng = Rng::new(seed);
        let mut tensors = Vec::new();
        for (name, shape) in Self::expected_shapes(descriptor) {
            let t = if shape.len() == 4 {
                let bound = glorot_bound(&shape);
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.uniform_range(-bound, bound) as f32).collect();
                Tensor::new(shape, data)?
            } else {
                Tensor::zeros(&shape)
            };
            tensors.push((name, t));
        }
        Self::from_tensors(descriptor.clone(), tensors)
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Puts every parameter on `tape`, in storage order.
    pub fn register(&self, tape: &mut Tape, requires_grad: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|(_, t)| {
                let mut t = t.clone();
                t.set_requires_grad(requires_grad);
                tape.leaf(t)
            })
            .collect()
    }

    /// Records the network on `tape` for an `[N, K, H, W]` input.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], input: Var) -> Result<Var> {
        let shape = tape.shape(input).to_vec();
        let m = self.descriptor.spatial_multiple();
        match shape.as_slice() {
            &[_, c, h, w] if c == self.descriptor.channels && h % m == 0 && w % m == 0 => {}
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "network expects [N, {}, H, W] with H, W multiples of {m}, got {shape:?}",
                    self.descriptor.channels
                )))
            }
        }
        let mut p = params.iter().copied();
        let mut conv = |tape: &mut Tape, x: Var, relu: bool| -> Result<Var> {
            let (k, b) = (p.next().expect("kernel"), p.next().expect("bias"));
            let y = tape.conv2d(x, k, b, KERNEL / 2)?;
            Ok(if relu { tape.relu(y) } else { y })
        };
        let d = self.descriptor.levels();
        let mut skips = Vec::with_capacity(d);
        let mut x = input;
        for _ in 0..d {
            x = conv(tape, x, true)?;
            x = conv(tape, x, true)?;
            skips.push(x);
            x = tape.maxpool2(x)?;
        }
        x = conv(tape, x, true)?;
        for skip in skips.into_iter().rev() {
            let up = tape.upsample2_nearest(x)?;
            let cat = tape.concat_channels(up, skip)?;
            x = conv(tape, cat, true)?;
        }
        conv(tape, x, false)
    }

    /// Inference on a raw `[N, K, H, W]` tensor.
    pub fn infer(&self, input: Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params = self.register(&mut tape, false);
        let x = tape.leaf(input);
        let y = self.forward(&mut tape, &params, x)?;
        Ok(tape.take(y))
    }

    /// Denoises every group of `stacks` (groups become the batch axis).
    pub fn forward_stack(&self, stacks: &StackBatch) -> Result<StackBatch> {
        let [g, k, p, _] = stacks.shape();
        if k != self.descriptor.channels {
            return Err(Error::InvalidArgument(format!(
                "network built for {} patches per group, stack has {k}",
                self.descriptor.channels
            )));
        }
        const CHUNK: usize = 64;
        let per = k * p * p;
        let outs: Vec<Vec<f32>> = stacks
            .data()
            .par_chunks(CHUNK * per)
            .map(|chunk| {
                let n = chunk.len() / per;
                let t = Tensor::new(vec![n, k, p, p], chunk.to_vec())?;
                Ok(self.infer(t)?.into_data())
            })
            .collect::<Result<_>>()?;
        debug_assert_eq!(outs.iter().map(Vec::len).sum::<usize>(), g * per);
        StackBatch::new(stacks.plan().clone(), outs.concat())
    }

    /// Applies a single-channel network to a whole image, reflect-padding
    /// to the required multiple and cropping back.
    pub fn forward_image(&self, img: &Image) -> Result<Image> {
        if self.descriptor.channels != 1 {
            return Err(Error::InvalidArgument(format!(
                "image mode needs a 1-channel network, this one has {}",
                self.descriptor.channels
            )));
        }
        let m = self.descriptor.spatial_multiple();
        let (h, w) = img.shape();
        let (hp, wp) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        let padded = img.pad_reflect(hp, wp)?;
        let out = self.infer(Tensor::new(vec![1, 1, hp, wp], padded.into_pixels())?)?;
        Image::new(hp, wp, out.into_data())?.crop(0, 0, h, w)
    }
}

fn glorot_bound(shape: &[usize]) -> f64 {
    let receptive: usize = shape[2..].iter().product();
    let fan_in = shape[1] * receptive;
    let fan_out = shape[0] * receptive;
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
