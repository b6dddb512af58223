// Raw kernels on row-major slices. Shape checking happens in the tape.

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub k: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.h + 2 * self.pad + 1 - self.k
    }

    pub fn out_w(&self) -> usize {
        self.w + 2 * self.pad + 1 - self.k
    }

    /// Output index range `[lo, hi)` along an axis of input extent `len` for
    /// kernel tap `tap`, such that `o + tap - pad` stays inside the input.
    fn valid(&self, len: usize, out_len: usize, tap: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(tap);
        let hi = (len + self.pad).saturating_sub(tap).min(out_len);
        (lo, hi.max(lo))
    }
}

pub(crate) fn conv2d_forward(g: &ConvGeom, input: &[f32], kernel: &[f32], bias: &[f32]) -> Vec<f32> {
    let (ho, wo) = (g.out_h(), g.out_w());
    let in_plane = g.h * g.w;
    let out_plane = ho * wo;
    let mut out = vec![0.0f32; g.n * g.f * out_plane];
    for n in 0..g.n {
        let x = &input[n * g.c * in_plane..(n + 1) * g.c * in_plane];
        for f in 0..g.f {
            let o = &mut out[(n * g.f + f) * out_plane..(n * g.f + f + 1) * out_plane];
            o.fill(bias[f]);
            for c in 0..g.c {
                let xc = &x[c * in_plane..(c + 1) * in_plane];
                let kc = &kernel[(f * g.c + c) * g.k * g.k..(f * g.c + c + 1) * g.k * g.k];
                for ky in 0..g.k {
                    let (y0, y1) = g.valid(g.h, ho, ky);
                    for kx in 0..g.k {
                        let wgt = kc[ky * g.k + kx];
                        let (x0, x1) = g.valid(g.w, wo, kx);
                        if x0 >= x1 {
                            continue;
                        }
                        for oy in y0..y1 {
                            let iy = oy + ky - g.pad;
                            let src = &xc[iy * g.w + x0 + kx - g.pad..iy * g.w + x1 + kx - g.pad];
                            let dst = &mut o[oy * wo + x0..oy * wo + x1];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wgt * s;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f32>>,
    pub kernel: Option<Vec<f32>>,
    pub bias: Option<Vec<f32>>,
}

pub(crate) fn conv2d_backward(
    g: &ConvGeom,
    input: &[f32],
    kernel: &[f32],
    grad_out: &[f32],
    want: [bool; 3],
) -> ConvGrads {
    let (ho, wo) = (g.out_h(), g.out_w());
    let in_plane = g.h * g.w;
    let out_plane = ho * wo;
    let mut gin = want[0].then(|| vec![0.0f32; input.len()]);
    let mut gk = want[1].then(|| vec![0.0f32; kernel.len()]);
    let mut gb = want[2].then(|| vec![0.0f32; g.f]);

    for n in 0..g.n {
        for f in 0..g.f {
            let go = &grad_out[(n * g.f + f) * out_plane..(n * g.f + f + 1) * out_plane];
            if let Some(gb) = gb.as_mut() {
                gb[f] += go.iter().sum::<f32>();
            }
            for c in 0..g.c {
                let in_off = (n * g.c + c) * in_plane;
                let k_off = (f * g.c + c) * g.k * g.k;
                for ky in 0..g.k {
                    let (y0, y1) = g.valid(g.h, ho, ky);
                    for kx in 0..g.k {
                        let (x0, x1) = g.valid(g.w, wo, kx);
                        if x0 >= x1 {
                            continue;
                        }
                        let wgt = kernel[k_off + ky * g.k + kx];
                        let mut acc = 0.0f32;
                        for oy in y0..y1 {
                            let iy = oy + ky - g.pad;
                            let start = in_off + iy * g.w + x0 + kx - g.pad;
                            let span = x1 - x0;
                            let gorow = &go[oy * wo + x0..oy * wo + x1];
                            if gk.is_some() {
                                let xs = &input[start..start + span];
                                acc += gorow.iter().zip(xs).map(|(a, b)| a * b).sum::<f32>();
                            }
                            if let Some(gin) = gin.as_mut() {
                                let dst = &mut gin[start..start + span];
                                for (d, s) in dst.iter_mut().zip(gorow) {
                                    *d += wgt * s;
                                }
                            }
                        }
                        if let Some(gk) = gk.as_mut() {
                            gk[k_off + ky * g.k + kx] += acc;
                        }
                    }
                }
            }
        }
    }
    ConvGrads {
        input: gin,
        kernel: gk,
        bias: gb,
    }
}

/// 2x2 max pooling. Returns the pooled values and, per output cell, the flat
/// input index that won (first in row-major scan on ties).
pub(crate) fn maxpool2_forward(planes: usize, h: usize, w: usize, input: &[f32]) -> (Vec<f32>, Vec<u32>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(planes * ho * wo);
    let mut arg = Vec::with_capacity(planes * ho * wo);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

pub(crate) fn upsample2_forward(planes: usize, h: usize, w: usize, input: &[f32]) -> Vec<f32> {
    let wo = 2 * w;
    let mut out = vec![0.0f32; planes * 4 * h * w];
    for p in 0..planes {
        let src = &input[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * 4 * h * w..(p + 1) * 4 * h * w];
        for y in 0..h {
            for x in 0..w {
                let v = src[y * w + x];
                let o = 2 * y * wo + 2 * x;
                dst[o] = v;
                dst[o + 1] = v;
                dst[o + wo] = v;
                dst[o + wo + 1] = v;
            }
        }
    }
    out
}

pub(crate) fn upsample2_backward(planes: usize, h: usize, w: usize, grad_out: &[f32]) -> Vec<f32> {
    let wo = 2 * w;
    let mut gin = vec![0.0f32; planes * h * w];
    for p in 0..planes {
        let src = &grad_out[p * 4 * h * w..(p + 1) * 4 * h * w];
        for y in 0..h {
            for x in 0..w {
                let o = 2 * y * wo + 2 * x;
                gin[p * h * w + y * w + x] = src[o] + src[o + 1] + src[o + wo] + src[o + wo + 1];
            }
        }
    }
    gin
}

/// Channel concatenation of `[N, ca, ...]` and `[N, cb, ...]` with `plane`
/// spatial elements per channel.
pub(crate) fn concat_forward(n: usize, ca: usize, cb: usize, plane: usize, a: &[f32], b: &[f32]) -> Vec<f32> {
    let mut out = Vec::with_capacity(n * (ca + cb) * plane);
    for i in 0..n {
        out.extend_from_slice(&a[i * ca * plane..(i + 1) * ca * plane]);
        out.extend_from_slice(&b[i * cb * plane..(i + 1) * cb * plane]);
    }
    out
}
