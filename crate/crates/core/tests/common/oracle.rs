//! Straightforward f64 reference implementations used as test oracles.
//!
//! Nothing here shares code with the library: loops are naive and every
//! value is f64, so central finite differences taken through these
//! functions are accurate to far better than the f32 tolerances checked.
#![allow(dead_code)]

/// `[n, c, h, w]` activations.
#[derive(Debug, Clone, PartialEq)]
pub struct T4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl T4 {
    pub fn new(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * c * h * w);
        T4 { n, c, h, w, data }
    }

    fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }
}

/// 3×3 convolution, zero padding 1, weights `[cout, cin, 3, 3]`.
pub fn conv3x3(x: &T4, weight: &[f64], bias: &[f64]) -> T4 {
    let cout = bias.len();
    assert_eq!(weight.len(), cout * x.c * 9);
    let mut out = vec![0.0; x.n * cout * x.h * x.w];
    for n in 0..x.n {
        for o in 0..cout {
            for y in 0..x.h {
                for xx in 0..x.w {
                    let mut acc = bias[o];
                    for i in 0..x.c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (sy, sx) = (y as isize + ky as isize - 1, xx as isize + kx as isize - 1);
                                if sy < 0 || sx < 0 || sy >= x.h as isize || sx >= x.w as isize {
                                    continue;
                                }
                                acc += weight[((o * x.c + i) * 3 + ky) * 3 + kx] * x.at(n, i, sy as usize, sx as usize);
                            }
                        }
                    }
                    out[((n * cout + o) * x.h + y) * x.w + xx] = acc;
                }
            }
        }
    }
    T4::new(x.n, cout, x.h, x.w, out)
}

/// ReLU; records which units are active in `signature`.
pub fn relu(x: &T4, signature: &mut Vec<u32>) -> T4 {
    let mut y = x.clone();
    for v in &mut y.data {
        signature.push((*v > 0.0) as u32);
        *v = v.max(0.0);
    }
    y
}

/// 2×2 max pooling; records the winning offset of each window.
pub fn maxpool2(x: &T4, signature: &mut Vec<u32>) -> T4 {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut out = Vec::with_capacity(x.n * x.c * oh * ow);
    for n in 0..x.n {
        for c in 0..x.c {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = (f64::NEG_INFINITY, 0u32);
                    for (k, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                        let v = x.at(n, c, 2 * y + dy, 2 * xx + dx);
                        if v > best.0 {
                            best = (v, k as u32);
                        }
                    }
                    signature.push(best.1);
                    out.push(best.0);
                }
            }
        }
    }
    T4::new(x.n, x.c, oh, ow, out)
}

pub fn upsample2(x: &T4) -> T4 {
    let (h, w) = (x.h * 2, x.w * 2);
    let mut out = Vec::with_capacity(x.n * x.c * h * w);
    for n in 0..x.n {
        for c in 0..x.c {
            for y in 0..h {
                for xx in 0..w {
                    out.push(x.at(n, c, y / 2, xx / 2));
                }
            }
        }
    }
    T4::new(x.n, x.c, h, w, out)
}

/// Channel concatenation, `a` first.
pub fn concat(a: &T4, b: &T4) -> T4 {
    assert_eq!((a.n, a.h, a.w), (b.n, b.h, b.w));
    let plane = a.h * a.w;
    let mut out = Vec::with_capacity(a.data.len() + b.data.len());
    for n in 0..a.n {
        out.extend_from_slice(&a.data[n * a.c * plane..(n + 1) * a.c * plane]);
        out.extend_from_slice(&b.data[n * b.c * plane..(n + 1) * b.c * plane]);
    }
    T4::new(a.n, a.c + b.c, a.h, a.w, out)
}

/// The encoder-decoder: per level two conv+relu then a pool, a conv+relu
/// bottleneck, per level upsample, concat(up, skip), conv+relu, and a
/// linear output conv. `params` alternates weight and bias per layer in
/// execution order.
pub fn unet(widths: &[usize], params: &[Vec<f64>], x: &T4, signature: &mut Vec<u32>) -> T4 {
    let levels = widths.len() - 1;
    let mut p = params.chunks(2);
    let mut conv = |x: &T4| {
        let wb = p.next().expect("layer");
        conv3x3(x, &wb[0], &wb[1])
    };
    let mut skips = Vec::new();
    let mut h = x.clone();
    for _ in 0..levels {
        h = relu(&conv(&h), signature);
        h = relu(&conv(&h), signature);
        skips.push(h.clone());
        h = maxpool2(&h, signature);
    }
    h = relu(&conv(&h), signature);
    for skip in skips.iter().rev() {
        h = relu(&conv(&concat(&upsample2(&h), skip)), signature);
    }
    conv(&h)
}

/// `[groups, k, p, p]` stacks copied from a `w`-wide image.
pub fn gather(img: &[f64], w: usize, coords: &[(usize, usize)], p: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(coords.len() * p * p);
    for &(r, c) in coords {
        for dy in 0..p {
            for dx in 0..p {
                out.push(img[(r + dy) * w + c + dx]);
            }
        }
    }
    out
}

/// Weighted overlap average of patches back onto an `h x w` image.
pub fn aggregate(
    stacks: &[f64],
    coords: &[(usize, usize)],
    weights: &[f64],
    k: usize,
    p: usize,
    h: usize,
    w: usize,
) -> Vec<f64> {
    let mut num = vec![0.0; h * w];
    let mut den = vec![0.0; h * w];
    for (j, &(r, c)) in coords.iter().enumerate() {
        let wg = weights[j / k];
        for dy in 0..p {
            for dx in 0..p {
                num[(r + dy) * w + c + dx] += wg * stacks[(j * p + dy) * p + dx];
                den[(r + dy) * w + c + dx] += wg;
            }
        }
    }
    num.iter().zip(&den).map(|(n, d)| n / d).collect()
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

pub struct PlanGeometry<'a> {
    pub coords: &'a [(usize, usize)],
    pub weights: &'a [f64],
    pub k: usize,
    pub p: usize,
}

/// gather -> network -> aggregate -> MSE.
pub fn stack_pipeline_loss(
    widths: &[usize],
    params: &[Vec<f64>],
    noisy: &[f64],
    clean: &[f64],
    (h, w): (usize, usize),
    plan: &PlanGeometry,
    signature: &mut Vec<u32>,
) -> f64 {
    let stacks = gather(noisy, w, plan.coords, plan.p);
    let groups = plan.coords.len() / plan.k;
    let x = T4::new(groups, plan.k, plan.p, plan.p, stacks);
    let y = unet(widths, params, &x, signature);
    let img = aggregate(&y.data, plan.coords, plan.weights, plan.k, plan.p, h, w);
    mse(&img, clean)
}

/// The network on a whole single-channel image, then MSE.
pub fn image_pipeline_loss(
    widths: &[usize],
    params: &[Vec<f64>],
    noisy: &[f64],
    clean: &[f64],
    (h, w): (usize, usize),
    signature: &mut Vec<u32>,
) -> f64 {
    let y = unet(widths, params, &T4::new(1, 1, h, w, noisy.to_vec()), signature);
    mse(&y.data, clean)
}

/// Exhaustive block matching: every in-window candidate other than the
/// reference ranked by `(distance, row, col)`, the best `k - 1` within
/// `tau` kept; short groups repeat the reference right after itself.
pub fn brute_force_groups(
    img: &[f64],
    (h, w): (usize, usize),
    (p, stride, window, k, tau): (usize, usize, usize, usize, f64),
) -> Vec<Vec<(usize, usize)>> {
    let grid = |len: usize| {
        let mut v: Vec<usize> = (0..=len - p).step_by(stride).collect();
        if *v.last().unwrap() != len - p {
            v.push(len - p);
        }
        v
    };
    let dist = |a: (usize, usize), b: (usize, usize)| {
        let mut s = 0.0;
        for dy in 0..p {
            for dx in 0..p {
                s += (img[(a.0 + dy) * w + a.1 + dx] - img[(b.0 + dy) * w + b.1 + dx]).powi(2);
            }
        }
        s / (p * p) as f64
    };
    let mut groups = Vec::new();
    for &r0 in &grid(h) {
        for &c0 in &grid(w) {
            let mut cands = Vec::new();
            for r in 0..=h - p {
                for c in 0..=w - p {
                    if r.abs_diff(r0) > window || c.abs_diff(c0) > window || (r, c) == (r0, c0) {
                        continue;
                    }
                    let d = dist((r0, c0), (r, c));
                    if d <= tau {
                        cands.push((d, r, c));
                    }
                }
            }
            cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cands.truncate(k - 1);
            let mut g = vec![(r0, c0); k - cands.len()];
            g.extend(cands.iter().map(|&(_, r, c)| (r, c)));
            groups.push(g);
        }
    }
    groups
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
