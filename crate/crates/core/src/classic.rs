//! Transform-domain collaborative filtering (the classic BM3D filter).
//!
//! Each `K x P x P` stack goes through an orthonormal 2D DCT per patch and
//! an orthonormal Haar transform along the group axis. Stage one hard
//! thresholds the coefficients; stage two applies empirical Wiener
//! shrinkage steered by the stage-one estimate.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::aggregation::AggregationOperator;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::matching::{gather_stacks, plan_matches, MatchConfig, StackBatch};

pub const DEFAULT_LAMBDA_THR: f32 = 2.7;

/// Median absolute deviation to standard deviation for Gaussian noise.
const MAD_TO_SIGMA: f64 = 0.6745;
/// Lower bound for estimated noise levels; a flat image has zero MAD.
const MIN_SIGMA: f32 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicConfig {
    pub sigma: f32,
    pub lambda_thr: f32,
}

impl ClassicConfig {
    pub fn new(sigma: f32, lambda_thr: f32) -> Result<Self> {
        if !(sigma > 0.0) || !(lambda_thr >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need sigma > 0 and lambda_thr >= 0, got {sigma}, {lambda_thr}"
            )));
        }
        Ok(ClassicConfig { sigma, lambda_thr })
    }
}

/// Orthonormal DCT-II matrix, `m[k * n + i] = a_k cos(pi (2i + 1) k / 2n)`.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let a = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            m[k * n + i] = a * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

// out = m * x * m^T (forward) or m^T * x * m (inverse), x is n x n
fn separable(m: &[f64], x: &[f64], n: usize, inverse: bool) -> Vec<f64> {
    let at = |r: usize, c: usize| if inverse { m[c * n + r] } else { m[r * n + c] };
    let mut tmp = vec![0.0; n * n];
    // along columns: tmp = M x
    for r in 0..n {
        for c in 0..n {
            tmp[r * n + c] = (0..n).map(|i| at(r, i) * x[i * n + c]).sum();
        }
    }
    // along rows: out = tmp M^T
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            out[r * n + c] = (0..n).map(|i| tmp[r * n + i] * at(c, i)).sum();
        }
    }
    out
}

pub fn dct2(patch: &[f64], n: usize) -> Vec<f64> {
    separable(&dct_matrix(n), patch, n, false)
}

pub fn idct2(coeffs: &[f64], n: usize) -> Vec<f64> {
    separable(&dct_matrix(n), coeffs, n, true)
}

fn check_power_of_two(k: usize) -> Result<()> {
    if !k.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "Haar transform along the group needs a power-of-two size, got {k}"
        )));
    }
    Ok(())
}

/// Multi-level orthonormal Haar along the leading axis of a `k x len` array.
/// Output order: final scaling coefficient, then details from coarse to fine.
pub fn haar_forward(data: &[f64], k: usize, len: usize) -> Result<Vec<f64>> {
    check_power_of_two(k)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut cur = data.to_vec();
    let mut out = vec![0.0; k * len];
    let mut n = k;
    while n > 1 {
        let half = n / 2;
        let mut next = vec![0.0; half * len];
        for i in 0..half {
            for j in 0..len {
                let a = cur[2 * i * len + j];
                let b = cur[(2 * i + 1) * len + j];
                next[i * len + j] = s * (a + b);
                out[(half + i) * len + j] = s * (a - b);
            }
        }
        cur = next;
        n = half;
    }
    out[..len].copy_from_slice(&cur[..len]);
    Ok(out)
}

pub fn haar_inverse(coeffs: &[f64], k: usize, len: usize) -> Result<Vec<f64>> {
    check_power_of_two(k)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut cur = coeffs[..len].to_vec();
    let mut n = 1;
    while n < k {
        let mut next = vec![0.0; 2 * n * len];
        for i in 0..n {
            for j in 0..len {
                let a = cur[i * len + j];
                let d = coeffs[(n + i) * len + j];
                next[2 * i * len + j] = s * (a + d);
                next[(2 * i + 1) * len + j] = s * (a - d);
            }
        }
        cur = next;
        n *= 2;
    }
    Ok(cur)
}

/// 3D transform of a `k x p x p` stack: DCT per patch, Haar across patches.
#[derive(Debug, Clone)]
pub struct StackTransform {
    k: usize,
    p: usize,
    dct: Vec<f64>,
}

impl StackTransform {
    pub fn new(k: usize, p: usize) -> Result<Self> {
        check_power_of_two(k)?;
        Ok(StackTransform {
            k,
            p,
            dct: dct_matrix(p),
        })
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.k * self.p * self.p {
            return Err(Error::shape("stack transform", &[self.k, self.p, self.p], &[len]));
        }
        Ok(())
    }

    pub fn forward(&self, stack: &[f32]) -> Result<Vec<f64>> {
        self.check(stack.len())?;
        let pp = self.p * self.p;
        let mut spectra = Vec::with_capacity(stack.len());
        for patch in stack.chunks_exact(pp) {
            let x: Vec<f64> = patch.iter().map(|&v| v as f64).collect();
            spectra.extend(separable(&self.dct, &x, self.p, false));
        }
        haar_forward(&spectra, self.k, pp)
    }

    pub fn inverse(&self, coeffs: &[f64]) -> Result<Vec<f32>> {
        self.check(coeffs.len())?;
        let pp = self.p * self.p;
        let spectra = haar_inverse(coeffs, self.k, pp)?;
        let mut out = Vec::with_capacity(coeffs.len());
        for s in spectra.chunks_exact(pp) {
            out.extend(separable(&self.dct, s, self.p, true).into_iter().map(|v| v as f32));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub stack: Vec<f32>,
    pub weight: f64,
    /// Coefficients left non-zero (hard thresholding only).
    pub retained: usize,
}

/// Stage one: zero every 3D coefficient with `|c| < lambda_thr * sigma`
/// except the group mean (coefficient 0). Weight `1 / (sigma^2 max(1, N))`.
pub fn hard_threshold_filter(t: &StackTransform, stack: &[f32], cfg: &ClassicConfig) -> Result<Filtered> {
    let mut coeffs = t.forward(stack)?;
    let thr = (cfg.lambda_thr * cfg.sigma) as f64;
    let mut retained = 1;
    for c in coeffs.iter_mut().skip(1) {
        if c.abs() < thr {
            *c = 0.0;
        } else {
            retained += 1;
        }
    }
    let sigma2 = (cfg.sigma as f64).powi(2);
    Ok(Filtered {
        stack: t.inverse(&coeffs)?,
        weight: 1.0 / (sigma2 * retained.max(1) as f64),
        retained,
    })
}

/// Wiener shrinkage factor `S^2 / (S^2 + sigma^2)`.
pub fn wiener_gain(pilot: f64, sigma: f64) -> f64 {
    let s2 = pilot * pilot;
    s2 / (s2 + sigma * sigma)
}

/// Stage two: shrink the noisy coefficients by the Wiener gain of the pilot
/// coefficients. Weight `1 / (sigma^2 sum w^2)`.
pub fn wiener_filter(t: &StackTransform, noisy: &[f32], pilot: &[f32], cfg: &ClassicConfig) -> Result<Filtered> {
    if noisy.len() != pilot.len() {
        return Err(Error::shape("wiener_filter", &[noisy.len()], &[pilot.len()]));
    }
    let mut coeffs = t.forward(noisy)?;
    let pilot = t.forward(pilot)?;
    let sigma = cfg.sigma as f64;
    let mut energy = 0.0;
    for (c, &s) in coeffs.iter_mut().zip(&pilot) {
        let w = wiener_gain(s, sigma);
        *c *= w;
        energy += w * w;
    }
    Ok(Filtered {
        stack: t.inverse(&coeffs)?,
        weight: 1.0 / (sigma * sigma * energy.max(1e-12)),
        retained: coeffs.len(),
    })
}

/// Noise level from the median absolute finest diagonal Haar detail.
pub fn estimate_noise_sigma(img: &Image) -> f32 {
    let (h, w) = img.shape();
    let mut details: Vec<f64> = Vec::with_capacity((h / 2) * (w / 2));
    for r in (0..h - h % 2).step_by(2) {
        for c in (0..w - w % 2).step_by(2) {
            let d = 0.5
                * (img.get(r, c) as f64 - img.get(r, c + 1) as f64 - img.get(r + 1, c) as f64
                    + img.get(r + 1, c + 1) as f64);
            details.push(d.abs());
        }
    }
    if details.is_empty() {
        return MIN_SIGMA;
    }
    let mid = details.len() / 2;
    details.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if details.len() % 2 == 1 {
        details[mid]
    } else {
        let lower = details[..mid].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + details[mid])
    };
    ((median / MAD_TO_SIGMA) as f32).max(MIN_SIGMA)
}

fn filter_groups(
    stacks: &StackBatch,
    f: impl Fn(usize, &[f32]) -> Result<Filtered> + Sync,
) -> Result<(Vec<f32>, Vec<f64>)> {
    let groups = stacks.shape()[0];
    let filtered: Vec<Filtered> = (0..groups)
        .into_par_iter()
        .map(|g| f(g, stacks.stack(g)))
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(stacks.data().len());
    let mut weights = Vec::with_capacity(groups);
    for f in filtered {
        data.extend(f.stack);
        weights.push(f.weight);
    }
    Ok((data, weights))
}

/// Hard-threshold estimate: match on `noisy`, filter each group, aggregate.
pub fn bm3d_stage1(noisy: &Image, mcfg: &MatchConfig, cfg: &ClassicConfig) -> Result<Image> {
    let t = StackTransform::new(mcfg.group_size, mcfg.patch)?;
    let plan = Arc::new(plan_matches(noisy, mcfg)?);
    let stacks = gather_stacks(noisy, &plan)?;
    let (data, weights) = filter_groups(&stacks, |_, s| hard_threshold_filter(&t, s, cfg))?;
    let plan = Arc::new(plan.with_weights(weights)?);
    AggregationOperator::new(plan.clone())?.aggregate(&StackBatch::new(plan, data)?)
}

/// Wiener estimate: re-match on the pilot, shrink the noisy groups.
pub fn bm3d_stage2(noisy: &Image, pilot: &Image, mcfg: &MatchConfig, cfg: &ClassicConfig) -> Result<Image> {
    let t = StackTransform::new(mcfg.group_size, mcfg.patch)?;
    let plan = Arc::new(plan_matches(pilot, mcfg)?);
    let noisy_stacks = gather_stacks(noisy, &plan)?;
    let pilot_stacks = gather_stacks(pilot, &plan)?;
    let (data, weights) = filter_groups(&noisy_stacks, |g, s| wiener_filter(&t, s, pilot_stacks.stack(g), cfg))?;
    let plan = Arc::new(plan.with_weights(weights)?);
    AggregationOperator::new(plan.clone())?.aggregate(&StackBatch::new(plan, data)?)
}

/// Two-stage classic BM3D. `sigma = None` estimates it from the image.
pub fn bm3d(noisy: &Image, mcfg: &MatchConfig, sigma: Option<f32>, lambda_thr: f32) -> Result<Image> {
    let sigma = sigma.unwrap_or_else(|| estimate_noise_sigma(noisy));
    let cfg = ClassicConfig::new(sigma, lambda_thr)?;
    let pilot = bm3d_stage1(noisy, mcfg, &cfg)?;
    bm3d_stage2(noisy, &pilot, mcfg, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = Rng::new(seed);
        (0..n).map(|_| rng.normal()).collect()
    }

    fn energy(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum()
    }

    #[test]
    fn dct_of_constant_is_pure_dc() {
        let c = dct2(&[0.4; 64], 8);
        assert!((c[0] - 3.2).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dct_inverse_and_parseval() {
        for n in [1, 3, 8] {
            let x = random(n * n, n as u64);
            let c = dct2(&x, n);
            let back = idct2(&c, n);
            let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-5);
            assert!((energy(&c) - energy(&x)).abs() <= 1e-6 * energy(&x));
        }
    }

    #[test]
    fn haar_identical_rows_compact_into_first() {
        let row = random(5, 1);
        let data: Vec<f64> = (0..8).flat_map(|_| row.clone()).collect();
        let c = haar_forward(&data, 8, 5).unwrap();
        for j in 0..5 {
            assert!((c[j] - 8f64.sqrt() * row[j]).abs() < 1e-12);
        }
        assert!(c[5..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn haar_inverse_and_parseval() {
        for k in [1, 2, 4, 8, 16] {
            let x = random(k * 7, k as u64);
            let c = haar_forward(&x, k, 7).unwrap();
            let back = haar_inverse(&c, k, 7).unwrap();
            assert!(x.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-6));
            assert!((energy(&c) - energy(&x)).abs() <= 1e-6 * energy(&x));
        }
        assert!(haar_forward(&[0.0; 6], 3, 2).is_err());
        assert!(StackTransform::new(6, 8).is_err());
    }

    #[test]
    fn zero_stack_keeps_only_dc() {
        let t = StackTransform::new(8, 8).unwrap();
        let cfg = ClassicConfig::new(0.1, 2.7).unwrap();
        let f = hard_threshold_filter(&t, &[0.0; 512], &cfg).unwrap();
        assert!(f.stack.iter().all(|&v| v == 0.0));
        assert_eq!(f.retained, 1);
        assert!((f.weight * 0.01 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_stack_passes_unchanged() {
        let t = StackTransform::new(8, 8).unwrap();
        // lambda sigma = 0.27 < 8 sqrt(8) 0.3
        let cfg = ClassicConfig::new(0.1, 2.7).unwrap();
        let f = hard_threshold_filter(&t, &[0.3; 512], &cfg).unwrap();
        assert!(f.stack.iter().all(|&v| (v - 0.3).abs() < 1e-6));
        assert_eq!(f.retained, 1);
    }

    #[test]
    fn zero_lambda_is_identity() {
        let t = StackTransform::new(4, 5).unwrap();
        let cfg = ClassicConfig::new(0.5, 0.0).unwrap();
        let x: Vec<f32> = random(100, 4).into_iter().map(|v| v as f32).collect();
        let f = hard_threshold_filter(&t, &x, &cfg).unwrap();
        assert!(x.iter().zip(&f.stack).all(|(a, b)| (a - b).abs() < 1e-5));
        assert_eq!(f.retained, 100);
    }

    #[test]
    fn wiener_gain_limits() {
        assert_eq!(wiener_gain(0.0, 0.1), 0.0);
        assert_eq!(wiener_gain(0.3, 0.3), 0.5);
        assert!(wiener_gain(1e6, 0.1) > 1.0 - 1e-12);

        let t = StackTransform::new(2, 2).unwrap();
        let cfg = ClassicConfig::new(0.1, 2.7).unwrap();
        let noisy: Vec<f32> = random(8, 9).into_iter().map(|v| v as f32).collect();
        let f = wiener_filter(&t, &noisy, &[0.0; 8], &cfg).unwrap();
        assert!(f.stack.iter().all(|&v| v == 0.0));
        assert!(wiener_filter(&t, &noisy, &[0.0; 4], &cfg).is_err());
    }

    #[test]
    fn sigma_estimate_tracks_gaussian_noise() {
        let mut rng = Rng::new(12);
        let img = Image::from_fn(128, 128, |_, _| 0.5 + 0.05 * rng.normal() as f32).unwrap();
        let s = estimate_noise_sigma(&img);
        assert!((s - 0.05).abs() < 0.004, "{s}");
        assert_eq!(estimate_noise_sigma(&Image::filled(9, 9, 0.2).unwrap()), MIN_SIGMA);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Image::filled(24, 24, 0.42).unwrap();
        let out = bm3d(&img, &MatchConfig::default(), None, DEFAULT_LAMBDA_THR).unwrap();
        assert!(out.pixels().iter().all(|&v| (v - 0.42).abs() < 1e-6));
    }
}
