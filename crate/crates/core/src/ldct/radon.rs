//! Parallel-beam projection and filtered back projection on a unit pixel
//! grid centred on the image.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::Image;

/// Ray integration step along each line, in pixels.
const RAY_STEP: f64 = 0.5;
/// Reconstructions are clamped to this range.
pub const FBP_RANGE: (f32, f32) = (0.0, 1.5);

#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    angles: Vec<f64>,
    bins: usize,
    bin_spacing: f64,
    values: Vec<f32>,
}

impl Sinogram {
    pub fn new(angles: Vec<f64>, bins: usize, bin_spacing: f64, values: Vec<f32>) -> Result<Self> {
        if values.len() != angles.len() * bins {
            return Err(Error::shape("sinogram", &[angles.len(), bins], &[values.len()]));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sinogram"));
        }
        if angles.iter().any(|a| !(0.0..PI).contains(a)) {
            return Err(Error::InvalidArgument("projection angles must lie in [0, pi)".into()));
        }
        Ok(Sinogram {
            angles,
            bins,
            bin_spacing,
            values,
        })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bin_spacing(&self) -> f64 {
        self.bin_spacing
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn projection(&self, a: usize) -> &[f32] {
        &self.values[a * self.bins..(a + 1) * self.bins]
    }

    pub fn map(&self, f: impl FnMut(f32) -> f32) -> Result<Sinogram> {
        Sinogram::new(
            self.angles.clone(),
            self.bins,
            self.bin_spacing,
            self.values.iter().copied().map(f).collect(),
        )
    }
}

/// `count` angles evenly spaced over `[0, pi)`.
pub fn uniform_angles(count: usize) -> Vec<f64> {
    (0..count).map(|i| PI * i as f64 / count as f64).collect()
}

/// Detector bins needed to see the whole `size x size` image at any angle.
pub fn default_bins(size: usize) -> usize {
    let n = (size as f64 * std::f64::consts::SQRT_2).ceil() as usize + 1;
    n | 1
}

fn bilinear(img: &Image, x: f64, y: f64) -> f64 {
    let (h, w) = img.shape();
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            img.get(r as usize, c as usize) as f64
        }
    };
    (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
        + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1))
}

/// Line integrals of `img` along parallel rays. Bin `b` sits at signed
/// offset `(b - (bins - 1) / 2)` pixels from the centre; angle `theta`
/// projects onto the direction `(cos theta, sin theta)` in (x, y) = (col, row).
pub fn radon(img: &Image, angles: &[f64], bins: usize) -> Result<Sinogram> {
    let (h, w) = img.shape();
    if h != w {
        return Err(Error::InvalidArgument(format!(
            "radon needs a square image, got {h}x{w}"
        )));
    }
    let c = (w as f64 - 1.0) / 2.0;
    let half = (w as f64) * std::f64::consts::FRAC_1_SQRT_2 + 1.0;
    let steps = (2.0 * half / RAY_STEP).ceil() as usize;
    let mut values = Vec::with_capacity(angles.len() * bins);
    for &theta in angles {
        let (s, co) = theta.sin_cos();
        for b in 0..bins {
            let t = b as f64 - (bins as f64 - 1.0) / 2.0;
            let mut acc = 0.0;
            for i in 0..=steps {
                let u = -half + i as f64 * RAY_STEP;
                let x = c + t * co - u * s;
                let y = c + t * s + u * co;
                acc += bilinear(img, x, y);
            }
            values.push((acc * RAY_STEP) as f32);
        }
    }
    Sinogram::new(angles.to_vec(), bins, 1.0, values)
}

/// Spatial Ram-Lak kernel `h[0] = 1/4`, `h[odd n] = -1 / (pi n)^2`, even
/// `n != 0` zero, transformed to the frequency domain at length `len`.
fn ramp_response(len: usize) -> Vec<Complex<f64>> {
    let mut h = vec![Complex::new(0.0, 0.0); len];
    for (i, v) in h.iter_mut().enumerate() {
        let n = if i <= len / 2 { i as i64 } else { i as i64 - len as i64 };
        v.re = if n == 0 {
            0.25
        } else if n % 2 != 0 {
            -1.0 / (PI * n as f64).powi(2)
        } else {
            0.0
        };
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut h);
    h
}

/// Ramp-filtered back projection onto a `size x size` grid, clamped to
/// [`FBP_RANGE`].
pub fn fbp(sino: &Sinogram, size: usize) -> Result<Image> {
    Ok(fbp_unclamped(sino, size)?.clamp(FBP_RANGE.0, FBP_RANGE.1))
}

/// Same as [`fbp`] without the output clamp; linear in the sinogram.
pub fn fbp_unclamped(sino: &Sinogram, size: usize) -> Result<Image> {
    if size == 0 {
        return Err(Error::InvalidArgument("reconstruction size must be positive".into()));
    }
    let bins = sino.bins();
    let n_angles = sino.angles().len();
    if n_angles == 0 {
        return Image::filled(size, size, 0.0);
    }
    if n_angles < size {
        log_sparse_warning(n_angles, size);
    }
    let len = (2 * bins).next_power_of_two();
    let response = ramp_response(len);
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);

    let mut filtered = Vec::with_capacity(n_angles * bins);
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for a in 0..n_angles {
        buf.iter_mut().for_each(|v| *v = Complex::new(0.0, 0.0));
        for (b, &v) in sino.projection(a).iter().enumerate() {
            buf[b].re = v as f64;
        }
        forward.process(&mut buf);
        for (v, r) in buf.iter_mut().zip(&response) {
            *v *= r;
        }
        inverse.process(&mut buf);
        filtered.extend(buf[..bins].iter().map(|v| v.re / len as f64 / sino.bin_spacing()));
    }

    let c = (size as f64 - 1.0) / 2.0;
    let centre_bin = (bins as f64 - 1.0) / 2.0;
    let trig: Vec<(f64, f64)> = sino.angles().iter().map(|t| t.sin_cos()).collect();
    let scale = PI / n_angles as f64;
    Image::from_fn(size, size, |r, col| {
        let x = col as f64 - c;
        let y = r as f64 - c;
        let mut acc = 0.0;
        for (a, &(s, co)) in trig.iter().enumerate() {
            let t = (x * co + y * s) / sino.bin_spacing() + centre_bin;
            let t0 = t.floor();
            let i = t0 as isize;
            if i < 0 || i + 1 >= bins as isize {
                if i == bins as isize - 1 && t == t0 {
                    acc += filtered[a * bins + i as usize];
                }
                continue;
            }
            let f = t - t0;
            let row = &filtered[a * bins..(a + 1) * bins];
            acc += (1.0 - f) * row[i as usize] + f * row[i as usize + 1];
        }
        (acc * scale) as f32
    })
}

fn log_sparse_warning(angles: usize, size: usize) {
    use std::sync::atomic::{AtomicBool, Ordering};
    static WARNED: AtomicBool = AtomicBool::new(false);
    if !WARNED.swap(true, Ordering::Relaxed) {
        eprintln!("warning: {angles} projection angles for a {size}-pixel reconstruction; expect streaks");
    }
}
