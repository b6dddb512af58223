//! Synthetic CT-like test images.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    /// Elliptical body with scattered disks drawn from a small intensity palette.
    Disks,
    /// Modified Shepp-Logan head with seed-dependent jitter.
    SheppLike,
    /// Overlapping ellipses and crosses on a smooth ramp.
    Piecewise,
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disks" => Ok(PhantomKind::Disks),
            "shepp-like" => Ok(PhantomKind::SheppLike),
            "piecewise" => Ok(PhantomKind::Piecewise),
            other => Err(Error::InvalidArgument(format!("unknown phantom kind {other:?}"))),
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhantomKind::Disks => "disks",
            PhantomKind::SheppLike => "shepp-like",
            PhantomKind::Piecewise => "piecewise",
        })
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    angle: f64,
    value: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

/// Rasterizes shapes on normalized coordinates in `[-1, 1]^2` (x right,
/// y down). `additive` sums overlapping values; otherwise later shapes paint
/// over earlier ones.
fn rasterize(
    height: usize,
    width: usize,
    shapes: &[Ellipse],
    base: impl Fn(f64, f64) -> f64,
    additive: bool,
) -> Result<Image> {
    Image::from_fn(height, width, |r, c| {
        let x = 2.0 * (c as f64 + 0.5) / width as f64 - 1.0;
        let y = 2.0 * (r as f64 + 0.5) / height as f64 - 1.0;
        let mut v = base(x, y);
        for e in shapes {
            if e.contains(x, y) {
                v = if additive { v + e.value } else { e.value };
            }
        }
        v.clamp(0.0, 1.0) as f32
    })
}

pub fn make_phantom(kind: PhantomKind, height: usize, width: usize, seed: u64) -> Result<Image> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument("phantom extents must be positive".into()));
    }
    let mut rng = Rng::new(seed);
    match kind {
        PhantomKind::Disks => disks(height, width, &mut rng),
        PhantomKind::SheppLike => shepp_like(height, width, &mut rng),
        PhantomKind::Piecewise => piecewise(height, width, &mut rng),
    }
}

const DISK_PALETTE: [f64; 4] = [0.35, 0.55, 0.8, 1.0];

fn disks(height: usize, width: usize, rng: &mut Rng) -> Result<Image> {
    let mut shapes = vec![Ellipse {
        cx: rng.uniform_range(-0.05, 0.05),
        cy: rng.uniform_range(-0.05, 0.05),
        a: rng.uniform_range(0.8, 0.92),
        b: rng.uniform_range(0.7, 0.85),
        angle: rng.uniform_range(-0.3, 0.3),
        value: 0.2,
    }];
    let count = 6 + rng.below(7);
    for _ in 0..count {
        let r = rng.uniform_range(0.07, 0.2);
        let rho = rng.uniform_range(0.0, 0.6);
        let phi = rng.uniform_range(0.0, std::f64::consts::TAU);
        shapes.push(Ellipse {
            cx: rho * phi.cos(),
            cy: rho * phi.sin(),
            a: r,
            b: r,
            angle: 0.0,
            value: DISK_PALETTE[rng.below(DISK_PALETTE.len())],
        });
    }
    rasterize(height, width, &shapes, |_, _| 0.0, false)
}

// (cx, cy, a, b, angle in degrees, additive value) of the modified Shepp-Logan head
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.2),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.2),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.1),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.1),
    (0.0, -0.606, 0.023, 0.023, 0.0, 0.1),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.1),
];

fn shepp_like(height: usize, width: usize, rng: &mut Rng) -> Result<Image> {
    let shapes: Vec<Ellipse> = SHEPP_LOGAN
        .iter()
        .enumerate()
        .map(|(i, &(cx, cy, a, b, deg, value))| {
            // the skull pair keeps its shape so the interior stays closed
            let j = if i < 2 { 0.0 } else { 1.0 };
            Ellipse {
                cx: cx + j * rng.uniform_range(-0.03, 0.03),
                // the table uses y up, the raster y down
                cy: -cy + j * rng.uniform_range(-0.03, 0.03),
                a: a * (1.0 + j * rng.uniform_range(-0.1, 0.1)),
                b: b * (1.0 + j * rng.uniform_range(-0.1, 0.1)),
                angle: -deg.to_radians(),
                value: value * (1.0 + j * rng.uniform_range(-0.2, 0.2)),
            }
        })
        .collect();
    // modified Shepp-Logan peaks at 1.0 (skull) with soft tissue at 0.2;
    // stretch soft tissue contrast a little
    let img = rasterize(height, width, &shapes, |_, _| 0.0, true)?;
    img.map(|v| if v < 0.95 { (v * 2.0).min(0.9) } else { v })
}

fn piecewise(height: usize, width: usize, rng: &mut Rng) -> Result<Image> {
    let gx = rng.uniform_range(-0.1, 0.1);
    let gy = rng.uniform_range(-0.1, 0.1);
    let level = rng.uniform_range(0.2, 0.35);
    let mut shapes = Vec::new();
    for _ in 0..(4 + rng.below(5)) {
        let value = rng.uniform_range(0.1, 0.95);
        let cx = rng.uniform_range(-0.7, 0.7);
        let cy = rng.uniform_range(-0.7, 0.7);
        let a = rng.uniform_range(0.1, 0.35);
        let b = rng.uniform_range(0.1, 0.35);
        if rng.uniform() < 0.5 {
            // cross of two thin ellipses
            for angle in [0.0, std::f64::consts::FRAC_PI_2] {
                shapes.push(Ellipse {
                    cx,
                    cy,
                    a: a * 1.2,
                    b: b * 0.35,
                    angle,
                    value,
                });
            }
        } else {
            shapes.push(Ellipse {
                cx,
                cy,
                a,
                b,
                angle: rng.uniform_range(0.0, std::f64::consts::PI),
                value,
            });
        }
    }
    rasterize(height, width, &shapes, |x, y| level + gx * x + gy * y, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    const KINDS: [PhantomKind; 3] = [PhantomKind::Disks, PhantomKind::SheppLike, PhantomKind::Piecewise];

    #[test]
    fn deterministic_per_seed() {
        for kind in KINDS {
            assert_eq!(
                make_phantom(kind, 40, 48, 7).unwrap(),
                make_phantom(kind, 40, 48, 7).unwrap()
            );
        }
        assert_ne!(
            make_phantom(PhantomKind::Disks, 32, 32, 7).unwrap(),
            make_phantom(PhantomKind::Disks, 32, 32, 8).unwrap()
        );
    }

    #[test]
    fn values_in_unit_interval() {
        for kind in KINDS {
            for seed in 0..10 {
                let (lo, hi) = make_phantom(kind, 64, 64, seed).unwrap().min_max();
                assert!(lo >= 0.0 && hi <= 1.0, "{kind} seed {seed}: {lo}..{hi}");
                assert!(hi > lo, "{kind} seed {seed} is flat");
            }
        }
    }

    #[test]
    fn disks_have_several_gray_levels() {
        let img = make_phantom(PhantomKind::Disks, 64, 64, 7).unwrap();
        let mut levels: Vec<u32> = img.pixels().iter().map(|p| p.to_bits()).collect();
        levels.sort_unstable();
        levels.dedup();
        assert!(levels.len() >= 2, "{} levels", levels.len());
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!("cubes".parse::<PhantomKind>().is_err());
        assert_eq!("shepp-like".parse::<PhantomKind>().unwrap(), PhantomKind::SheppLike);
    }
}
