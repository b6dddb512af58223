//! Low-dose CT noise simulation.
//!
//! Transmission follows Beer-Lambert: a measurement with attenuation `a`
//! sees `N0 exp(-a)` expected photons, the count is Poisson, and the
//! attenuation is re-estimated as `-ln(max(n, 1) / N0)`. In image mode
//! every pixel is its own measurement with `a = mu_max x`. In projection
//! mode the measurements are parallel-beam line integrals, expressed on a
//! unit-width field of view, reconstructed with filtered back projection.

mod radon;

pub use radon::{default_bins, fbp, fbp_unclamped, radon, uniform_angles, Sinogram, FBP_RANGE};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::Rng;

/// Photon counts of the four simulated dose levels.
pub const DOSE_LEVELS: [f64; 4] = [10_000.0, 50_000.0, 100_000.0, 500_000.0];
/// Dose used for training.
pub const TRAINING_DOSE: f64 = 100_000.0;
pub const DEFAULT_MU_MAX: f64 = 4.0;
/// Simulated images are clamped to this range.
pub const OUTPUT_RANGE: (f32, f32) = (0.0, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Image,
    Projection,
}

impl FromStr for SimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(SimMode::Image),
            "projection" => Ok(SimMode::Projection),
            other => Err(Error::InvalidArgument(format!("unknown simulation mode {other:?}"))),
        }
    }
}

impl fmt::Display for SimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimMode::Image => "image",
            SimMode::Projection => "projection",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Expected photon count at zero attenuation.
    pub photons: f64,
    /// Attenuation of a pixel (image mode) or a full-width line (projection
    /// mode) of value 1.
    pub mu_max: f64,
    pub mode: SimMode,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn new(photons: f64, mode: SimMode, seed: u64) -> Self {
        NoiseConfig {
            photons,
            mu_max: DEFAULT_MU_MAX,
            mode,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.photons > 0.0) || !(self.mu_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "photons and mu_max must be positive, got {} and {}",
                self.photons, self.mu_max
            )));
        }
        Ok(())
    }
}

/// Noisy re-estimate of attenuation `a` from one Poisson count.
pub fn noisy_attenuation(rng: &mut Rng, attenuation: f64, photons: f64) -> f64 {
    let n = rng.poisson(photons * (-attenuation).exp());
    -((n.max(1) as f64) / photons).ln()
}

pub fn simulate_low_dose(clean: &Image, cfg: &NoiseConfig) -> Result<Image> {
    cfg.validate()?;
    let (lo, hi) = clean.min_max();
    if lo < 0.0 || hi > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "clean image must lie in [0, 1], found [{lo}, {hi}]"
        )));
    }
    let mut rng = Rng::new(cfg.seed);
    let out = match cfg.mode {
        SimMode::Image => {
            let mu = cfg.mu_max;
            clean.map(|x| {
                let y = noisy_attenuation(&mut rng, mu * x as f64, cfg.photons) / mu;
                (y as f32).clamp(OUTPUT_RANGE.0, OUTPUT_RANGE.1)
            })?
        }
        SimMode::Projection => {
            let (h, w) = clean.shape();
            if h != w {
                return Err(Error::InvalidArgument("projection mode needs square images".into()));
            }
            let angles = uniform_angles(projection_angles(w));
            let sino = radon(clean, &angles, default_bins(w))?;
            // line integrals in pixel units -> unit field of view
            let to_unit = cfg.mu_max / w as f64;
            let noisy = sino.map(|s| {
                let a = noisy_attenuation(&mut rng, to_unit * s as f64, cfg.photons);
                (a / to_unit) as f32
            })?;
            fbp(&noisy, w)?
        }
    };
    out.with_range(OUTPUT_RANGE.0, OUTPUT_RANGE.1)
}

/// Angles used by projection mode for a `size`-pixel image.
pub fn projection_angles(size: usize) -> usize {
    (3 * size).div_ceil(2)
}

#[cfg(test)]
mod tests;
