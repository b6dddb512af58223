use super::*;
use crate::metrics::psnr;
use crate::phantom::{make_phantom, PhantomKind};

fn blob(size: usize, sigma: f64) -> Image {
    let c = (size as f64 - 1.0) / 2.0;
    Image::from_fn(size, size, |r, col| {
        let d2 = (r as f64 - c).powi(2) + (col as f64 - c).powi(2);
        (-d2 / (2.0 * sigma * sigma)).exp() as f32
    })
    .unwrap()
}

#[test]
fn effectively_infinite_dose_is_lossless() {
    let clean = make_phantom(PhantomKind::Disks, 32, 32, 1).unwrap();
    let out = simulate_low_dose(&clean, &NoiseConfig::new(1e12, SimMode::Image, 3)).unwrap();
    for (a, b) in out.pixels().iter().zip(clean.pixels()) {
        assert!((a - b).abs() < 1e-3);
    }
}

#[test]
fn zero_attenuation_counts_average_to_n0() {
    let n0 = 10_000.0;
    let draws = 100_000;
    let mut rng = Rng::new(8);
    let mean = (0..draws).map(|_| rng.poisson(n0) as f64).sum::<f64>() / draws as f64;
    assert!((mean - n0).abs() < 3.0 * (n0 / draws as f64).sqrt(), "{mean}");
}

#[test]
fn rejects_out_of_range_and_bad_config() {
    let bad = Image::filled(4, 4, 1.2).unwrap();
    assert!(simulate_low_dose(&bad, &NoiseConfig::new(1e4, SimMode::Image, 0)).is_err());
    let ok = Image::filled(4, 4, 0.2).unwrap();
    assert!(simulate_low_dose(&ok, &NoiseConfig::new(0.0, SimMode::Image, 0)).is_err());
    assert!("fan".parse::<SimMode>().is_err());
}

#[test]
fn deterministic_per_seed() {
    let clean = make_phantom(PhantomKind::SheppLike, 32, 32, 1).unwrap();
    for mode in [SimMode::Image, SimMode::Projection] {
        let a = simulate_low_dose(&clean, &NoiseConfig::new(1e4, mode, 5)).unwrap();
        let b = simulate_low_dose(&clean, &NoiseConfig::new(1e4, mode, 5)).unwrap();
        let c = simulate_low_dose(&clean, &NoiseConfig::new(1e4, mode, 6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}

#[test]
fn lower_dose_is_noisier() {
    let clean = make_phantom(PhantomKind::Disks, 64, 64, 2).unwrap();
    for mode in [SimMode::Image, SimMode::Projection] {
        let scores: Vec<f64> = DOSE_LEVELS
            .iter()
            .map(|&n0| {
                psnr(
                    &simulate_low_dose(&clean, &NoiseConfig::new(n0, mode, 1)).unwrap(),
                    &clean,
                    1.0,
                )
                .unwrap()
            })
            .collect();
        assert!(scores.windows(2).all(|w| w[0] < w[1]), "{mode}: {scores:?}");
    }
}

#[test]
fn radon_of_zero_is_zero() {
    let sino = radon(&Image::filled(16, 16, 0.0).unwrap(), &uniform_angles(8), 23).unwrap();
    assert!(sino.values().iter().all(|&v| v == 0.0));
    let img = fbp(&sino, 16).unwrap();
    assert!(img.pixels().iter().all(|&v| v == 0.0));
}

#[test]
fn symmetric_disk_projects_identically() {
    // a smooth radial profile, so pixelation does not break the symmetry
    let img = blob(81, 10.0);
    let sino = radon(&img, &uniform_angles(12), 117).unwrap();
    let first = sino.projection(0).to_vec();
    let peak = first.iter().cloned().fold(0.0f32, f32::max);
    for a in 1..12 {
        let err = sino
            .projection(a)
            .iter()
            .zip(&first)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f32, f32::max);
        // bilinear interpolation smooths diagonals more than axes, an
        // O(1/sigma^2) relative effect; compare against the peak
        assert!(err / peak < 1e-3, "angle {a}: {err} vs peak {peak}");
    }
}

#[test]
fn radon_conserves_mass() {
    let img = make_phantom(PhantomKind::SheppLike, 48, 48, 3).unwrap();
    let total: f64 = img.pixels().iter().map(|&v| v as f64).sum();
    let sino = radon(&img, &uniform_angles(30), default_bins(48)).unwrap();
    for a in 0..30 {
        let mass: f64 = sino.projection(a).iter().map(|&v| v as f64).sum::<f64>() * sino.bin_spacing();
        assert!((mass - total).abs() / total < 1e-2, "angle {a}: {mass} vs {total}");
    }
}

#[test]
fn fbp_reconstructs_disks_phantom() {
    let img = make_phantom(PhantomKind::Disks, 128, 128, 7).unwrap();
    let sino = radon(&img, &uniform_angles(180), default_bins(128)).unwrap();
    let rec = fbp(&sino, 128).unwrap();
    let score = psnr(&rec, &img, 1.0).unwrap();
    assert!(score > 25.0, "{score}");
}

#[test]
fn fbp_is_linear() {
    let img = make_phantom(PhantomKind::Piecewise, 24, 24, 3).unwrap();
    let sino = radon(&img, &uniform_angles(36), default_bins(24)).unwrap();
    let a = fbp_unclamped(&sino, 24).unwrap();
    let b = fbp_unclamped(&sino.map(|v| 0.37 * v).unwrap(), 24).unwrap();
    for (x, y) in a.pixels().iter().zip(b.pixels()) {
        assert!((0.37 * x - y).abs() < 1e-5);
    }
}
