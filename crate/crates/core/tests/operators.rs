#[path = "common/oracle.rs"]
mod oracle;

use std::sync::Arc;

use dubm3d::aggregation::{aggregate, aggregate_adjoint, AggregationOperator};
use dubm3d::image::Image;
use dubm3d::matching::{gather_stacks, plan_matches, MatchConfig, StackBatch};
use dubm3d::rng::Rng;

fn random_image(rng: &mut Rng, h: usize, w: usize) -> Image {
    Image::from_fn(h, w, |_, _| rng.uniform() as f32).unwrap()
}

fn random_config(rng: &mut Rng) -> MatchConfig {
    let patch = 2 + rng.below(6);
    MatchConfig {
        patch,
        stride: 1 + rng.below(patch),
        window: rng.below(10),
        group_size: 1 + rng.below(8),
        tau: if rng.uniform() < 0.3 { 0.02 } else { f32::INFINITY },
    }
}

#[test]
fn aggregation_adjoint_dot_product() {
    let mut rng = Rng::new(100);
    for trial in 0..100 {
        let cfg = random_config(&mut rng);
        let (h, w) = (cfg.patch + rng.below(20), cfg.patch + rng.below(20));
        let img = random_image(&mut rng, h, w);
        let plan = plan_matches(&img, &cfg).unwrap();
        let weights = (0..plan.num_groups()).map(|_| 0.1 + rng.uniform()).collect();
        let plan = Arc::new(plan.with_weights(weights).unwrap());
        let op = AggregationOperator::new(plan.clone()).unwrap();
        let n = plan.all_coords().len() * cfg.patch * cfg.patch;

        // positive test vectors: zero-mean ones make both inner products
        // nearly cancel, which measures f32 output rounding, not the adjoint
        let s: Vec<f32> = (0..n).map(|_| rng.uniform() as f32).collect();
        let y = Image::from_fn(h, w, |_, _| rng.uniform() as f32).unwrap();
        let as_ = op
            .aggregate(&StackBatch::new(plan.clone(), s.clone()).unwrap())
            .unwrap();
        let aty = op.adjoint(&y).unwrap();

        let f64s = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
        let lhs = oracle::dot(&f64s(as_.pixels()), &f64s(y.pixels()));
        let rhs = oracle::dot(&f64s(&s), &f64s(aty.data()));
        let scale = lhs.abs().max(rhs.abs()).max(1e-12);
        assert!((lhs - rhs).abs() / scale < 1e-5, "trial {trial}: {lhs} vs {rhs}");
    }
}

#[test]
fn gather_then_aggregate_is_identity() {
    let mut rng = Rng::new(101);
    for _ in 0..50 {
        let cfg = random_config(&mut rng);
        let (h, w) = (cfg.patch + rng.below(24), cfg.patch + rng.below(24));
        let img = random_image(&mut rng, h, w);
        let plan = Arc::new(plan_matches(&img, &cfg).unwrap());
        let back = aggregate(&gather_stacks(&img, &plan).unwrap(), &plan).unwrap();
        for (a, b) in back.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}

#[test]
fn aggregation_matches_oracle() {
    let mut rng = Rng::new(102);
    let img = random_image(&mut rng, 21, 17);
    let cfg = MatchConfig {
        patch: 5,
        stride: 3,
        window: 4,
        group_size: 4,
        tau: f32::INFINITY,
    };
    let plan = plan_matches(&img, &cfg).unwrap();
    let weights: Vec<f64> = (0..plan.num_groups()).map(|_| 0.5 + rng.uniform()).collect();
    let plan = Arc::new(plan.with_weights(weights.clone()).unwrap());
    let n = plan.all_coords().len() * 25;
    let s: Vec<f32> = (0..n).map(|_| rng.normal() as f32).collect();
    let got = aggregate(&StackBatch::new(plan.clone(), s.clone()).unwrap(), &plan).unwrap();
    let s64: Vec<f64> = s.iter().map(|&v| v as f64).collect();
    let want = oracle::aggregate(&s64, plan.all_coords(), &weights, 4, 5, 21, 17);
    for (a, b) in got.pixels().iter().zip(&want) {
        assert!((*a as f64 - b).abs() < 1e-5);
    }
    // and the adjoint of a pixel indicator spreads w_g / D to every copy
    let grad = aggregate_adjoint(&Image::filled(21, 17, 1.0).unwrap(), &plan).unwrap();
    assert_eq!(grad.shape(), [plan.num_groups(), 4, 5, 5]);
}

fn check_against_brute_force(img: &Image, cfg: &MatchConfig) {
    let plan = plan_matches(img, cfg).unwrap();
    let px: Vec<f64> = img.pixels().iter().map(|&v| v as f64).collect();
    let groups = oracle::brute_force_groups(
        &px,
        img.shape(),
        (cfg.patch, cfg.stride, cfg.window, cfg.group_size, cfg.tau as f64),
    );
    assert_eq!(groups.len(), plan.num_groups());
    for (g, want) in groups.iter().enumerate() {
        assert_eq!(plan.coords(g), want.as_slice(), "group {g}");
    }
}

#[test]
fn matching_equals_brute_force_on_random_images() {
    let mut rng = Rng::new(103);
    let cfg = MatchConfig {
        patch: 8,
        stride: 4,
        window: 12,
        group_size: 8,
        tau: f32::INFINITY,
    };
    check_against_brute_force(&random_image(&mut rng, 32, 32), &cfg);
    for _ in 0..6 {
        let cfg = random_config(&mut rng);
        let (h, w) = (cfg.patch + rng.below(40), cfg.patch + rng.below(40));
        check_against_brute_force(&random_image(&mut rng, h, w), &cfg);
    }
}

#[test]
fn matching_equals_brute_force_with_ties() {
    // few gray levels and repeated tiles produce many equal distances
    let mut rng = Rng::new(104);
    let tile: Vec<f32> = (0..16).map(|_| (rng.below(3) as f32) / 2.0).collect();
    let img = Image::from_fn(48, 48, |r, c| tile[(r % 4) * 4 + c % 4]).unwrap();
    check_against_brute_force(&img, &MatchConfig::default());
    let blocks = Image::from_fn(40, 36, |r, c| ((r / 6 + c / 5) % 3) as f32 * 0.4).unwrap();
    check_against_brute_force(
        &blocks,
        &MatchConfig {
            patch: 6,
            stride: 3,
            window: 7,
            group_size: 5,
            tau: 0.05,
        },
    );
}
