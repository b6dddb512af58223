//! Block matching: reference patches on a grid, each grouped with its most
//! similar neighbours from a local search window.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Patch side in pixels.
    pub patch: usize,
    /// Step between reference patches.
    pub stride: usize,
    /// Search window half-extent around each reference.
    pub window: usize,
    /// Patches per group, reference included.
    pub group_size: usize,
    /// Largest admissible mean squared pixel distance.
    pub tau: f32,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            patch: 8,
            stride: 4,
            window: 12,
            group_size: 8,
            tau: f32::INFINITY,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.stride == 0 || self.stride > self.patch {
            return Err(Error::InvalidArgument(format!(
                "stride {} must lie in 1..={} (patch size)",
                self.stride, self.patch
            )));
        }
        if self.group_size == 0 {
            return Err(Error::InvalidArgument("group size must be at least 1".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::InvalidArgument(format!("tau {} must be >= 0", self.tau)));
        }
        Ok(())
    }
}

/// Reference offsets `0, stride, 2 stride, ...` along an axis of length
/// `len`, with the last one moved to `len - patch` so the border is reached.
pub fn reference_positions(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = len - patch;
    let mut pos: Vec<usize> = (0..=last).step_by(stride).collect();
    if *pos.last().unwrap() != last {
        pos.push(last);
    }
    pos
}

/// Geometry of every group: where each patch sits, how far it is from its
/// reference, and the group's aggregation weight.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchPlan {
    config: MatchConfig,
    image_shape: (usize, usize),
    // group-major, `group_size` entries per group
    coords: Vec<(usize, usize)>,
    distances: Vec<f32>,
    weights: Vec<f64>,
}

impl MatchPlan {
    pub fn from_parts(
        config: MatchConfig,
        image_shape: (usize, usize),
        coords: Vec<(usize, usize)>,
        distances: Vec<f32>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        config.validate()?;
        let k = config.group_size;
        let p = config.patch;
        let (h, w) = image_shape;
        if coords.len() != weights.len() * k || distances.len() != coords.len() {
            return Err(Error::InvalidArgument("plan arrays disagree on group count".into()));
        }
        if let Some(&(r, c)) = coords.iter().find(|&&(r, c)| r + p > h || c + p > w) {
            return Err(Error::InvalidArgument(format!(
                "patch at ({r},{c}) leaves the {h}x{w} image"
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "group weights must be positive and finite".into(),
            ));
        }
        Ok(MatchPlan {
            config,
            image_shape,
            coords,
            distances,
            weights,
        })
    }

    pub fn config(&self) -> &MatchConfig {
        &self.config
    }

    pub fn image_shape(&self) -> (usize, usize) {
        self.image_shape
    }

    pub fn num_groups(&self) -> usize {
        self.weights.len()
    }

    pub fn group_size(&self) -> usize {
        self.config.group_size
    }

    pub fn patch(&self) -> usize {
        self.config.patch
    }

    /// Top-left corners of the patches in group `g`, reference first.
    pub fn coords(&self, g: usize) -> &[(usize, usize)] {
        let k = self.config.group_size;
        &self.coords[g * k..(g + 1) * k]
    }

    pub fn distances(&self, g: usize) -> &[f32] {
        let k = self.config.group_size;
        &self.distances[g * k..(g + 1) * k]
    }

    pub fn all_coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    pub fn weight(&self, g: usize) -> f64 {
        self.weights[g]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The same geometry with new group weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<MatchPlan> {
        if weights.len() != self.num_groups() {
            return Err(Error::shape("plan weights", &[self.num_groups()], &[weights.len()]));
        }
        MatchPlan::from_parts(
            self.config,
            self.image_shape,
            self.coords.clone(),
            self.distances.clone(),
            weights,
        )
    }

    /// Number of planned patches covering each pixel.
    pub fn coverage(&self) -> Vec<u32> {
        let (h, w) = self.image_shape;
        let p = self.config.patch;
        let mut count = vec![0u32; h * w];
        for &(r, c) in &self.coords {
            for y in r..r + p {
                for v in &mut count[y * w + c..y * w + c + p] {
                    *v += 1;
                }
            }
        }
        count
    }

    /// Canonical little-endian encoding, used to compare plans byte for byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let c = &self.config;
        for v in [
            c.patch,
            c.stride,
            c.window,
            c.group_size,
            self.image_shape.0,
            self.image_shape.1,
        ] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&c.tau.to_le_bytes());
        out.extend_from_slice(&(self.num_groups() as u64).to_le_bytes());
        for &(r, col) in &self.coords {
            out.extend_from_slice(&(r as u32).to_le_bytes());
            out.extend_from_slice(&(col as u32).to_le_bytes());
        }
        for d in &self.distances {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }
}

/// Mean squared difference between the `p x p` patches at `a` and `b`,
/// accumulated in f64 in row-major order.
pub fn patch_distance(img: &Image, a: (usize, usize), b: (usize, usize), p: usize) -> f64 {
    let w = img.width();
    let px = img.pixels();
    let mut acc = 0.0f64;
    for dy in 0..p {
        let ra = &px[(a.0 + dy) * w + a.1..(a.0 + dy) * w + a.1 + p];
        let rb = &px[(b.0 + dy) * w + b.1..(b.0 + dy) * w + b.1 + p];
        for (x, y) in ra.iter().zip(rb) {
            let d = (*x - *y) as f64;
            acc += d * d;
        }
    }
    acc / (p * p) as f64
}

fn match_reference(img: &Image, cfg: &MatchConfig, reference: (usize, usize)) -> (Vec<(usize, usize)>, Vec<f32>) {
    let (h, w) = img.shape();
    let p = cfg.patch;
    let (r0, c0) = reference;
    let rows = r0.saturating_sub(cfg.window)..=(r0 + cfg.window).min(h - p);
    let cols = c0.saturating_sub(cfg.window)..=(c0 + cfg.window).min(w - p);

    let mut candidates: Vec<(f64, (usize, usize))> = Vec::new();
    if cfg.group_size > 1 {
        for r in rows {
            for c in cols.clone() {
                if (r, c) == reference {
                    continue;
                }
                let d = patch_distance(img, reference, (r, c), p);
                if d <= cfg.tau as f64 {
                    candidates.push((d, (r, c)));
                }
            }
        }
        // stable: equal distances keep row-major order
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
        candidates.truncate(cfg.group_size - 1);
    }

    let pad = cfg.group_size - 1 - candidates.len();
    let mut coords = Vec::with_capacity(cfg.group_size);
    let mut dists = Vec::with_capacity(cfg.group_size);
    // padding copies of the reference go right after it, keeping distances sorted
    for _ in 0..=pad {
        coords.push(reference);
        dists.push(0.0);
    }
    for (d, rc) in candidates {
        coords.push(rc);
        dists.push(d as f32);
    }
    (coords, dists)
}

/// Builds the matching plan of `img`. Group weights start at 1.
pub fn plan_matches(img: &Image, cfg: &MatchConfig) -> Result<MatchPlan> {
    cfg.validate()?;
    let (h, w) = img.shape();
    if h < cfg.patch || w < cfg.patch {
        return Err(Error::InvalidArgument(format!(
            "{h}x{w} image is smaller than the {0}x{0} patch",
            cfg.patch
        )));
    }
    let rows = reference_positions(h, cfg.patch, cfg.stride);
    let cols = reference_positions(w, cfg.patch, cfg.stride);
    let refs: Vec<(usize, usize)> = rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect();

    let groups: Vec<_> = refs.par_iter().map(|&rc| match_reference(img, cfg, rc)).collect();
    let mut coords = Vec::with_capacity(refs.len() * cfg.group_size);
    let mut distances = Vec::with_capacity(refs.len() * cfg.group_size);
    for (c, d) in groups {
        coords.extend(c);
        distances.extend(d);
    }
    MatchPlan::from_parts(*cfg, (h, w), coords, distances, vec![1.0; refs.len()])
}

/// Stacked patch groups, `[groups, group_size, patch, patch]`, tied to the
/// plan that shaped them.
#[derive(Debug, Clone)]
pub struct StackBatch {
    plan: Arc<MatchPlan>,
    data: Vec<f32>,
}

impl StackBatch {
    pub fn new(plan: Arc<MatchPlan>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = Self::shape_for(&plan).iter().product();
        if data.len() != expected {
            return Err(Error::shape("stack batch", &Self::shape_for(&plan), &[data.len()]));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stack batch"));
        }
        Ok(StackBatch { plan, data })
    }

    fn shape_for(plan: &MatchPlan) -> [usize; 4] {
        [plan.num_groups(), plan.group_size(), plan.patch(), plan.patch()]
    }

    pub fn shape(&self) -> [usize; 4] {
        Self::shape_for(&self.plan)
    }

    pub fn plan(&self) -> &Arc<MatchPlan> {
        &self.plan
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn stack_len(&self) -> usize {
        let [_, k, p, _] = self.shape();
        k * p * p
    }

    /// The `K x P x P` values of group `g`.
    pub fn stack(&self, g: usize) -> &[f32] {
        let n = self.stack_len();
        &self.data[g * n..(g + 1) * n]
    }
}

/// Copies every planned patch out of `img`. `img` only has to match the
/// plan's shape; it need not be the image the plan was built on.
pub fn gather_stacks(img: &Image, plan: &Arc<MatchPlan>) -> Result<StackBatch> {
    if img.shape() != plan.image_shape() {
        let (h, w) = plan.image_shape();
        return Err(Error::shape("gather_stacks", &[img.height(), img.width()], &[h, w]));
    }
    let p = plan.patch();
    let w = img.width();
    let px = img.pixels();
    let mut data = Vec::with_capacity(plan.all_coords().len() * p * p);
    for &(r, c) in plan.all_coords() {
        for y in r..r + p {
            data.extend_from_slice(&px[y * w + c..y * w + c + p]);
        }
    }
    StackBatch::new(plan.clone(), data)
}
