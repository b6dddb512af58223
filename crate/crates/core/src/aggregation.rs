//! Weighted scatter of patch stacks back onto the image grid, and its
//! transpose.
//!
//! For a fixed plan the map `stacks -> image` is linear:
//! `x[p] = sum_{(g,k) covers p} w_g s[g,k,p] / D[p]` with
//! `D[p] = sum_{(g,k) covers p} w_g`. [`AggregationOperator`] caches `D`
//! and exposes both directions, so it can sit on a [`Tape`] and pass image
//! gradients back to the stacks.
//!
//! [`Tape`]: crate::tensor::Tape

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::matching::{MatchPlan, StackBatch};
use crate::tensor::LinearMap;

#[derive(Debug, Clone)]
pub struct AggregationOperator {
    plan: Arc<MatchPlan>,
    denominator: Vec<f64>,
}

impl AggregationOperator {
    /// Fails with [`Error::Uncovered`] if some pixel lies in no patch.
    pub fn new(plan: Arc<MatchPlan>) -> Result<Self> {
        let (h, w) = plan.image_shape();
        let p = plan.patch();
        let k = plan.group_size();
        let mut denominator = vec![0.0f64; h * w];
        for g in 0..plan.num_groups() {
            let wg = plan.weight(g);
            for &(r, c) in plan.coords(g) {
                for y in r..r + p {
                    for d in &mut denominator[y * w + c..y * w + c + p] {
                        *d += wg;
                    }
                }
            }
        }
        debug_assert_eq!(plan.all_coords().len(), plan.num_groups() * k);
        if let Some(i) = denominator.iter().position(|&d| d <= 0.0) {
            return Err(Error::Uncovered { row: i / w, col: i % w });
        }
        Ok(AggregationOperator { plan, denominator })
    }

    pub fn plan(&self) -> &Arc<MatchPlan> {
        &self.plan
    }

    pub fn denominator(&self) -> &[f64] {
        &self.denominator
    }

    fn stack_len(&self) -> usize {
        let p = self.plan.patch();
        self.plan.group_size() * p * p
    }

    fn check_stacks(&self, len: usize) -> Result<()> {
        let expected = self.plan.num_groups() * self.stack_len();
        if len != expected {
            return Err(Error::shape("aggregate", &[expected], &[len]));
        }
        Ok(())
    }

    /// Weighted average of overlapping patches, on raw `[G, K, P, P]` data.
    pub fn apply_raw(&self, stacks: &[f32]) -> Result<Vec<f32>> {
        self.check_stacks(stacks.len())?;
        let (_, w) = self.plan.image_shape();
        let p = self.plan.patch();
        let mut num = vec![0.0f64; self.denominator.len()];
        let mut patches = stacks.chunks_exact(p * p);
        for g in 0..self.plan.num_groups() {
            let wg = self.plan.weight(g);
            for &(r, c) in self.plan.coords(g) {
                let patch = patches.next().expect("length checked");
                for dy in 0..p {
                    let row = &mut num[(r + dy) * w + c..(r + dy) * w + c + p];
                    for (n, &v) in row.iter_mut().zip(&patch[dy * p..(dy + 1) * p]) {
                        *n += wg * v as f64;
                    }
                }
            }
        }
        Ok(num.iter().zip(&self.denominator).map(|(n, d)| (n / d) as f32).collect())
    }

    /// Transpose of [`Self::apply_raw`]: slot `(g, k)` at pixel `p` receives
    /// `w_g y[p] / D[p]`.
    pub fn adjoint_raw(&self, image_grad: &[f32]) -> Result<Vec<f32>> {
        if image_grad.len() != self.denominator.len() {
            let (h, w) = self.plan.image_shape();
            return Err(Error::shape("aggregate_adjoint", &[h, w], &[image_grad.len()]));
        }
        let (_, w) = self.plan.image_shape();
        let p = self.plan.patch();
        let scaled: Vec<f64> = image_grad
            .iter()
            .zip(&self.denominator)
            .map(|(&y, d)| y as f64 / d)
            .collect();
        let mut out = Vec::with_capacity(self.plan.num_groups() * self.stack_len());
        for g in 0..self.plan.num_groups() {
            let wg = self.plan.weight(g);
            for &(r, c) in self.plan.coords(g) {
                for y in r..r + p {
                    out.extend(scaled[y * w + c..y * w + c + p].iter().map(|s| (wg * s) as f32));
                }
            }
        }
        Ok(out)
    }

    pub fn aggregate(&self, stacks: &StackBatch) -> Result<Image> {
        if stacks.plan().image_shape() != self.plan.image_shape() || stacks.shape() != self.stacks_shape() {
            return Err(Error::shape("aggregate", &self.stacks_shape(), &stacks.shape()));
        }
        let (h, w) = self.plan.image_shape();
        Image::new(h, w, self.apply_raw(stacks.data())?)
    }

    pub fn adjoint(&self, image_grad: &Image) -> Result<StackBatch> {
        StackBatch::new(self.plan.clone(), self.adjoint_raw(image_grad.pixels())?)
    }

    pub fn stacks_shape(&self) -> [usize; 4] {
        let p = self.plan.patch();
        [self.plan.num_groups(), self.plan.group_size(), p, p]
    }
}

impl LinearMap for AggregationOperator {
    fn input_shape(&self) -> Vec<usize> {
        self.stacks_shape().to_vec()
    }

    fn output_shape(&self) -> Vec<usize> {
        let (h, w) = self.plan.image_shape();
        vec![h, w]
    }

    fn apply(&self, input: &[f32]) -> Vec<f32> {
        self.apply_raw(input).expect("tape checked the input shape")
    }

    fn adjoint(&self, output_grad: &[f32]) -> Vec<f32> {
        self.adjoint_raw(output_grad).expect("tape checked the output shape")
    }
}

/// Aggregates `stacks` with the weights stored in `plan`.
pub fn aggregate(stacks: &StackBatch, plan: &Arc<MatchPlan>) -> Result<Image> {
    AggregationOperator::new(plan.clone())?.aggregate(stacks)
}

pub fn aggregate_adjoint(image_grad: &Image, plan: &Arc<MatchPlan>) -> Result<StackBatch> {
    AggregationOperator::new(plan.clone())?.adjoint(image_grad)
}
