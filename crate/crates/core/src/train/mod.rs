//! End-to-end training of the learnable filter.
//!
//! In `du-bm3d` mode a sample's matching plan is computed once from its
//! noisy image and kept; each step then runs
//! `gather -> network -> aggregate -> MSE` on a fresh tape. The plan and
//! aggregation weights are plain data outside the tape, so gradients reach
//! only the network parameters, through the aggregation adjoint.

mod adam;
mod checkpoint;
mod split;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use split::split_dataset;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::aggregation::AggregationOperator;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::matching::{gather_stacks, plan_matches, MatchConfig, MatchPlan};
use crate::rng::{derive_seed, Rng};
use crate::tensor::{Tape, Tensor};
use crate::unet::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Network applied to block-matched stacks between fixed matching and aggregation.
    DuBm3d,
    /// Network applied directly to whole images.
    UnetImage,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "du-bm3d" => Ok(Mode::DuBm3d),
            "unet-image" => Ok(Mode::UnetImage),
            other => Err(Error::InvalidArgument(format!("unknown training mode {other:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::DuBm3d => "du-bm3d",
            Mode::UnetImage => "unet-image",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
            mode: Mode::DuBm3d,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        if !(a.lr > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid optimizer settings {a:?}")));
        }
        Ok(())
    }
}

/// Per-image mean squared error.
pub fn mse_loss(pred: &Image, target: &Image) -> Result<f64> {
    if pred.shape() != target.shape() {
        let (a, b) = (pred.shape(), target.shape());
        return Err(Error::shape("mse_loss", &[a.0, a.1], &[b.0, b.1]));
    }
    let n = pred.pixels().len() as f64;
    Ok(pred
        .pixels()
        .iter()
        .zip(target.pixels())
        .map(|(&a, &b)| ((a - b) as f64).powi(2))
        .sum::<f64>()
        / n)
}

/// One `(low-dose, normal-dose)` pair with everything that depends only on
/// the input precomputed.
pub struct Sample {
    input: Tensor,
    target: Vec<f32>,
    aggregation: Option<Arc<AggregationOperator>>,
}

impl Sample {
    pub fn new(
        noisy: &Image,
        clean: &Image,
        mode: Mode,
        matching: &MatchConfig,
        spatial_multiple: usize,
    ) -> Result<Self> {
        if noisy.shape() != clean.shape() {
            let (a, b) = (noisy.shape(), clean.shape());
            return Err(Error::shape("training pair", &[a.0, a.1], &[b.0, b.1]));
        }
        match mode {
            Mode::DuBm3d => {
                // matching sees the noisy image only
                let plan = Arc::new(plan_matches(noisy, matching)?);
                let stacks = gather_stacks(noisy, &plan)?;
                let shape = stacks.shape().to_vec();
                Ok(Sample {
                    input: Tensor::new(shape, stacks.into_data())?,
                    target: clean.pixels().to_vec(),
                    aggregation: Some(Arc::new(AggregationOperator::new(plan)?)),
                })
            }
            Mode::UnetImage => {
                let m = spatial_multiple;
                let (h, w) = noisy.shape();
                let (hp, wp) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
                Ok(Sample {
                    input: Tensor::new(vec![1, 1, hp, wp], noisy.pad_reflect(hp, wp)?.into_pixels())?,
                    target: clean.pad_reflect(hp, wp)?.into_pixels(),
                    aggregation: None,
                })
            }
        }
    }

    pub fn plan(&self) -> Option<&Arc<MatchPlan>> {
        self.aggregation.as_ref().map(|a| a.plan())
    }
}

pub fn prepare_samples(
    pairs: &[(Image, Image)],
    mode: Mode,
    matching: &MatchConfig,
    params: &ModelParams,
) -> Result<Vec<Sample>> {
    let m = params.descriptor().spatial_multiple();
    pairs
        .par_iter()
        .map(|(noisy, clean)| Sample::new(noisy, clean, mode, matching, m))
        .collect()
}

/// Loss of one sample and, if `with_grad`, its gradient for every
/// parameter tensor.
pub fn sample_loss(params: &ModelParams, sample: &Sample, with_grad: bool) -> Result<(f64, Option<Vec<Vec<f32>>>)> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, with_grad);
    let x = tape.leaf(sample.input.clone());
    let mut y = params.forward(&mut tape, &vars, x)?;
    if let Some(agg) = &sample.aggregation {
        y = tape.linear(y, agg.clone())?;
    }
    let loss = tape.mse(y, &sample.target)?;
    let value = tape.value(loss).data()[0] as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }
    if !with_grad {
        return Ok((value, None));
    }
    tape.backward(loss)?;
    let grads = vars
        .iter()
        .map(|&v| {
            tape.grad(v)
                .map(<[f32]>::to_vec)
                .unwrap_or_else(|| vec![0.0; tape.value(v).numel()])
        })
        .collect();
    Ok((value, Some(grads)))
}

/// Mean loss and mean gradient over `batch`. Per-sample work may run in
/// parallel; the reduction is always in batch order.
pub fn batch_gradient(params: &ModelParams, batch: &[&Sample]) -> Result<(f64, Vec<Vec<f32>>)> {
    let results: Vec<(f64, Option<Vec<Vec<f32>>>)> = batch
        .par_iter()
        .map(|s| sample_loss(params, s, true))
        .collect::<Result<_>>()?;
    let n = batch.len() as f32;
    let mut total = 0.0;
    let mut acc: Option<Vec<Vec<f32>>> = None;
    for (loss, grads) in results {
        total += loss;
        let grads = grads.expect("requested");
        match &mut acc {
            None => acc = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    let mut grads = acc.ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    grads.iter_mut().flatten().for_each(|g| *g /= n);
    Ok((total / batch.len() as f64, grads))
}

pub fn evaluate_loss(params: &ModelParams, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| sample_loss(params, s, false).map(|r| r.0))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / samples.len() as f64)
}

/// Visiting order for `epoch`, a function of `(seed, epoch)` only.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(derive_seed(seed, epoch as u64)).shuffle(&mut order);
    order
}

/// One pass over `samples` in shuffled mini-batches; returns the mean
/// training loss of the pass.
pub fn train_epoch(
    samples: &[Sample],
    params: &mut ModelParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let order = epoch_order(samples.len(), cfg.seed, epoch);
    let mut total = 0.0;
    for chunk in order.chunks(cfg.batch_size) {
        let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
        let (loss, grads) = batch_gradient(params, &batch)?;
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        adam_step(params, &grads, state, &cfg.adam)?;
        total += loss * batch.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Runs `cfg.epochs` epochs, calling `on_epoch` after each.
pub fn train(
    samples: &[Sample],
    validation: &[Sample],
    params: &mut ModelParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<Vec<EpochReport>> {
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let train_loss = train_epoch(samples, params, state, cfg, epoch)?;
        let val_loss = if validation.is_empty() {
            None
        } else {
            Some(evaluate_loss(params, validation)?)
        };
        let report = EpochReport {
            epoch,
            train_loss,
            val_loss,
        };
        on_epoch(&report);
        reports.push(report);
    }
    Ok(reports)
}
