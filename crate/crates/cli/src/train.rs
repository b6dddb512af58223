use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;

use dubm3d::image::Image;
use dubm3d::ldct::TRAINING_DOSE;
use dubm3d::train::{prepare_samples, save_checkpoint, train, AdamConfig, AdamState, Checkpoint, Mode, TrainConfig};
use dubm3d::unet::{Descriptor, ModelParams};

use crate::config::{Config, List};
use crate::dataset::Dataset;
use crate::error::{CliError, CliResult};
use crate::MatchArgs;

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory written by `simulate`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// du-bm3d or unet-image.
    #[arg(long)]
    mode: Option<Mode>,
    /// Dose of the training inputs.
    #[arg(long)]
    photons: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Seeds initialization and batch order.
    #[arg(long)]
    seed: Option<u64>,
    /// Seeds the train/validation/test split.
    #[arg(long)]
    split_seed: Option<u64>,
    /// Encoder widths, shallow to deep.
    #[arg(long)]
    widths: Option<List<usize>>,
    #[command(flatten)]
    matching: MatchArgs,
}

pub fn load_pairs(data: &Dataset, stems: &[String], photons: u64) -> CliResult<Vec<(Image, Image)>> {
    stems
        .par_iter()
        .map(|s| Ok((data.noisy(s, photons)?, data.clean(s)?)))
        .collect()
}

pub fn run(args: TrainArgs) -> CliResult<()> {
    let cfg = Config::load(args.config.as_deref())?;
    let dir: PathBuf = cfg.require("data", args.data)?;
    let out: PathBuf = cfg.require("out", args.out)?;
    let mode = cfg.get_or("mode", args.mode, Mode::DuBm3d)?;
    let photons = cfg.get_or("photons", args.photons, TRAINING_DOSE as u64)?;
    let d = TrainConfig::default();
    let train_cfg = TrainConfig {
        epochs: cfg.get_or("epochs", args.epochs, d.epochs)?,
        batch_size: cfg.get_or("batch_size", args.batch_size, d.batch_size)?,
        adam: AdamConfig {
            lr: cfg.get_or("lr", args.lr, d.adam.lr)?,
            beta1: cfg.get_or("beta1", args.beta1, d.adam.beta1)?,
            beta2: cfg.get_or("beta2", args.beta2, d.adam.beta2)?,
            eps: cfg.get_or("eps", args.eps, d.adam.eps)?,
        },
        seed: cfg.get_or("seed", args.seed, 0)?,
        mode,
    };
    let split_seed = cfg.get_or("split_seed", args.split_seed, 0)?;
    let matching = args.matching.resolve(&cfg)?;
    let channels = match mode {
        Mode::DuBm3d => matching.group_size,
        Mode::UnetImage => 1,
    };
    let widths = cfg.get::<List<usize>>("widths", args.widths)?;
    cfg.finish()?;
    train_cfg.validate()?;

    let descriptor = match widths {
        Some(List(w)) => Descriptor::new(channels, w)?,
        None => Descriptor::compact(channels),
    };
    let data = Dataset::open(&dir)?;
    data.check_dose(photons)?;
    let (train_stems, val_stems, _) = data.split(split_seed)?;
    if train_stems.is_empty() {
        return Err(CliError::data("training split is empty"));
    }

    let mut params = ModelParams::init(&descriptor, train_cfg.seed)?;
    let samples = prepare_samples(&load_pairs(&data, &train_stems, photons)?, mode, &matching, &params)?;
    let validation = prepare_samples(&load_pairs(&data, &val_stems, photons)?, mode, &matching, &params)?;
    eprintln!(
        "training {mode} ({} parameters) on {} images, validating on {}",
        params.param_count(),
        samples.len(),
        validation.len()
    );
    let mut state = AdamState::new(&params);
    let epochs = train_cfg.epochs;
    train(
        &samples,
        &validation,
        &mut params,
        &mut state,
        &train_cfg,
        |r| match r.val_loss {
            Some(v) => eprintln!(
                "epoch {}/{epochs} train_loss={:.6e} val_loss={v:.6e}",
                r.epoch + 1,
                r.train_loss
            ),
            None => eprintln!("epoch {}/{epochs} train_loss={:.6e}", r.epoch + 1, r.train_loss),
        },
    )?;

    let step = state.step;
    let ckpt = Checkpoint {
        mode,
        matching,
        params,
        adam: Some(state),
        step,
    };
    save_checkpoint(&out, &ckpt)?;
    eprintln!("saved {}", out.display());
    Ok(())
}
