mod bench;
mod config;
mod dataset;
mod error;
mod simulate;
mod train;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dubm3d::image::{read_image, write_image, ImageFormat};
use dubm3d::matching::MatchConfig;
use dubm3d::metrics::{psnr, ssim};
use dubm3d::pipeline::{denoise_pipeline, Method};
use dubm3d::train::{load_checkpoint, Checkpoint};

use config::Config;
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "dubm3d",
    version,
    about = "Block-matching denoisers with a learned collaborative filter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate phantoms and their low-dose counterparts.
    Simulate(simulate::SimulateArgs),
    /// Train a du-bm3d or unet-image checkpoint on a simulated dataset.
    Train(train::TrainArgs),
    /// Denoise a single image.
    Denoise(DenoiseArgs),
    /// PSNR and SSIM of one image against a reference.
    Eval(EvalArgs),
    /// Score every method at every dose on the test split.
    Bench(bench::BenchArgs),
}

/// Block-matching options shared by training and classic denoising.
#[derive(Args, Debug, Default)]
pub struct MatchArgs {
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    /// Maximum mean squared patch distance; `inf` disables the cut.
    #[arg(long)]
    tau: Option<f32>,
}

impl MatchArgs {
    pub fn resolve(&self, cfg: &Config) -> CliResult<MatchConfig> {
        let d = MatchConfig::default();
        let m = MatchConfig {
            patch: cfg.get_or("patch", self.patch, d.patch)?,
            stride: cfg.get_or("stride", self.stride, d.stride)?,
            window: cfg.get_or("window", self.window, d.window)?,
            group_size: cfg.get_or("group_size", self.group_size, d.group_size)?,
            tau: cfg.get_or("tau", self.tau, d.tau)?,
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Args)]
struct DenoiseArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// bm3d-classic, du-bm3d or unet-image.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// pgm8, pgm16 or f32; defaults from the output extension.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    peak: Option<f64>,
    /// Denoise the input with this method before scoring.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

pub fn load_method_checkpoint(method: Method, path: Option<&Path>) -> CliResult<Option<Checkpoint>> {
    match (method.checkpoint_mode(), path) {
        (None, _) => Ok(None),
        (Some(_), None) => Err(CliError::usage(format!("{method} needs --checkpoint"))),
        (Some(mode), Some(p)) => {
            let ckpt = load_checkpoint(p)?;
            if ckpt.mode != mode {
                return Err(CliError::usage(format!(
                    "{} holds a {} model, not {method}",
                    p.display(),
                    ckpt.mode
                )));
            }
            Ok(Some(ckpt))
        }
    }
}

fn denoise(args: DenoiseArgs) -> CliResult<()> {
    let cfg = Config::load(args.config.as_deref())?;
    let input: PathBuf = cfg.require("input", args.input)?;
    let output: PathBuf = cfg.require("output", args.output)?;
    let method: Method = cfg.require::<String>("method", args.method)?.parse()?;
    let checkpoint: Option<PathBuf> = cfg.get("checkpoint", args.checkpoint)?;
    let format = match cfg.get::<String>("format", args.format)? {
        Some(name) => ImageFormat::from_name(&name)?,
        None => ImageFormat::from_path(&output),
    };
    cfg.finish()?;

    let ckpt = load_method_checkpoint(method, checkpoint.as_deref())?;
    let img = read_image(&input)?;
    let out = denoise_pipeline(&img, method, ckpt.as_ref())?;
    let out = out.with_range(img.range().0, img.range().1)?;
    write_image(&out, &output, format)?;
    Ok(())
}

fn eval(args: EvalArgs) -> CliResult<()> {
    let cfg = Config::load(args.config.as_deref())?;
    let input: PathBuf = cfg.require("input", args.input)?;
    let reference: PathBuf = cfg.require("reference", args.reference)?;
    let peak = cfg.get_or("peak", args.peak, 1.0)?;
    let method = cfg
        .get::<String>("method", args.method)?
        .map(|m| m.parse::<Method>())
        .transpose()?;
    let checkpoint: Option<PathBuf> = cfg.get("checkpoint", args.checkpoint)?;
    cfg.finish()?;

    let mut img = read_image(&input)?;
    let reference = read_image(&reference)?;
    if let Some(method) = method {
        let ckpt = load_method_checkpoint(method, checkpoint.as_deref())?;
        img = denoise_pipeline(&img, method, ckpt.as_ref())?;
    }
    println!("psnr_db,ssim");
    println!(
        "{},{}",
        bench::fmt_psnr(psnr(&img, &reference, peak)?),
        bench::fmt_ssim(ssim(&img, &reference, peak)?)
    );
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Train(a) => train::run(a),
        Command::Denoise(a) => denoise(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench::run(a),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
