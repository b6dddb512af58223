use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::Args;
use rayon::prelude::*;

use dubm3d::image::Image;
use dubm3d::ldct::{DOSE_LEVELS, TRAINING_DOSE};
use dubm3d::metrics::{psnr, ssim};
use dubm3d::pipeline::{denoise_pipeline, Method};
use dubm3d::train::Checkpoint;

use crate::config::{Config, List};
use crate::dataset::Dataset;
use crate::error::{CliError, CliResult};
use crate::load_method_checkpoint;
use crate::train::load_pairs;

/// A benchmark column: the untouched input or one of the denoisers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Noisy,
    Denoiser(Method),
}

impl FromStr for Column {
    type Err = dubm3d::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "noisy" {
            Ok(Column::Noisy)
        } else {
            s.parse().map(Column::Denoiser)
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Noisy => f.write_str("noisy"),
            Column::Denoiser(m) => m.fmt(f),
        }
    }
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory written by `simulate`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Quality report (`photons,method,psnr_db,ssim,n_images`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cost report (`method,param_count,mean_inference_ms`); defaults next to `--out`.
    #[arg(long)]
    timing_out: Option<PathBuf>,
    #[arg(long)]
    du_bm3d: Option<PathBuf>,
    #[arg(long)]
    unet_image: Option<PathBuf>,
    /// Columns to score; defaults to noisy, bm3d-classic and every method with a checkpoint.
    #[arg(long)]
    methods: Option<List<Column>>,
    #[arg(long)]
    photons: Option<List<u64>>,
    /// Dose whose test images are used for timing.
    #[arg(long)]
    timing_photons: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    peak: Option<f64>,
}

pub fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

pub fn fmt_ssim(v: f64) -> String {
    format!("{v:.6}")
}

struct Runner {
    column: Column,
    checkpoint: Option<Checkpoint>,
}

impl Runner {
    fn run(&self, img: &Image) -> CliResult<Image> {
        match self.column {
            Column::Noisy => Ok(img.clone()),
            Column::Denoiser(m) => Ok(denoise_pipeline(img, m, self.checkpoint.as_ref())?),
        }
    }

    fn param_count(&self) -> usize {
        self.checkpoint.as_ref().map_or(0, |c| c.params.param_count())
    }
}

fn default_timing_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    out.with_file_name(format!("{stem}.timing.csv"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn run(args: BenchArgs) -> CliResult<()> {
    let cfg = Config::load(args.config.as_deref())?;
    let dir: PathBuf = cfg.require("data", args.data)?;
    let out: PathBuf = cfg.require("out", args.out)?;
    let timing_out = cfg
        .get("timing_out", args.timing_out)?
        .unwrap_or_else(|| default_timing_path(&out));
    let du: Option<PathBuf> = cfg.get("du_bm3d", args.du_bm3d)?;
    let unet: Option<PathBuf> = cfg.get("unet_image", args.unet_image)?;
    let columns = match cfg.get::<List<Column>>("methods", args.methods)? {
        Some(List(c)) => c,
        None => {
            let mut c = vec![Column::Noisy, Column::Denoiser(Method::Bm3dClassic)];
            if du.is_some() {
                c.push(Column::Denoiser(Method::DuBm3d));
            }
            if unet.is_some() {
                c.push(Column::Denoiser(Method::UnetImage));
            }
            c
        }
    };
    let default_doses = List(DOSE_LEVELS.iter().map(|&d| d as u64).collect());
    let doses = cfg.get_or("photons", args.photons, default_doses)?.0;
    let timing_dose = cfg.get("timing_photons", args.timing_photons)?;
    let repeats = cfg.get_or("repeats", args.repeats, 3)?;
    let split_seed = cfg.get_or("split_seed", args.split_seed, 0)?;
    let peak = cfg.get_or("peak", args.peak, 1.0)?;
    cfg.finish()?;
    if repeats == 0 {
        return Err(CliError::usage("--repeats must be positive"));
    }

    let runners = columns
        .iter()
        .map(|&column| {
            let checkpoint = match column {
                Column::Denoiser(m @ Method::DuBm3d) => load_method_checkpoint(m, du.as_deref())?,
                Column::Denoiser(m @ Method::UnetImage) => load_method_checkpoint(m, unet.as_deref())?,
                _ => None,
            };
            Ok(Runner { column, checkpoint })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let data = Dataset::open(&dir)?;
    for &d in &doses {
        data.check_dose(d)?;
    }
    let (_, _, test) = data.split(split_seed)?;
    if test.is_empty() {
        return Err(CliError::data("test split is empty"));
    }

    let mut report = csv::Writer::from_path(&out)?;
    report.write_record(["photons", "method", "psnr_db", "ssim", "n_images"])?;
    for &dose in &doses {
        let pairs = load_pairs(&data, &test, dose)?;
        for runner in &runners {
            let scores: Vec<(f64, f64)> = pairs
                .par_iter()
                .map(|(noisy, clean)| {
                    let x = runner.run(noisy)?;
                    Ok((psnr(&x, clean, peak)?, ssim(&x, clean, peak)?))
                })
                .collect::<CliResult<_>>()?;
            let n = scores.len() as f64;
            let mean_psnr = scores.iter().map(|s| s.0).sum::<f64>() / n;
            let mean_ssim = scores.iter().map(|s| s.1).sum::<f64>() / n;
            report.write_record([
                dose.to_string(),
                runner.column.to_string(),
                fmt_psnr(mean_psnr),
                fmt_ssim(mean_ssim),
                scores.len().to_string(),
            ])?;
        }
    }
    report.flush().map_err(|e| CliError::io(&out, e))?;

    let timing_dose = timing_dose.unwrap_or_else(|| {
        let training = TRAINING_DOSE as u64;
        if doses.contains(&training) {
            training
        } else {
            doses[0]
        }
    });
    data.check_dose(timing_dose)?;
    let inputs: Vec<Image> = load_pairs(&data, &test, timing_dose)?
        .into_iter()
        .map(|p| p.0)
        .collect();
    let mut timing = csv::Writer::from_path(&timing_out)?;
    timing.write_record(["method", "param_count", "mean_inference_ms"])?;
    for runner in runners.iter().filter(|r| r.column != Column::Noisy) {
        let mut per_image = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            for img in &inputs {
                runner.run(img)?;
            }
            per_image.push(start.elapsed().as_secs_f64() * 1e3 / inputs.len() as f64);
        }
        timing.write_record([
            runner.column.to_string(),
            runner.param_count().to_string(),
            format!("{:.3}", median(per_image)),
        ])?;
    }
    timing.flush().map_err(|e| CliError::io(&timing_out, e))?;
    Ok(())
}
