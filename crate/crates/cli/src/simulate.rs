use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;

use dubm3d::image::{read_image, write_image, Image, ImageFormat};
use dubm3d::ldct::{simulate_low_dose, NoiseConfig, SimMode, DEFAULT_MU_MAX, DOSE_LEVELS};
use dubm3d::phantom::{make_phantom, PhantomKind};
use dubm3d::rng::derive_seed;

use crate::config::{Config, List};
use crate::dataset::{clean_path, noisy_path, write_manifest, Entry};
use crate::error::{CliError, CliResult};

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Clean images to degrade instead of generated phantoms.
    #[arg(long, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Number of phantoms to generate.
    #[arg(long)]
    count: Option<usize>,
    /// Phantom side length in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Phantom kinds, used round-robin.
    #[arg(long)]
    kinds: Option<List<PhantomKind>>,
    /// Photon counts to simulate.
    #[arg(long)]
    photons: Option<List<u64>>,
    /// image or projection.
    #[arg(long)]
    mode: Option<SimMode>,
    #[arg(long)]
    mu_max: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(args: SimulateArgs) -> CliResult<()> {
    let cfg = Config::load(args.config.as_deref())?;
    let out: PathBuf = cfg.require("out", args.out)?;
    let count = cfg.get_or("count", args.count, 64)?;
    let size = cfg.get_or("size", args.size, 64)?;
    let kinds = cfg
        .get_or(
            "kinds",
            args.kinds,
            List(vec![PhantomKind::Disks, PhantomKind::SheppLike, PhantomKind::Piecewise]),
        )?
        .0;
    let default_doses = List(DOSE_LEVELS.iter().map(|&d| d as u64).collect());
    let photons = cfg.get_or("photons", args.photons, default_doses)?.0;
    let mode = cfg.get_or("mode", args.mode, SimMode::Image)?;
    let mu_max = cfg.get_or("mu_max", args.mu_max, DEFAULT_MU_MAX)?;
    let seed = cfg.get_or("seed", args.seed, 0)?;
    cfg.finish()?;

    if photons.iter().collect::<BTreeSet<_>>().len() != photons.len() || photons.contains(&0) {
        return Err(CliError::usage("photon counts must be positive and distinct"));
    }
    let sources: Vec<(String, Image)> = if args.input.is_empty() {
        if count == 0 {
            return Err(CliError::usage("--count must be positive"));
        }
        (0..count)
            .into_par_iter()
            .map(|i| {
                let img = make_phantom(kinds[i % kinds.len()], size, size, derive_seed(seed, i as u64))?;
                Ok((format!("phantom{i:04}"), img))
            })
            .collect::<CliResult<_>>()?
    } else {
        let mut stems = BTreeSet::new();
        args.input
            .iter()
            .map(|p| {
                let stem = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| CliError::usage(format!("{}: no file stem", p.display())))?
                    .to_string();
                if !stems.insert(stem.clone()) {
                    return Err(CliError::usage(format!("duplicate input stem {stem:?}")));
                }
                Ok((stem, read_image(p)?))
            })
            .collect::<CliResult<_>>()?
    };

    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let entries: Vec<Vec<Entry>> = sources
        .par_iter()
        .enumerate()
        .map(|(i, (stem, clean))| {
            write_image(clean, clean_path(&out, stem), ImageFormat::F32Raw)?;
            let image_seed = derive_seed(seed, i as u64);
            photons
                .iter()
                .map(|&n0| {
                    let s = derive_seed(image_seed, n0);
                    let noise = NoiseConfig {
                        photons: n0 as f64,
                        mu_max,
                        mode,
                        seed: s,
                    };
                    let noisy = simulate_low_dose(clean, &noise)?;
                    write_image(&noisy, noisy_path(&out, stem, n0), ImageFormat::F32Raw)?;
                    Ok(Entry {
                        stem: stem.clone(),
                        photons: n0,
                        seed: s,
                        mode,
                    })
                })
                .collect::<CliResult<Vec<_>>>()
        })
        .collect::<CliResult<_>>()?;
    let entries: Vec<Entry> = entries.into_iter().flatten().collect();
    write_manifest(&out, &entries)?;
    eprintln!(
        "wrote {} images at {} dose levels to {}",
        sources.len(),
        photons.len(),
        out.display()
    );
    Ok(())
}
