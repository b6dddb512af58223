//! Simulated datasets on disk: paired DUB1 files plus a manifest.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use dubm3d::image::{read_image, Image};
use dubm3d::ldct::SimMode;
use dubm3d::train::split_dataset;

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.csv";
pub const SPLIT_FRACTIONS: [f64; 3] = [0.69, 0.14, 0.17];

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub stem: String,
    pub photons: u64,
    pub seed: u64,
    pub mode: SimMode,
}

pub fn clean_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.clean.f32"))
}

pub fn noisy_path(dir: &Path, stem: &str, photons: u64) -> PathBuf {
    dir.join(format!("{stem}.n{photons}.f32"))
}

pub fn write_manifest(dir: &Path, entries: &[Entry]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(dir.join(MANIFEST))?;
    w.write_record(["stem", "photons", "seed", "mode"])?;
    for e in entries {
        w.write_record([
            e.stem.clone(),
            e.photons.to_string(),
            e.seed.to_string(),
            e.mode.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&dir.join(MANIFEST), e))
}

#[derive(Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub entries: Vec<Entry>,
}

impl Dataset {
    pub fn open(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST);
        let mut r = csv::Reader::from_path(&path)?;
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["stem", "photons", "seed", "mode"] {
            return Err(CliError::data(format!(
                "{}: unexpected header {headers:?}",
                path.display()
            )));
        }
        let mut entries = Vec::new();
        for (n, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| CliError::data(format!("{} row {}: bad {what}", path.display(), n + 2));
            entries.push(Entry {
                stem: rec[0].to_string(),
                photons: rec[1].parse().map_err(|_| bad("photons"))?,
                seed: rec[2].parse().map_err(|_| bad("seed"))?,
                mode: rec[3].parse().map_err(|_| bad("mode"))?,
            });
        }
        if entries.is_empty() {
            return Err(CliError::data(format!("{}: no entries", path.display())));
        }
        Ok(Dataset {
            dir: dir.to_path_buf(),
            entries,
        })
    }

    /// Distinct stems in manifest order.
    pub fn stems(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.stem.clone()))
            .map(|e| e.stem.clone())
            .collect()
    }

    pub fn check_dose(&self, photons: u64) -> CliResult<()> {
        for stem in self.stems() {
            if !self.entries.iter().any(|e| e.stem == stem && e.photons == photons) {
                return Err(CliError::data(format!(
                    "dataset has no {photons}-photon image for {stem}"
                )));
            }
        }
        Ok(())
    }

    /// `(train, validation, test)` stems.
    pub fn split(&self, seed: u64) -> CliResult<(Vec<String>, Vec<String>, Vec<String>)> {
        Ok(split_dataset(self.stems(), SPLIT_FRACTIONS, seed)?)
    }

    pub fn clean(&self, stem: &str) -> CliResult<Image> {
        Ok(read_image(clean_path(&self.dir, stem))?)
    }

    pub fn noisy(&self, stem: &str, photons: u64) -> CliResult<Image> {
        Ok(read_image(noisy_path(&self.dir, stem, photons))?)
    }
}
