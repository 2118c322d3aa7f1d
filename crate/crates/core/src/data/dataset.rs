//! Generated datasets and their directory layout:
//!
//! ```text
//! <dir>/manifest.csv           patient_id,split,image_path,mask_path
//! <dir>/images/p0007_s0.pten
//! <dir>/masks/p0007_s0.pten
//! <dir>/preview/p0007_s0.pgm   (optional)
//! ```

use std::fs;
use std::path::Path;

use privseg_tensor::io::{load_pten, save_pten};
use privseg_tensor::rng::stream_id;

use super::pgm::write_pgm;
use super::phantom::{generate_patient, PhantomSample};
use super::split::{split_dataset, Split, SplitManifest, DEFAULT_FRACTIONS};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub n_patients: usize,
    pub slices_per_patient: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub fractions: [f64; 3],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_patients: 120,
            slices_per_patient: 1,
            height: 32,
            width: 32,
            seed: 0,
            fractions: DEFAULT_FRACTIONS,
        }
    }
}

/// All samples with their split assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<PhantomSample>,
    pub manifest: SplitManifest,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<PhantomSample> {
        self.samples
            .iter()
            .filter(|s| self.manifest.split_of(s.patient_id) == Some(split))
            .cloned()
            .collect()
    }
}

/// Patients `0..n` in order; patient `p` is seeded from `(seed, p)`.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    if cfg.n_patients == 0 {
        return Err(invalid("dataset needs at least one patient"));
    }
    let mut samples = Vec::with_capacity(cfg.n_patients * cfg.slices_per_patient);
    for p in 0..cfg.n_patients {
        let seed = stream_id(&[cfg.seed, p as u64]);
        samples.extend(generate_patient(p as u32, seed, cfg.slices_per_patient, cfg.height, cfg.width)?);
    }
    let ids: Vec<u32> = (0..cfg.n_patients as u32).collect();
    let manifest = split_dataset(&ids, cfg.fractions, cfg.seed)?;
    Ok(Dataset { samples, manifest })
}

fn stem(patient: u32, slice: usize) -> String {
    format!("p{patient:04}_s{slice}")
}

pub fn write_dataset(dir: &Path, ds: &Dataset, preview: bool) -> Result<()> {
    for sub in ["images", "masks"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    if preview {
        fs::create_dir_all(dir.join("preview"))?;
    }
    let mut w = csv::Writer::from_path(dir.join("manifest.csv"))?;
    w.write_record(["patient_id", "split", "image_path", "mask_path"])?;
    let mut slice = 0;
    for (i, s) in ds.samples.iter().enumerate() {
        slice = if i > 0 && ds.samples[i - 1].patient_id == s.patient_id { slice + 1 } else { 0 };
        let split = ds
            .manifest
            .split_of(s.patient_id)
            .ok_or_else(|| invalid(format!("patient {} has no split", s.patient_id)))?;
        let name = stem(s.patient_id, slice);
        let (img, msk) = (format!("images/{name}.pten"), format!("masks/{name}.pten"));
        save_pten(dir.join(&img), &s.image)?;
        save_pten(dir.join(&msk), &s.mask)?;
        if preview {
            write_pgm(&dir.join(format!("preview/{name}.pgm")), s.image.data(), s.height(), s.width())?;
        }
        w.write_record([s.patient_id.to_string(), split.to_string(), img, msk])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join("manifest.csv");
    if !path.is_file() {
        return Err(invalid(format!("dataset manifest not found: {}", path.display())));
    }
    let mut r = csv::Reader::from_path(&path)?;
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["patient_id", "split", "image_path", "mask_path"] {
        return Err(Error::Format(format!("{}: unexpected header {:?}", path.display(), header)));
    }
    let mut samples = Vec::new();
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for row in r.records() {
        let row = row?;
        let patient_id: u32 = row[0]
            .parse()
            .map_err(|_| Error::Format(format!("{}: bad patient id {:?}", path.display(), &row[0])))?;
        let list = match row[1].parse::<Split>()? {
            Split::Train => &mut train,
            Split::Val => &mut val,
            Split::Test => &mut test,
        };
        if list.last() != Some(&patient_id) {
            list.push(patient_id);
        }
        let image = load_pten(dir.join(&row[2]))?;
        let mask = load_pten(dir.join(&row[3]))?;
        if image.shape() != mask.shape() || image.rank() != 3 || image.shape()[0] != 1 {
            return Err(Error::Format(format!("{}: image/mask shapes {:?} and {:?}", row[2].to_string(), image.shape(), mask.shape())));
        }
        samples.push(PhantomSample { patient_id, image, mask });
    }
    for l in [&mut train, &mut val, &mut test] {
        l.sort_unstable();
        l.dedup();
    }
    let n = (train.len() + val.len() + test.len()).max(1) as f64;
    let fractions = [train.len() as f64 / n, val.len() as f64 / n, test.len() as f64 / n];
    Ok(Dataset {
        samples,
        manifest: SplitManifest {
            train,
            val,
            test,
            fractions,
        },
    })
}
