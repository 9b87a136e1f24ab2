//! Directory datasets: `<root>/images/<id>.pgm|ppm` paired with `<root>/masks/<id>.pgm`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::netpbm::PnmImage;
use super::sample::{Mask, Sample};
use super::synthetic::{generate_synthetic, SyntheticSpec};
use super::transform::resize;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Directory { root: PathBuf },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: DataSource,
    /// Square side every sample is resized to.
    pub size: usize,
    pub num_classes: usize,
    pub channels: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic(SyntheticSpec::default()),
            size: 64,
            num_classes: 2,
            channels: 3,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 16 || self.size % 16 != 0 {
            return Err(Error::validation(format!(
                "dataset size {} must be at least 16 and divisible by 16",
                self.size
            )));
        }
        if let DataSource::Synthetic(s) = &self.source {
            s.validate()?;
            if s.num_classes != self.num_classes || s.channels != self.channels {
                return Err(Error::validation(format!(
                    "synthetic source produces {} classes / {} channels but the dataset expects {} / {}",
                    s.num_classes, s.channels, self.num_classes, self.channels
                )));
            }
        }
        Ok(())
    }

    /// Loads or generates the samples, resized to `size`. `seed` only affects synthetic sources.
    pub fn materialize(&self, seed: u64) -> Result<Vec<Sample>> {
        self.validate()?;
        let samples = match &self.source {
            DataSource::Directory { root } => load_dataset(root, self.num_classes, self.channels)?,
            DataSource::Synthetic(s) => generate_synthetic(s, seed)?,
        };
        samples.iter().map(|s| resize(s, self.size)).collect()
    }
}

fn ingestion(path: &Path, message: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn stems(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.exists() {
        return Ok(out);
    }
    let entries = fs::read_dir(dir).map_err(|e| ingestion(dir, e.to_string()))?;
    for entry in entries {
        let path = entry.map_err(|e| ingestion(dir, e.to_string()))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !extensions.contains(&ext) {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| ingestion(&path, "file name is not valid UTF-8"))?
            .to_string();
        if let Some(prev) = out.insert(stem, path.clone()) {
            return Err(ingestion(&path, format!("duplicate id, also present as {}", prev.display())));
        }
    }
    Ok(out)
}

/// Reads every image/mask pair under `root`, sorted by id. Grayscale images are
/// replicated when three channels are requested.
pub fn load_dataset(root: &Path, num_classes: usize, channels: usize) -> Result<Vec<Sample>> {
    let images = stems(&root.join("images"), &["pgm", "ppm"])?;
    let masks = stems(&root.join("masks"), &["pgm"])?;
    if let Some((id, path)) = masks.iter().find(|(id, _)| !images.contains_key(*id)) {
        return Err(ingestion(path, format!("mask `{id}` has no matching image")));
    }
    let mut samples = Vec::with_capacity(images.len());
    for (id, image_path) in &images {
        let mask_path = masks
            .get(id)
            .ok_or_else(|| ingestion(image_path, format!("image `{id}` has no matching mask")))?;
        let img = PnmImage::read(image_path)?;
        let raw = PnmImage::read(mask_path)?;
        if raw.channels != 1 {
            return Err(ingestion(mask_path, "masks must be single-channel PGM"));
        }
        if (raw.width, raw.height) != (img.width, img.height) {
            return Err(ingestion(
                mask_path,
                format!(
                    "mask is {}x{} but the image is {}x{}",
                    raw.width, raw.height, img.width, img.height
                ),
            ));
        }
        if let Some(bad) = raw.pixels.iter().find(|&&l| usize::from(l) >= num_classes) {
            return Err(ingestion(
                mask_path,
                format!("label {bad} is not below num_classes {num_classes}"),
            ));
        }
        let image = pnm_to_tensor(&img, channels).map_err(|e| ingestion(image_path, e.to_string()))?;
        let mask = Mask::new(raw.height, raw.width, raw.pixels)?;
        samples.push(Sample::new(id.clone(), image, mask)?);
    }
    Ok(samples)
}

pub fn pnm_to_tensor(img: &PnmImage, channels: usize) -> Result<Tensor<f32>> {
    let plane = img.width * img.height;
    let source = match (img.channels, channels) {
        (a, b) if a == b => a,
        (1, 3) => 1,
        (a, b) => return Err(Error::validation(format!("image has {a} channels, expected {b}"))),
    };
    let mut data = vec![0f32; channels * plane];
    for c in 0..channels {
        let sc = if source == 1 { 0 } else { c };
        for p in 0..plane {
            data[c * plane + p] = f32::from(img.pixels[p * source + sc]) / 255.0;
        }
    }
    Tensor::from_vec(&[1, channels, img.height, img.width], data)
}

/// Converts the image of a sample back to 8-bit NetPBM.
pub fn sample_to_pnm(sample: &Sample) -> Result<PnmImage> {
    let (c, h, w) = (sample.channels(), sample.height(), sample.width());
    if c != 1 && c != 3 {
        return Err(Error::validation(format!("cannot export a {c}-channel image")));
    }
    let data = sample.image.data();
    let mut pixels = Vec::with_capacity(c * h * w);
    for p in 0..h * w {
        for ch in 0..c {
            pixels.push((data[ch * h * w + p].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    PnmImage::new(w, h, c, pixels)
}

/// Writes samples in the directory layout read by [`load_dataset`].
pub fn save_dataset(samples: &[Sample], root: &Path) -> Result<()> {
    let images = root.join("images");
    let masks = root.join("masks");
    fs::create_dir_all(&images)?;
    fs::create_dir_all(&masks)?;
    for s in samples {
        let img = sample_to_pnm(s)?;
        img.write(&images.join(format!("{}.{}", s.id, img.extension())))?;
        PnmImage::gray(s.width(), s.height(), s.mask.labels.clone())?
            .write(&masks.join(format!("{}.pgm", s.id)))?;
    }
    Ok(())
}
