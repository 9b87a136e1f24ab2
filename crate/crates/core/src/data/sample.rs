use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Class-index mask, row-major `height × width`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::shape(format!(
                "{} labels for a {height}x{width} mask",
                labels.len()
            )));
        }
        Ok(Self { height, width, labels })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Self {
        Self {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn max_label(&self) -> Option<u8> {
        self.labels.iter().copied().max()
    }

    pub fn to_targets(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| usize::from(l)).collect()
    }
}

/// One image with its segmentation mask. Image values lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// `[1, channels, H, W]`.
    pub image: Tensor<f32>,
    pub mask: Mask,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: Tensor<f32>, mask: Mask) -> Result<Self> {
        let [n, _, h, w] = image.dims4()?;
        if n != 1 || h != mask.height || w != mask.width {
            return Err(Error::shape(format!(
                "image {:?} does not match mask {}x{}",
                image.shape(),
                mask.height,
                mask.width
            )));
        }
        Ok(Self {
            id: id.into(),
            image,
            mask,
        })
    }

    pub fn channels(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.mask.height
    }

    pub fn width(&self) -> usize {
        self.mask.width
    }
}
