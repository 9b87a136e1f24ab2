//! Resizing and label-consistent augmentation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sample::{Mask, Sample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Resizes a sample to `size × size`: bilinear for the image, nearest for the mask.
pub fn resize(sample: &Sample, size: usize) -> Result<Sample> {
    if size < 16 || size % 16 != 0 {
        return Err(Error::validation(format!(
            "resize target {size} must be at least 16 and divisible by 16"
        )));
    }
    if sample.height() == size && sample.width() == size {
        return Ok(sample.clone());
    }
    Sample::new(
        sample.id.clone(),
        resize_image(&sample.image, size, size)?,
        resize_mask(&sample.mask, size, size),
    )
}

/// Half-pixel-centred bilinear resampling of every plane of `[n, c, h, w]`.
pub fn resize_image(image: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    let [n, c, h, w] = image.dims4()?;
    if (h, w) == (out_h, out_w) {
        return Ok(image.clone());
    }
    let axis = |out: usize, len: usize| -> Vec<(usize, usize, f32)> {
        (0..out)
            .map(|d| {
                let src = ((d as f64 + 0.5) * len as f64 / out as f64 - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(len - 1);
                let i1 = (i0 + 1).min(len - 1);
                (i0, i1, (src - i0 as f64) as f32)
            })
            .collect()
    };
    let ys = axis(out_h, h);
    let xs = axis(out_w, w);
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    for p in 0..n * c {
        let plane = &image.data()[p * h * w..(p + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::from_vec(&[n, c, out_h, out_w], out)
}

/// Source index of output position `d` under nearest-neighbour resampling.
pub fn nearest_index(d: usize, len: usize, out: usize) -> usize {
    (((d as f64 + 0.5) * len as f64 / out as f64).floor() as usize).min(len - 1)
}

pub fn resize_mask(mask: &Mask, out_h: usize, out_w: usize) -> Mask {
    let mut labels = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let sy = nearest_index(y, mask.height, out_h);
        for x in 0..out_w {
            labels.push(mask.at(sy, nearest_index(x, mask.width, out_w)));
        }
    }
    Mask {
        height: out_h,
        width: out_w,
        labels,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rotation {
    None,
    /// Uniform over 0°, 90°, 180°, 270°.
    RightAngles,
    /// Uniform angle in `[-max_degrees, max_degrees]`; image bilinear, mask nearest, zero fill.
    Free { max_degrees: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    pub rotation: Rotation,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            horizontal_flip: true,
            vertical_flip: true,
            rotation: Rotation::RightAngles,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            horizontal_flip: false,
            vertical_flip: false,
            rotation: Rotation::None,
        }
    }
}

/// A single geometric transform applied identically to image and mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    FlipHorizontal,
    FlipVertical,
    /// Counter-clockwise quarter turns.
    Rot90(u8),
    Rotate { degrees: f64 },
}

impl Transform {
    /// Output dims for an `h × w` input.
    pub fn output_dims(self, h: usize, w: usize) -> (usize, usize) {
        match self {
            Self::Rot90(k) if k % 2 == 1 => (w, h),
            _ => (h, w),
        }
    }

    /// Source pixel for output `(y, x)` of an exact (flip / quarter-turn) transform.
    pub fn source(self, y: usize, x: usize, h: usize, w: usize) -> Option<(usize, usize)> {
        match self {
            Self::FlipHorizontal => Some((y, w - 1 - x)),
            Self::FlipVertical => Some((h - 1 - y, x)),
            Self::Rot90(k) => Some(match k % 4 {
                0 => (y, x),
                1 => (x, w - 1 - y),
                2 => (h - 1 - y, w - 1 - x),
                _ => (h - 1 - x, y),
            }),
            Self::Rotate { .. } => None,
        }
    }

    pub fn apply(self, sample: &Sample) -> Result<Sample> {
        let (h, w) = (sample.height(), sample.width());
        let (oh, ow) = self.output_dims(h, w);
        let channels = sample.channels();
        let src_img = sample.image.data();
        let mut image = vec![0f32; channels * oh * ow];
        let mut labels = vec![0u8; oh * ow];
        match self {
            Self::Rotate { degrees } => {
                let theta = degrees.to_radians();
                let (cos, sin) = (theta.cos(), theta.sin());
                let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
                for y in 0..oh {
                    for x in 0..ow {
                        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                        let sx = cos * dx + sin * dy + cx - 0.5;
                        let sy = -sin * dx + cos * dy + cy - 0.5;
                        let (nx, ny) = (sx.round(), sy.round());
                        if nx >= 0.0 && ny >= 0.0 && (nx as usize) < w && (ny as usize) < h {
                            labels[y * ow + x] = sample.mask.at(ny as usize, nx as usize);
                        }
                        for c in 0..channels {
                            let plane = &src_img[c * h * w..(c + 1) * h * w];
                            image[(c * oh + y) * ow + x] = bilinear_zero(plane, h, w, sy, sx);
                        }
                    }
                }
            }
            _ => {
                for y in 0..oh {
                    for x in 0..ow {
                        let (sy, sx) = self.source(y, x, h, w).expect("exact transform");
                        labels[y * ow + x] = sample.mask.at(sy, sx);
                        for c in 0..channels {
                            image[(c * oh + y) * ow + x] = src_img[(c * h + sy) * w + sx];
                        }
                    }
                }
            }
        }
        Sample::new(
            sample.id.clone(),
            Tensor::from_vec(&[1, channels, oh, ow], image)?,
            Mask::new(oh, ow, labels)?,
        )
    }
}

fn bilinear_zero(plane: &[f32], h: usize, w: usize, y: f64, x: f64) -> f32 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let mut acc = 0.0;
    for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
        for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
            let (yy, xx) = (y0 + dy, x0 + dx);
            if yy >= 0.0 && xx >= 0.0 && (yy as usize) < h && (xx as usize) < w {
                acc += wy * wx * f64::from(plane[yy as usize * w + xx as usize]);
            }
        }
    }
    acc as f32
}

/// Draws the transforms for one sample: horizontal flip, vertical flip, rotation.
pub fn draw_transforms<R: Rng>(config: &AugmentConfig, rng: &mut R) -> Vec<Transform> {
    let mut out = Vec::new();
    // draws happen unconditionally so the stream does not depend on which switches are on
    let h = rng.gen_bool(0.5);
    let v = rng.gen_bool(0.5);
    let quarter = rng.gen_range(0..4u8);
    let unit: f64 = rng.gen_range(-1.0..=1.0);
    if config.horizontal_flip && h {
        out.push(Transform::FlipHorizontal);
    }
    if config.vertical_flip && v {
        out.push(Transform::FlipVertical);
    }
    match config.rotation {
        Rotation::None => {}
        Rotation::RightAngles if quarter > 0 => out.push(Transform::Rot90(quarter)),
        Rotation::RightAngles => {}
        Rotation::Free { max_degrees } => out.push(Transform::Rotate {
            degrees: unit * max_degrees,
        }),
    }
    out
}

pub fn augment<R: Rng>(sample: &Sample, config: &AugmentConfig, rng: &mut R) -> Result<Sample> {
    let mut out = sample.clone();
    for t in draw_transforms(config, rng) {
        out = t.apply(&out)?;
    }
    Ok(out)
}
