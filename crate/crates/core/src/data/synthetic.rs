//! Seeded shape datasets for small-scale experiments.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::sample::{Mask, Sample};
use crate::error::{Error, Result};
use crate::params::named_rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Disk,
    Ellipse,
    Rectangle,
    Blob,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [Self::Disk, Self::Ellipse, Self::Rectangle, Self::Blob];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub count: usize,
    pub size: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub kinds: Vec<ShapeKind>,
    /// Object radius as a fraction of the canvas side, `[min, max]`.
    pub scale: [f64; 2],
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    pub num_classes: usize,
    pub channels: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            count: 16,
            size: 64,
            min_objects: 1,
            max_objects: 3,
            kinds: ShapeKind::ALL.to_vec(),
            scale: [0.1, 0.25],
            noise: 0.05,
            num_classes: 2,
            channels: 3,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::validation(m));
        if self.size < 8 {
            return fail(format!("synthetic canvas {} is too small", self.size));
        }
        if self.min_objects > self.max_objects {
            return fail(format!(
                "object range {}..={} is empty",
                self.min_objects, self.max_objects
            ));
        }
        if self.kinds.is_empty() {
            return fail("no shape kinds enabled".into());
        }
        let [lo, hi] = self.scale;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return fail(format!("scale range [{lo}, {hi}] must satisfy 0 < min <= max <= 0.5"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return fail(format!("noise amplitude {} must be non-negative", self.noise));
        }
        if !(2..=256).contains(&self.num_classes) {
            return fail(format!("num_classes {} outside 2..=256", self.num_classes));
        }
        if self.channels != 1 && self.channels != 3 {
            return fail(format!("channels must be 1 or 3, got {}", self.channels));
        }
        Ok(())
    }

    /// Noise-free intensity of a class; background is darkest.
    pub fn base_intensity(&self, class: usize) -> f64 {
        0.2 + 0.6 * class as f64 / (self.num_classes - 1) as f64
    }
}

struct Shape {
    kind: ShapeKind,
    cx: f64,
    cy: f64,
    radius: f64,
    aspect: f64,
    angle: f64,
    harmonics: [(f64, f64); 2],
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
        let r = self.radius;
        match self.kind {
            ShapeKind::Disk => dx * dx + dy * dy <= r * r,
            ShapeKind::Ellipse => {
                let b = r * self.aspect;
                (u / r).powi(2) + (v / b).powi(2) <= 1.0
            }
            ShapeKind::Rectangle => {
                // half-diagonal stays within the radius
                let hx = r * std::f64::consts::FRAC_1_SQRT_2;
                let hy = hx * self.aspect;
                u.abs() <= hx && v.abs() <= hy
            }
            ShapeKind::Blob => {
                let phi = dy.atan2(dx);
                let [(a1, p1), (a2, p2)] = self.harmonics;
                let wobble = (a1 * (2.0 * phi + p1).sin() + a2 * (3.0 * phi + p2).sin()) / (a1 + a2);
                let boundary = r * (0.75 + 0.25 * wobble);
                dx * dx + dy * dy <= boundary * boundary
            }
        }
    }
}

/// Generates `spec.count` samples; sample `i` depends only on `(spec, seed, i)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Vec<Sample>> {
    spec.validate()?;
    (0..spec.count).map(|i| synthetic_sample(spec, seed, i)).collect()
}

fn synthetic_sample(spec: &SyntheticSpec, seed: u64, index: usize) -> Result<Sample> {
    let mut rng = named_rng(seed, &format!("synthetic/{index}"));
    let size = spec.size;
    let sizef = size as f64;
    let mut labels = vec![0u8; size * size];

    let objects = rng.gen_range(spec.min_objects..=spec.max_objects);
    for _ in 0..objects {
        let kind = spec.kinds[rng.gen_range(0..spec.kinds.len())];
        let radius = sizef * rng.gen_range(spec.scale[0]..=spec.scale[1]);
        let shape = Shape {
            kind,
            cx: rng.gen_range(radius..=sizef - radius),
            cy: rng.gen_range(radius..=sizef - radius),
            radius,
            aspect: rng.gen_range(0.5..=1.0),
            angle: rng.gen_range(0.0..PI),
            harmonics: [
                (rng.gen_range(0.2..1.0), rng.gen_range(0.0..2.0 * PI)),
                (rng.gen_range(0.2..1.0), rng.gen_range(0.0..2.0 * PI)),
            ],
        };
        let class = rng.gen_range(1..spec.num_classes) as u8;
        for y in 0..size {
            for x in 0..size {
                if shape.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    labels[y * size + x] = class;
                }
            }
        }
    }

    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("finite noise");
    let plane = size * size;
    let mut image = vec![0f32; spec.channels * plane];
    for c in 0..spec.channels {
        for (p, &label) in labels.iter().enumerate() {
            let mut v = spec.base_intensity(usize::from(label));
            if spec.noise > 0.0 {
                v += noise.sample(&mut rng);
            }
            // quantised to 8 bits so that PNM export is lossless
            image[c * plane + p] = ((v.clamp(0.0, 1.0) * 255.0).round() / 255.0) as f32;
        }
    }
    let image = Tensor::from_vec(&[1, spec.channels, size, size], image)?;
    Sample::new(format!("synth_{index:04}"), image, Mask::new(size, size, labels)?)
}
