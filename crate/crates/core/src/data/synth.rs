//! Synthetic desk-scale RGB-D object datasets.
//!
//! Each class is an analytic surface primitive. Instances vary size, aspect,
//! relief, distance and albedo; samples add pose jitter, a tilted
//! background, Gaussian depth noise and punched-out (zero) pixels. A paired
//! RGB render shades the same geometry with a Lambertian model.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::maps::normals_from_field;
use crate::raster::{quantize_u8, ColorImage, DepthMap, Mask};

/// Millimetres covered by one pixel at the object distance.
pub const MM_PER_PX: f64 = 2.0;
const BACKGROUND_MM: f64 = 1300.0;
const OBJECT_MM: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    SphereCap,
    Box,
    Cone,
    Ramp,
    Torus,
    Cylinder,
    Pyramid,
    Saddle,
    Wave,
    Cross,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 10] = [
        ShapeKind::SphereCap,
        ShapeKind::Box,
        ShapeKind::Cone,
        ShapeKind::Ramp,
        ShapeKind::Torus,
        ShapeKind::Cylinder,
        ShapeKind::Pyramid,
        ShapeKind::Saddle,
        ShapeKind::Wave,
        ShapeKind::Cross,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::SphereCap => "sphere_cap",
            ShapeKind::Box => "box",
            ShapeKind::Cone => "cone",
            ShapeKind::Ramp => "ramp",
            ShapeKind::Torus => "torus",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Pyramid => "pyramid",
            ShapeKind::Saddle => "saddle",
            ShapeKind::Wave => "wave",
            ShapeKind::Cross => "cross",
        }
    }

    /// Relief above the silhouette plane, in units of the object radius, at
    /// object-local coordinates `(u, v)`; `None` outside the silhouette.
    fn relief(self, u: f64, v: f64, aspect: f64) -> Option<f64> {
        let rho = (u * u + v * v).sqrt();
        match self {
            ShapeKind::SphereCap => (rho < 1.0).then(|| (1.0 - rho * rho).sqrt()),
            ShapeKind::Box => (u.abs() < 0.8 && v.abs() < 0.8 * aspect).then_some(0.5),
            ShapeKind::Cone => (rho < 1.0).then_some(0.9 * (1.0 - rho)),
            ShapeKind::Ramp => {
                (u.abs() < 0.9 && v.abs() < 0.6).then(|| 0.1 + 0.7 * (u + 0.9) / 1.8)
            }
            ShapeKind::Torus => {
                let d = rho - 0.6;
                (d.abs() < 0.32).then(|| 1.5 * (0.32 * 0.32 - d * d).sqrt())
            }
            ShapeKind::Cylinder => {
                let r = 0.42 * aspect.max(0.8);
                (u.abs() < 0.95 && v.abs() < r).then(|| 1.5 * (r * r - v * v).sqrt())
            }
            ShapeKind::Pyramid => {
                let m = u.abs().max(v.abs());
                (m < 0.8).then(|| 0.9 * (0.8 - m) / 0.8)
            }
            ShapeKind::Saddle => (rho < 0.9).then_some(0.45 + 0.35 * (u * u - v * v)),
            ShapeKind::Wave => {
                (u.abs() < 0.9 && v.abs() < 0.7).then(|| 0.35 + 0.2 * (3.0 * PI * u).sin())
            }
            ShapeKind::Cross => {
                let arm = |a: f64, b: f64| a.abs() < 0.25 && b.abs() < 0.9;
                (arm(u, v) || arm(v, u)).then_some(0.45)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: Vec<ShapeKind>,
    pub instances_per_class: usize,
    pub samples_per_instance: usize,
    #[serde(default = "default_size")]
    pub size: usize,
    /// Standard deviation of additive depth noise, millimetres.
    #[serde(default)]
    pub noise: f64,
    /// Probability that a pixel is dropped to 0.
    #[serde(default)]
    pub hole_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub with_rgb: bool,
}

fn default_size() -> usize {
    64
}

fn default_true() -> bool {
    true
}

impl SynthConfig {
    pub fn new(classes: &[ShapeKind], instances: usize, samples: usize, seed: u64) -> Self {
        SynthConfig {
            classes: classes.to_vec(),
            instances_per_class: instances,
            samples_per_instance: samples,
            size: default_size(),
            noise: 2.0,
            hole_rate: 0.02,
            seed,
            with_rgb: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut sorted = self.classes.clone();
        sorted.sort();
        sorted.dedup();
        let problem = if self.classes.is_empty() {
            Some("at least one class is required".to_string())
        } else if sorted.len() != self.classes.len() {
            Some("classes must be distinct".to_string())
        } else if self.instances_per_class == 0 || self.samples_per_instance == 0 {
            Some("instances_per_class and samples_per_instance must be positive".to_string())
        } else if self.size < 16 || !self.size.is_multiple_of(4) {
            Some(format!("size must be a multiple of 4 and at least 16, got {}", self.size))
        } else if !(self.noise >= 0.0 && self.noise.is_finite()) {
            Some(format!("noise must be non-negative, got {}", self.noise))
        } else if !(0.0..1.0).contains(&self.hole_rate) {
            Some(format!("hole_rate must lie in [0, 1), got {}", self.hole_rate))
        } else {
            None
        };
        match problem {
            Some(p) => Err(Error::Config(format!("synthetic dataset: {p}"))),
            None => Ok(()),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("synthetic dataset: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub struct SynthSample {
    pub class: ShapeKind,
    pub instance: usize,
    pub index: usize,
    pub depth: DepthMap,
    pub rgb: Option<ColorImage>,
    pub mask: Mask,
}

impl SynthSample {
    pub fn instance_id(&self) -> String {
        format!("{}_{}", self.class.name(), self.instance)
    }

    pub fn stem(&self) -> String {
        format!("{}_{:02}_{:03}", self.class.name(), self.instance, self.index)
    }
}

struct InstanceParams {
    size: f64,
    aspect: f64,
    relief: f64,
    offset_mm: f64,
    albedo: [f64; 3],
}

fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    // splitmix64 over the parts gives independent, order-sensitive streams.
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h = h.wrapping_add(p.wrapping_add(0x9e37_79b9_7f4a_7c15));
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn instance_params(rng: &mut ChaCha8Rng) -> InstanceParams {
    let hue = rng.random_range(0.0..1.0);
    InstanceParams {
        size: rng.random_range(0.85..1.1),
        aspect: rng.random_range(0.6..1.0),
        relief: rng.random_range(0.8..1.2),
        offset_mm: rng.random_range(-40.0..40.0),
        albedo: hue_to_rgb(hue),
    }
}

fn hue_to_rgb(h: f64) -> [f64; 3] {
    let c = |shift: f64| {
        let x = ((h + shift) * 6.0).rem_euclid(6.0);
        (2.0 - (x - 3.0).abs()).clamp(0.0, 1.0) * 0.75 + 0.2
    };
    [c(0.0), c(2.0 / 3.0), c(1.0 / 3.0)]
}

/// Renders one sample; identical arguments give identical pixels.
pub fn render_sample(cfg: &SynthConfig, class_idx: usize, instance: usize, index: usize) -> SynthSample {
    let class = cfg.classes[class_idx];
    let kind_id = class as u64;
    let inst = instance_params(&mut stream(cfg.seed, &[kind_id, instance as u64]));
    let mut rng = stream(cfg.seed, &[kind_id, instance as u64, index as u64 + 1]);

    let s = cfg.size as f64;
    let cx = s / 2.0 + rng.random_range(-s / 12.0..s / 12.0);
    let cy = s / 2.0 + rng.random_range(-s / 12.0..s / 12.0);
    let radius = 0.32 * s * inst.size * rng.random_range(0.93..1.07);
    let theta: f64 = rng.random_range(0.0..2.0 * PI);
    let (sin, cos) = theta.sin_cos();
    let tilt = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
    let light = {
        let l: [f64; 3] = [
            -0.3 + rng.random_range(-0.1..0.1),
            -0.4 + rng.random_range(-0.1..0.1),
            0.87,
        ];
        let n = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
        [l[0] / n, l[1] / n, l[2] / n]
    };

    let n = cfg.size * cfg.size;
    let mut field = vec![0.0; n];
    let mut bits = vec![false; n];
    for y in 0..cfg.size {
        for x in 0..cfg.size {
            let (px, py) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let u = (cos * px + sin * py) / radius;
            let v = (-sin * px + cos * py) / radius;
            let i = y * cfg.size + x;
            field[i] = match class.relief(u, v, inst.aspect) {
                Some(h) => {
                    bits[i] = true;
                    OBJECT_MM + inst.offset_mm - h * radius * inst.relief * MM_PER_PX
                }
                None => {
                    BACKGROUND_MM + tilt.0 * (x as f64 - s / 2.0) + tilt.1 * (y as f64 - s / 2.0)
                }
            };
        }
    }

    let noise = Normal::new(0.0, cfg.noise.max(1e-12)).expect("finite noise");
    let values: Vec<u16> = field
        .iter()
        .map(|&d| {
            let jitter = if cfg.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let hole = cfg.hole_rate > 0.0 && rng.random_bool(cfg.hole_rate);
            if hole {
                0
            } else {
                (d + jitter).round().clamp(1.0, u16::MAX as f64) as u16
            }
        })
        .collect();

    let rgb = cfg.with_rgb.then(|| {
        let normals = normals_from_field(&field, cfg.size, cfg.size, MM_PER_PX);
        let mut data = Vec::with_capacity(n * 3);
        for (i, nv) in normals.normals.iter().enumerate() {
            let lambert = (nv[0] * light[0] + nv[1] * light[1] + nv[2] * light[2]).max(0.0);
            let shade = 0.3 + 0.7 * lambert;
            let base = if bits[i] { inst.albedo } else { [0.45, 0.45, 0.45] };
            let grain = rng.random_range(-6.0..6.0);
            data.extend(base.map(|c| quantize_u8(255.0 * c * shade + grain)));
        }
        ColorImage::new(cfg.size, cfg.size, data).expect("sized above")
    });

    SynthSample {
        class,
        instance,
        index,
        depth: DepthMap::new(cfg.size, cfg.size, values).expect("sized above"),
        rgb,
        mask: Mask::new(cfg.size, cfg.size, bits).expect("sized above"),
    }
}

/// All samples in class → instance → sample order.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SynthSample>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for c in 0..cfg.classes.len() {
        for i in 0..cfg.instances_per_class {
            for k in 0..cfg.samples_per_instance {
                out.push(render_sample(cfg, c, i, k));
            }
        }
    }
    Ok(out)
}

/// Writes `depth/`, `rgb/`, `mask/` PNGs and `manifest.csv` under `dir`.
pub fn write_dataset(cfg: &SynthConfig, dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    for sub in ["depth", "rgb", "mask"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    let mut entries = Vec::new();
    for sample in generate(cfg)? {
        let stem = sample.stem();
        let depth_rel = format!("depth/{stem}.png");
        let mask_rel = format!("mask/{stem}.png");
        sample.depth.save_png(&dir.join(&depth_rel))?;
        sample.mask.save_png(&dir.join(&mask_rel))?;
        let rgb_rel = match &sample.rgb {
            Some(rgb) => {
                let rel = format!("rgb/{stem}.png");
                rgb.save_png(&dir.join(&rel))?;
                Some(rel)
            }
            None => None,
        };
        entries.push(ManifestEntry {
            depth_path: depth_rel,
            rgb_path: rgb_rel,
            mask_path: Some(mask_rel),
            class_label: sample.class.name().to_string(),
            instance_id: sample.instance_id(),
            split: None,
        });
    }
    let manifest = DatasetManifest::new(dir, entries);
    manifest.save(&dir.join("manifest.csv"))?;
    Ok(manifest)
}
