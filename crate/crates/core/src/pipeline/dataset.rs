//! Turns manifest entries into fixed-size network inputs.

use deco_tensor::ops::Mode;
use deco_tensor::Tensor;

use super::config::DataConfig;
use crate::data::{
    crop_with_mask, normalize_depth, pad_to_square_color, pad_to_square_gray, resize_color,
    resize_gray, DatasetManifest, ManifestEntry, Split,
};
use crate::deco::DecoModel;
use crate::error::{Error, Result};
use crate::maps::{MapParams, Mapping};
use crate::raster::{load_depth, ColorImage, DepthMap, Mask};

/// Dense stack of same-shape samples, `[n, channels, size, size]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub size: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub labels: Vec<usize>,
}

impl SampleSet {
    pub fn new(size: usize, channels: usize) -> Self {
        SampleSet {
            size,
            channels,
            data: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn stride(&self) -> usize {
        self.channels * self.size * self.size
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let s = self.stride();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn push(&mut self, x: &[f64], label: usize) {
        assert_eq!(x.len(), self.stride(), "sample shape mismatch");
        self.data.extend_from_slice(x);
        self.labels.push(label);
    }

    pub fn batch(&self, idx: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(idx.len() * self.stride());
        for &i in idx {
            data.extend_from_slice(self.sample(i));
        }
        Ok(Tensor::from_vec(data, &[idx.len(), self.channels, self.size, self.size])?)
    }

    pub fn labels_of(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }

    /// Per-channel mean over all pixels, after scaling by `scale`.
    pub fn channel_mean(&self, scale: f64) -> Vec<f64> {
        let plane = self.size * self.size;
        let mut sums = vec![0.0; self.channels];
        for i in 0..self.len() {
            for (c, s) in sums.iter_mut().enumerate() {
                *s += self.sample(i)[c * plane..(c + 1) * plane].iter().sum::<f64>();
            }
        }
        let n = (self.len() * plane).max(1) as f64;
        sums.into_iter().map(|s| s * scale / n).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSplits {
    pub classes: Vec<String>,
    pub train: SampleSet,
    pub val: SampleSet,
    pub test: SampleSet,
}

impl PreparedSplits {
    pub fn get(&self, split: Split) -> &SampleSet {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn map_sets(&self, mut f: impl FnMut(&SampleSet) -> Result<SampleSet>) -> Result<Self> {
        Ok(PreparedSplits {
            classes: self.classes.clone(),
            train: f(&self.train)?,
            val: f(&self.val)?,
            test: f(&self.test)?,
        })
    }
}

/// What a manifest entry is turned into.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    /// Normalized grayscale depth in [0, 1], one channel.
    DepthGray,
    /// A hand-crafted colorization in [0, 255], three channels.
    Mapped(Mapping),
    /// The paired RGB image in [0, 255], three channels.
    Rgb,
}

fn load_cropped_depth(m: &DatasetManifest, e: &ManifestEntry, cfg: &DataConfig) -> Result<DepthMap> {
    let d = load_depth(&m.resolve(&e.depth_path))?;
    match (&e.mask_path, cfg.mask_crop) {
        (Some(p), true) => crop_with_mask(&d, &Mask::load_png(&m.resolve(p))?, cfg.crop_margin),
        _ => Ok(d),
    }
}

fn fit_color(img: &ColorImage, cfg: &DataConfig) -> Vec<f64> {
    let img = if cfg.pad_to_square {
        pad_to_square_color(img, [0, 0, 0])
    } else {
        img.clone()
    };
    resize_color(&img, cfg.image_size, cfg.image_size).to_planes().concat()
}

/// Loads one entry as a flat `channels × S × S` vector.
pub fn load_input(
    m: &DatasetManifest,
    e: &ManifestEntry,
    kind: InputKind,
    cfg: &DataConfig,
    maps: &MapParams,
) -> Result<Vec<f64>> {
    let s = cfg.image_size;
    match kind {
        InputKind::DepthGray => {
            let g = normalize_depth(&load_cropped_depth(m, e, cfg)?)?;
            let g = if cfg.pad_to_square { pad_to_square_gray(&g, 0) } else { g };
            Ok(resize_gray(&g, s, s).values.iter().map(|&v| v as f64 / 255.0).collect())
        }
        InputKind::Mapped(map) => Ok(fit_color(&map.apply(&load_cropped_depth(m, e, cfg)?, maps)?, cfg)),
        InputKind::Rgb => {
            let rel = e.rgb_path.as_ref().ok_or_else(|| {
                Error::Data(format!("entry `{}` has no RGB image", e.depth_path))
            })?;
            let img = ColorImage::load_png(&m.resolve(rel))?;
            let img = match (&e.mask_path, cfg.mask_crop) {
                (Some(p), true) => crop_with_mask(&img, &Mask::load_png(&m.resolve(p))?, cfg.crop_margin)?,
                _ => img,
            };
            Ok(fit_color(&img, cfg))
        }
    }
}

/// Loads every entry of a split manifest. Class indices follow the sorted
/// class list of the whole manifest.
pub fn prepare(
    m: &DatasetManifest,
    kind: InputKind,
    cfg: &DataConfig,
    maps: &MapParams,
) -> Result<PreparedSplits> {
    if m.is_empty() {
        return Err(Error::Data("manifest has no entries".into()));
    }
    let classes = m.classes();
    let channels = if kind == InputKind::DepthGray { 1 } else { 3 };
    let mut out = PreparedSplits {
        classes: classes.clone(),
        train: SampleSet::new(cfg.image_size, channels),
        val: SampleSet::new(cfg.image_size, channels),
        test: SampleSet::new(cfg.image_size, channels),
    };
    for e in &m.entries {
        let split = e.split.ok_or_else(|| {
            Error::Data(format!("entry `{}` has no split assignment", e.depth_path))
        })?;
        let label = classes.binary_search(&e.class_label).expect("class list built from entries");
        let x = load_input(m, e, kind, cfg, maps)?;
        match split {
            Split::Train => out.train.push(&x, label),
            Split::Val => out.val.push(&x, label),
            Split::Test => out.test.push(&x, label),
        }
    }
    Ok(out)
}

pub const INFERENCE_BATCH: usize = 32;

/// Eval-mode colorization of a grayscale set.
pub fn colorize_set(deco: &DecoModel, gray: &SampleSet) -> Result<SampleSet> {
    let mut out = SampleSet::new(gray.size, 3);
    let idx: Vec<usize> = (0..gray.len()).collect();
    for chunk in idx.chunks(INFERENCE_BATCH) {
        let y = deco.forward(&gray.batch(chunk)?, Mode::Eval)?;
        out.data.extend_from_slice(&y.data());
        out.labels.extend(gray.labels_of(chunk));
    }
    Ok(out)
}

/// A depth-to-image mapping under comparison.
#[derive(Clone, Copy)]
pub enum DepthMapping<'a> {
    Hand(Mapping),
    Deco(&'a DecoModel),
}

impl DepthMapping<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            DepthMapping::Hand(m) => m.name(),
            DepthMapping::Deco(_) => "deco",
        }
    }

    /// Three-channel [0, 255] images for every split.
    pub fn prepare(&self, m: &DatasetManifest, cfg: &DataConfig, maps: &MapParams) -> Result<PreparedSplits> {
        match self {
            DepthMapping::Hand(map) => prepare(m, InputKind::Mapped(*map), cfg, maps),
            DepthMapping::Deco(deco) => {
                prepare(m, InputKind::DepthGray, cfg, maps)?.map_sets(|s| colorize_set(deco, s))
            }
        }
    }
}
