//! Depth ingestion, normalization, cropping and resizing, plus dataset
//! manifests and the synthetic stand-in datasets.

mod manifest;
pub mod synth;

pub use manifest::{
    build_washington_manifest, ClassMerge, DatasetManifest, ManifestEntry, Split, SplitMode,
};

use crate::error::{Error, Result};
use crate::raster::{quantize_u8, ColorImage, DepthMap, GrayImage, Mask, Raster, Rect};

pub use crate::raster::load_depth;

/// Stretches valid depths to 0..=255; missing pixels become 0 and a
/// constant-depth map becomes uniformly 128.
pub fn normalize_depth(d: &DepthMap) -> Result<GrayImage> {
    let (lo, hi) = d
        .values
        .iter()
        .filter(|&&v| v != 0)
        .fold((u16::MAX, 0u16), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi == 0 {
        return Err(Error::Data("depth map has no valid pixels".into()));
    }
    let span = (hi - lo) as f64;
    let values = d
        .values
        .iter()
        .map(|&v| match v {
            0 => 0,
            _ if hi == lo => 128,
            _ => quantize_u8(255.0 * (v - lo) as f64 / span),
        })
        .collect();
    GrayImage::new(d.width, d.height, values)
}

/// Tight bounding box of the mask grown by `margin` (a fraction of the box
/// extent, per side, rounded half up) and clipped to the image.
pub fn mask_crop_rect(mask: &Mask, margin: f64) -> Result<Rect> {
    let mut x0 = usize::MAX;
    let mut y0 = usize::MAX;
    let (mut x1, mut y1) = (0, 0);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.bits[y * mask.width + x] {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if x0 == usize::MAX {
        return Err(Error::Data("mask has no object pixels".into()));
    }
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    let mx = (margin * bw as f64 + 0.5).floor() as usize;
    let my = (margin * bh as f64 + 0.5).floor() as usize;
    let left = x0.saturating_sub(mx);
    let top = y0.saturating_sub(my);
    let right = (x1 + mx).min(mask.width - 1);
    let bottom = (y1 + my).min(mask.height - 1);
    Ok(Rect {
        x: left,
        y: top,
        width: right - left + 1,
        height: bottom - top + 1,
    })
}

pub const DEFAULT_CROP_MARGIN: f64 = 0.05;

pub fn crop_with_mask<I: Raster>(img: &I, mask: &Mask, margin: f64) -> Result<I> {
    if img.dims() != (mask.width, mask.height) {
        return Err(Error::Data(format!(
            "mask {}x{} does not match image {:?}",
            mask.width,
            mask.height,
            img.dims()
        )));
    }
    Ok(img.crop(mask_crop_rect(mask, margin)?))
}

/// Bilinear resampling of one plane with half-pixel-centred sampling and
/// edge clamping.
pub fn resize_plane(src: &[f64], w: usize, h: usize, tw: usize, th: usize) -> Vec<f64> {
    let coord = |dst: usize, from: usize, to: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * from as f64 / to as f64 - 0.5).clamp(0.0, (from - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(from - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(tw * th);
    for y in 0..th {
        let (y0, y1, fy) = coord(y, h, th);
        for x in 0..tw {
            let (x0, x1, fx) = coord(x, w, tw);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

pub fn resize_gray(img: &GrayImage, tw: usize, th: usize) -> GrayImage {
    assert!(tw > 0 && th > 0, "resize target must be positive");
    if (tw, th) == (img.width, img.height) {
        return img.clone();
    }
    let src: Vec<f64> = img.values.iter().map(|&v| v as f64).collect();
    let values = resize_plane(&src, img.width, img.height, tw, th)
        .into_iter()
        .map(quantize_u8)
        .collect();
    GrayImage {
        width: tw,
        height: th,
        values,
    }
}

pub fn resize_color(img: &ColorImage, tw: usize, th: usize) -> ColorImage {
    assert!(tw > 0 && th > 0, "resize target must be positive");
    if (tw, th) == (img.width, img.height) {
        return img.clone();
    }
    let planes = img.to_planes();
    let resized = planes.map(|p| resize_plane(&p, img.width, img.height, tw, th));
    ColorImage::from_planes(tw, th, &resized)
}

/// Pads to a square canvas (centred, filled with `fill`) before any resize,
/// preserving aspect ratio.
pub fn pad_to_square_color(img: &ColorImage, fill: [u8; 3]) -> ColorImage {
    let side = img.width.max(img.height);
    let mut out = ColorImage::filled(side, side, fill);
    let (ox, oy) = ((side - img.width) / 2, (side - img.height) / 2);
    for y in 0..img.height {
        for x in 0..img.width {
            out.set_pixel(x + ox, y + oy, img.pixel(x, y));
        }
    }
    out
}

pub fn pad_to_square_gray(img: &GrayImage, fill: u8) -> GrayImage {
    let side = img.width.max(img.height);
    let mut values = vec![fill; side * side];
    let (ox, oy) = ((side - img.width) / 2, (side - img.height) / 2);
    for y in 0..img.height {
        for x in 0..img.width {
            values[(y + oy) * side + x + ox] = img.get(x, y);
        }
    }
    GrayImage {
        width: side,
        height: side,
        values,
    }
}
