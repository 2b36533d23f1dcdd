//! Hand-crafted depth-to-color mappings: grayscale replication, ColorJet,
//! raw surface normals and the filtered SurfaceNormals++ pipeline.
//!
//! Axis convention for normals: x grows to the right, y grows downward, and
//! the z component points toward the sensor, so visible surfaces have
//! `nz > 0`.

use serde::{Deserialize, Serialize};

use crate::data::normalize_depth;
use crate::error::{Error, Result};
use crate::raster::{quantize_u8, ColorImage, DepthMap, GrayImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mapping {
    Grayscale,
    ColorJet,
    SurfaceNormals,
    SurfaceNormalsPp,
}

impl Mapping {
    pub const ALL: [Mapping; 4] = [
        Mapping::Grayscale,
        Mapping::ColorJet,
        Mapping::SurfaceNormals,
        Mapping::SurfaceNormalsPp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mapping::Grayscale => "grayscale",
            Mapping::ColorJet => "colorjet",
            Mapping::SurfaceNormals => "surface_normals",
            Mapping::SurfaceNormalsPp => "surface_normals_pp",
        }
    }

    pub fn parse(name: &str) -> Option<Mapping> {
        Mapping::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn apply(self, depth: &DepthMap, params: &MapParams) -> Result<ColorImage> {
        match self {
            Mapping::Grayscale => Ok(grayscale_map(&normalize_depth(depth)?)),
            Mapping::ColorJet => Ok(colorjet_map(&normalize_depth(depth)?)),
            Mapping::SurfaceNormals => Ok(surface_normals(depth, params.unit_scale)),
            Mapping::SurfaceNormalsPp => surface_normals_pp(depth, params),
        }
    }
}

/// Tunables for the normal-based mappings. Names are the keys accepted in
/// the `[maps]` table of an experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapParams {
    /// Depth units (mm) spanned by one pixel at the object.
    pub unit_scale: f64,
    pub fill_window: usize,
    pub bilateral_window: usize,
    pub sigma_space: f64,
    /// In depth units (mm).
    pub sigma_range: f64,
    pub unsharp_sigma: f64,
    pub unsharp_amount: f64,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams {
            unit_scale: 2.0,
            fill_window: 5,
            bilateral_window: 7,
            sigma_space: 3.0,
            sigma_range: 25.0,
            unsharp_sigma: 1.5,
            unsharp_amount: 0.5,
        }
    }
}

impl MapParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.unit_scale > 0.0
            && self.fill_window >= 3
            && self.fill_window % 2 == 1
            && self.bilateral_window % 2 == 1
            && self.sigma_space > 0.0
            && self.sigma_range > 0.0
            && self.unsharp_sigma > 0.0
            && self.unsharp_amount >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid mapping parameters {self:?}")))
        }
    }
}

pub fn grayscale_map(g: &GrayImage) -> ColorImage {
    ColorImage {
        width: g.width,
        height: g.height,
        data: g.values.iter().flat_map(|&v| [v, v, v]).collect(),
    }
}

/// Piecewise-linear jet: blue at 0, green at mid-range, red at 255.
pub fn colorjet_pixel(v: u8) -> [u8; 3] {
    let t = v as f64 / 255.0;
    let ramp = |center: f64| quantize_u8(255.0 * (1.5 - 4.0 * (t - center).abs()).clamp(0.0, 1.0));
    [ramp(0.75), ramp(0.5), ramp(0.25)]
}

pub fn colorjet_map(g: &GrayImage) -> ColorImage {
    let lut: Vec<[u8; 3]> = (0..=255u8).map(colorjet_pixel).collect();
    ColorImage {
        width: g.width,
        height: g.height,
        data: g.values.iter().flat_map(|&v| lut[v as usize]).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalField {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<[f64; 3]>,
}

/// Unit normals of a depth field given as reals, `n ∝ (−∂d/∂x, −∂d/∂y,
/// unit_scale)`, with central differences inside and one-sided differences
/// on the border.
pub fn normals_from_field(depth: &[f64], width: usize, height: usize, unit_scale: f64) -> NormalField {
    assert_eq!(depth.len(), width * height);
    let at = |x: usize, y: usize| depth[y * width + x];
    let diff = |lo: f64, hi: f64, span: usize| if span == 0 { 0.0 } else { (hi - lo) / span as f64 };
    let mut normals = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(width - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(height - 1));
            let dx = diff(at(xl, y), at(xr, y), xr - xl);
            let dy = diff(at(x, yu), at(x, yd), yd - yu);
            let n = [-dx, -dy, unit_scale];
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            normals.push([n[0] / len, n[1] / len, n[2] / len]);
        }
    }
    NormalField {
        width,
        height,
        normals,
    }
}

/// Normals of a raw depth map; missing pixels are used as depth 0.
pub fn compute_normals(d: &DepthMap, unit_scale: f64) -> NormalField {
    let field: Vec<f64> = d.values.iter().map(|&v| v as f64).collect();
    normals_from_field(&field, d.width, d.height, unit_scale)
}

pub fn normals_to_color(n: &NormalField) -> ColorImage {
    let data = n
        .normals
        .iter()
        .flat_map(|c| c.map(|v| quantize_u8(255.0 * (v + 1.0) / 2.0)))
        .collect();
    ColorImage {
        width: n.width,
        height: n.height,
        data,
    }
}

/// Repeatedly replaces each missing pixel that has valid pixels in its
/// `k×k` window with their lower median, until no pixel is missing. Each
/// pass reads only the previous pass's values. Valid pixels never change.
pub fn recursive_median_fill(d: &DepthMap, k: usize) -> Result<DepthMap> {
    if k < 3 || k.is_multiple_of(2) {
        return Err(Error::Config(format!("fill window must be odd and >= 3, got {k}")));
    }
    if d.values.iter().all(|&v| v == 0) {
        return Err(Error::Data("cannot fill a depth map with no valid pixels".into()));
    }
    let r = (k / 2) as isize;
    let (w, h) = (d.width as isize, d.height as isize);
    let mut cur = d.values.clone();
    let mut neighbours = Vec::with_capacity(k * k);
    loop {
        let mut next = cur.clone();
        let mut remaining = 0;
        for y in 0..h {
            for x in 0..w {
                let idx = (y * w + x) as usize;
                if cur[idx] != 0 {
                    continue;
                }
                neighbours.clear();
                for yy in (y - r).max(0)..=(y + r).min(h - 1) {
                    for xx in (x - r).max(0)..=(x + r).min(w - 1) {
                        let v = cur[(yy * w + xx) as usize];
                        if v != 0 {
                            neighbours.push(v);
                        }
                    }
                }
                if neighbours.is_empty() {
                    remaining += 1;
                } else {
                    neighbours.sort_unstable();
                    next[idx] = neighbours[(neighbours.len() - 1) / 2];
                }
            }
        }
        cur = next;
        if remaining == 0 {
            break;
        }
    }
    DepthMap::new(d.width, d.height, cur)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with edge replication; kernel radius `ceil(3σ)`.
pub fn gaussian_blur_plane(src: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] = k
                .iter()
                .enumerate()
                .map(|(i, w)| w * src[y * width + clamp(x as isize + i as isize - r, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = k
                .iter()
                .enumerate()
                .map(|(i, w)| w * tmp[clamp(y as isize + i as isize - r, height) * width + x])
                .sum();
        }
    }
    out
}

/// Bilateral filter over a `k×k` window: weights are the product of a
/// spatial Gaussian (`sigma_space`, pixels) and a range Gaussian
/// (`sigma_range`, value units), normalized over the in-bounds neighbours.
pub fn bilateral_plane(
    src: &[f64],
    width: usize,
    height: usize,
    sigma_space: f64,
    sigma_range: f64,
    k: usize,
) -> Vec<f64> {
    let r = (k / 2) as isize;
    let spatial: Vec<f64> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .map(|(dx, dy)| (-((dx * dx + dy * dy) as f64) / (2.0 * sigma_space * sigma_space)).exp())
        .collect();
    let inv_range = 1.0 / (2.0 * sigma_range * sigma_range);
    let (w, h) = (width as isize, height as isize);
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let centre = src[(y * w + x) as usize];
            let (mut acc, mut norm) = (0.0, 0.0);
            for dy in -r..=r {
                let yy = y + dy;
                if yy < 0 || yy >= h {
                    continue;
                }
                for dx in -r..=r {
                    let xx = x + dx;
                    if xx < 0 || xx >= w {
                        continue;
                    }
                    let v = src[(yy * w + xx) as usize];
                    let ws = spatial[((dy + r) * (2 * r + 1) + dx + r) as usize];
                    let wgt = ws * (-(v - centre) * (v - centre) * inv_range).exp();
                    acc += wgt * (v - centre);
                    norm += wgt;
                }
            }
            // Averaging offsets from the centre keeps flat regions exact.
            out[(y * w + x) as usize] = centre + acc / norm;
        }
    }
    out
}

pub fn bilateral_filter(g: &GrayImage, sigma_space: f64, sigma_range: f64, k: usize) -> GrayImage {
    let src: Vec<f64> = g.values.iter().map(|&v| v as f64).collect();
    let out = bilateral_plane(&src, g.width, g.height, sigma_space, sigma_range, k);
    GrayImage {
        width: g.width,
        height: g.height,
        values: out.into_iter().map(quantize_u8).collect(),
    }
}

/// `clamp(img + amount·(img − blur(img)))` per channel, unrounded.
pub fn unsharp_planes(img: &ColorImage, sigma: f64, amount: f64) -> [Vec<f64>; 3] {
    img.to_planes().map(|p| {
        let blurred = gaussian_blur_plane(&p, img.width, img.height, sigma);
        p.iter()
            .zip(&blurred)
            .map(|(v, b)| v + amount * (v - b))
            .collect()
    })
}

pub fn unsharp_mask(img: &ColorImage, sigma: f64, amount: f64) -> ColorImage {
    ColorImage::from_planes(img.width, img.height, &unsharp_planes(img, sigma, amount))
}

/// Normals of the raw map, holes included.
pub fn surface_normals(d: &DepthMap, unit_scale: f64) -> ColorImage {
    normals_to_color(&compute_normals(d, unit_scale))
}

/// Hole filling and edge-preserving smoothing, then normals.
pub fn surface_normals_pp_field(d: &DepthMap, p: &MapParams) -> Result<NormalField> {
    p.validate()?;
    let filled = recursive_median_fill(d, p.fill_window)?;
    let field: Vec<f64> = filled.values.iter().map(|&v| v as f64).collect();
    let smooth = bilateral_plane(
        &field,
        d.width,
        d.height,
        p.sigma_space,
        p.sigma_range,
        p.bilateral_window,
    );
    Ok(normals_from_field(&smooth, d.width, d.height, p.unit_scale))
}

/// fill → bilateral → normals → color → unsharp.
pub fn surface_normals_pp(d: &DepthMap, p: &MapParams) -> Result<ColorImage> {
    let normals = surface_normals_pp_field(d, p)?;
    Ok(unsharp_mask(
        &normals_to_color(&normals),
        p.unsharp_sigma,
        p.unsharp_amount,
    ))
}
