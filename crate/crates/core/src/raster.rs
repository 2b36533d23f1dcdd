//! In-memory image types and their PNG encodings.
//!
//! Depth maps are single-channel 16-bit with 0 meaning "no measurement".
//! Color images are interleaved 8-bit R,G,B.

use std::path::Path;

use image::{ImageBuffer, Luma};

use crate::error::{Error, Result};

/// Round-half-up to 8 bits, clamping to [0, 255].
pub fn quantize_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Axis-aligned pixel rectangle, `x..x+width`, `y..y+height`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    /// Millimetres, row-major; 0 marks a missing measurement.
    pub values: Vec<u16>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved R,G,B.
    pub data: Vec<u8>,
}

/// Binary object mask; `true` marks object pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

/// Shared geometry operations for the raster types.
pub trait Raster: Sized {
    fn dims(&self) -> (usize, usize);
    fn crop(&self, r: Rect) -> Self;
}

fn crop_rows<T: Copy>(src: &[T], width: usize, channels: usize, r: Rect) -> Vec<T> {
    let mut out = Vec::with_capacity(r.width * r.height * channels);
    for y in r.y..r.y + r.height {
        let start = (y * width + r.x) * channels;
        out.extend_from_slice(&src[start..start + r.width * channels]);
    }
    out
}

macro_rules! raster_impl {
    ($ty:ty, $field:ident, $channels:expr) => {
        impl Raster for $ty {
            fn dims(&self) -> (usize, usize) {
                (self.width, self.height)
            }

            fn crop(&self, r: Rect) -> Self {
                assert!(r.x + r.width <= self.width && r.y + r.height <= self.height);
                Self {
                    width: r.width,
                    height: r.height,
                    $field: crop_rows(&self.$field, self.width, $channels, r),
                }
            }
        }
    };
}

raster_impl!(DepthMap, values, 1);
raster_impl!(GrayImage, values, 1);
raster_impl!(ColorImage, data, 3);
raster_impl!(Mask, bits, 1);

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<u16>) -> Result<Self> {
        check_len(width, height, values.len(), 1)?;
        Ok(DepthMap {
            width,
            height,
            values,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.values[y * self.width + x]
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|&&v| v == 0).count()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.values.clone())
                .expect("length checked at construction");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::file(path, e))
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        check_len(width, height, values.len(), 1)?;
        Ok(GrayImage {
            width,
            height,
            values,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::save_buffer_with_format(
            path,
            &self.values,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::file(path, e))
    }
}

impl ColorImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_len(width, height, data.len(), 3)?;
        Ok(ColorImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        ColorImage {
            width,
            height,
            data: rgb.repeat(width * height),
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Planar copy, `[R plane, G plane, B plane]`.
    pub fn to_planes(&self) -> [Vec<f64>; 3] {
        let mut planes = [Vec::new(), Vec::new(), Vec::new()];
        for px in self.data.chunks(3) {
            for c in 0..3 {
                planes[c].push(px[c] as f64);
            }
        }
        planes
    }

    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f64>; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for i in 0..width * height {
            for plane in planes {
                data.push(quantize_u8(plane[i]));
            }
        }
        ColorImage {
            width,
            height,
            data,
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::file(path, e))
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = open(path)?;
        let rgb = match img {
            image::DynamicImage::ImageRgb8(b) => b,
            other => {
                return Err(Error::file(
                    path,
                    format!("expected 8-bit RGB image, found {:?}", other.color()),
                ))
            }
        };
        Ok(ColorImage {
            width: rgb.width() as usize,
            height: rgb.height() as usize,
            data: rgb.into_raw(),
        })
    }
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_len(width, height, bits.len(), 1)?;
        Ok(Mask {
            width,
            height,
            bits,
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let values: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        GrayImage::new(self.width, self.height, values)?.save_png(path)
    }

    /// Any nonzero 8-bit value counts as object.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = open(path)?;
        let gray = match img {
            image::DynamicImage::ImageLuma8(b) => b,
            other => {
                return Err(Error::file(
                    path,
                    format!("expected 8-bit single-channel mask, found {:?}", other.color()),
                ))
            }
        };
        Ok(Mask {
            width: gray.width() as usize,
            height: gray.height() as usize,
            bits: gray.into_raw().into_iter().map(|v| v != 0).collect(),
        })
    }
}

fn check_len(width: usize, height: usize, len: usize, channels: usize) -> Result<()> {
    if width == 0 || height == 0 || len != width * height * channels {
        return Err(Error::Data(format!(
            "{len} samples do not form a {width}x{height}x{channels} image"
        )));
    }
    Ok(())
}

pub(crate) fn open(path: &Path) -> Result<image::DynamicImage> {
    if !path.exists() {
        return Err(Error::file(path, "file does not exist"));
    }
    image::ImageReader::open(path)
        .map_err(|e| Error::file(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::file(path, e))?
        .decode()
        .map_err(|e| Error::file(path, format!("cannot decode image: {e}")))
}

/// Lossless read of a single-channel 16-bit depth image.
pub fn load_depth(path: &Path) -> Result<DepthMap> {
    let img = open(path)?;
    match img {
        image::DynamicImage::ImageLuma16(b) => Ok(DepthMap {
            width: b.width() as usize,
            height: b.height() as usize,
            values: b.into_raw(),
        }),
        other => Err(Error::file(
            path,
            format!(
                "expected a single-channel 16-bit depth image, found {:?}",
                other.color()
            ),
        )),
    }
}
