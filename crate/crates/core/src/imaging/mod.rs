//! Image representation and the two visual-complexity metrics.

mod canny;
mod complexity;

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, RgbImage};

use crate::{Error, Result};

pub use canny::{canny_edges, CannyParams, EdgeMap};
pub use complexity::{
    color_complexity, color_complexity_with, measure, rgb_to_hue_bin, texture_complexity,
    Complexity, HueHistogram, HUE_BINS,
};

pub type Rgb = [u8; 3];

/// An 8-bit RGB image stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRgb {
    height: usize,
    width: usize,
    data: Vec<Rgb>,
}

impl ImageRgb {
    pub fn new(height: usize, width: usize, data: Vec<Rgb>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::param(
                "image size",
                format!("{height}x{width} is empty"),
            ));
        }
        if data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {height}x{width} image",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, color: Rgb) -> Result<Self> {
        Self::new(height, width, vec![color; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> Rgb,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> Rgb {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, color: Rgb) {
        self.data[y * self.width + x] = color;
    }

    /// Copies the rectangle `[top, top+height) x [left, left+width)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::param(
                "crop",
                format!(
                    "{height}x{width} at ({top},{left}) exceeds {}x{}",
                    self.height, self.width
                ),
            ));
        }
        Self::from_fn(height, width, |y, x| self.get(top + y, left + x))
    }

    /// Converts a decoded image, compositing any alpha channel over black.
    pub fn from_dynamic(img: &DynamicImage) -> Result<Self> {
        let rgba = img.to_rgba8();
        let (w, h) = rgba.dimensions();
        let data = rgba
            .pixels()
            .map(|p| {
                let [r, g, b, a] = p.0;
                let over_black = |c: u8| ((c as u32 * a as u32 + 127) / 255) as u8;
                [over_black(r), over_black(g), over_black(b)]
            })
            .collect();
        Self::new(h as usize, w as usize, data)
    }

    pub fn from_rgb_image(img: &RgbImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        Self::new(h as usize, w as usize, img.pixels().map(|p| p.0).collect())
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        let mut out = RgbImage::new(self.width as u32, self.height as u32);
        for (dst, src) in out.pixels_mut().zip(&self.data) {
            dst.0 = *src;
        }
        out
    }

    /// Reads a PNG or JPEG file.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::ImageReader::open(path)?
            .with_guessed_format()?
            .decode()?;
        Self::from_dynamic(&img)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?;
        Self::from_dynamic(&img)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        self.to_rgb_image().write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }
}
