use std::str::FromStr;

use image::imageops::{self, FilterType};
use serde::{Deserialize, Serialize};

use super::regions::{BBox, CarveMask};
use crate::contrast::FusedSaliency;
use crate::imaging::{ImageRgb, Rgb};
use crate::{Error, Result};

/// How a crop is brought back to the original image size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizePolicy {
    /// Scale each axis independently to the original dimensions.
    Stretch,
    /// Keep the aspect ratio, fit inside the original frame, pad with fill.
    #[default]
    FitPad,
}

impl FromStr for ResizePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stretch" => Ok(Self::Stretch),
            "fit_pad" | "fit-pad" => Ok(Self::FitPad),
            _ => Err(Error::param("resize policy", format!("unknown {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    Nearest,
    #[default]
    Bilinear,
}

impl FromStr for Resample {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "bilinear" => Ok(Self::Bilinear),
            _ => Err(Error::param("resample filter", format!("unknown {s:?}"))),
        }
    }
}

impl From<Resample> for FilterType {
    fn from(r: Resample) -> Self {
        match r {
            Resample::Nearest => FilterType::Nearest,
            Resample::Bilinear => FilterType::Triangle,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExtractOptions {
    pub fill: Rgb,
    pub resize_policy: ResizePolicy,
    pub resample: Resample,
}

/// Result of visual extraction. `fallback` is set when the mask was empty
/// and the original image was passed through.
#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    pub image: ImageRgb,
    pub crop: Option<BBox>,
    pub fallback: bool,
}

fn resize(img: &ImageRgb, height: usize, width: usize, filter: Resample) -> Result<ImageRgb> {
    if (img.height(), img.width()) == (height, width) {
        return Ok(img.clone());
    }
    let out = imageops::resize(
        &img.to_rgb_image(),
        width as u32,
        height as u32,
        filter.into(),
    );
    ImageRgb::from_rgb_image(&out)
}

/// Masks pixels outside `mask`, crops to the mask's bounding box, and
/// resizes back to the input dimensions.
pub fn extract(image: &ImageRgb, mask: &CarveMask, opts: &ExtractOptions) -> Result<Extraction> {
    let (h, w) = (image.height(), image.width());
    if (mask.height(), mask.width()) != (h, w) {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} vs image {h}x{w}",
            mask.height(),
            mask.width()
        )));
    }
    let Some(bbox) = mask.bbox() else {
        log::warn!("empty mask; returning the original image");
        return Ok(Extraction {
            image: image.clone(),
            crop: None,
            fallback: true,
        });
    };

    let mut masked = image.clone();
    for (px, &keep) in masked.pixels_mut().iter_mut().zip(mask.mask.bits()) {
        if !keep {
            *px = opts.fill;
        }
    }
    let crop = masked.crop(bbox.top, bbox.left, bbox.height(), bbox.width())?;
    let out = match opts.resize_policy {
        ResizePolicy::Stretch => resize(&crop, h, w, opts.resample)?,
        ResizePolicy::FitPad => {
            let scale = (h as f64 / crop.height() as f64).min(w as f64 / crop.width() as f64);
            let nh = ((crop.height() as f64 * scale).round() as usize).clamp(1, h);
            let nw = ((crop.width() as f64 * scale).round() as usize).clamp(1, w);
            let scaled = resize(&crop, nh, nw, opts.resample)?;
            let (top, left) = ((h - nh) / 2, (w - nw) / 2);
            let mut canvas = ImageRgb::filled(h, w, opts.fill)?;
            for y in 0..nh {
                for x in 0..nw {
                    canvas.set(top + y, left + x, scaled.get(y, x));
                }
            }
            canvas
        }
    };
    Ok(Extraction {
        image: out,
        crop: Some(bbox),
        fallback: false,
    })
}

/// Fills the `floor(ratio * HW)` lowest-saliency pixels. Equal saliency
/// values are taken in raster order.
pub fn progressive_mask(
    image: &ImageRgb,
    s: &FusedSaliency,
    ratio: f64,
    fill: Rgb,
) -> Result<ImageRgb> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::param(
            "ratio",
            format!("must be in [0, 1], got {ratio}"),
        ));
    }
    if (s.height(), s.width()) != (image.height(), image.width()) {
        return Err(Error::DimensionMismatch(format!(
            "saliency {}x{} vs image {}x{}",
            s.height(),
            s.width(),
            image.height(),
            image.width()
        )));
    }
    let n = image.len();
    let count = ((ratio * n as f64 + 1e-9).floor() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.values()[a].total_cmp(&s.values()[b]));
    let mut out = image.clone();
    for &i in &order[..count] {
        out.pixels_mut()[i] = fill;
    }
    Ok(out)
}
