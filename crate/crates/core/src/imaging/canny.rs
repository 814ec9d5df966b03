use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::ImageRgb;
use crate::{Error, Result};

/// Canny thresholds are on the raw 3x3 Sobel magnitude of a 0-255 luma image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub low: f64,
    pub high: f64,
    pub sigma: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            low: 50.0,
            high: 150.0,
            sigma: 1.4,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.low > 0.0 && self.low <= self.high) {
            return Err(Error::param(
                "canny thresholds",
                format!(
                    "need 0 < low <= high, got low={} high={}",
                    self.low, self.high
                ),
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(
                "sigma",
                format!("must be > 0, got {}", self.sigma),
            ));
        }
        Ok(())
    }
}

/// Binary edge map with the dimensions of its source image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMap {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl EdgeMap {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width || bits.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} edge bits for {height}x{width}",
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

pub(crate) fn luma(image: &ImageRgb) -> Vec<f64> {
    image
        .pixels()
        .iter()
        .map(|&[r, g, b]| 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .collect()
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable Gaussian blur, horizontal pass first, replicated borders.
fn blur(src: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let sx = clamp_index(x as isize + j as isize - r, w);
                acc += kv * src[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let sy = clamp_index(y as isize + j as isize - r, h);
                acc += kv * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

#[derive(Clone, Copy)]
enum Sector {
    Horizontal,
    Diagonal,
    Vertical,
    AntiDiagonal,
}

fn sector(gx: f64, gy: f64) -> Sector {
    // angle of the gradient folded into [0, 180), image rows grow downward
    let mut deg = gy.atan2(gx).to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if !(22.5..157.5).contains(&deg) {
        Sector::Horizontal
    } else if deg < 67.5 {
        Sector::Diagonal
    } else if deg < 112.5 {
        Sector::Vertical
    } else {
        Sector::AntiDiagonal
    }
}

/// Classic Canny: luma, Gaussian blur, Sobel, non-maximum suppression and
/// double-threshold hysteresis with 8-connected weak-edge growth.
pub fn canny_edges(image: &ImageRgb, params: &CannyParams) -> Result<EdgeMap> {
    params.validate()?;
    let (h, w) = (image.height(), image.width());
    if h < 3 || w < 3 {
        return Err(Error::param(
            "image size",
            format!("canny needs at least 3x3, got {h}x{w}"),
        ));
    }
    let smooth = blur(&luma(image), h, w, params.sigma);
    let at = |y: isize, x: isize| smooth[clamp_index(y, h) * w + clamp_index(x, w)];

    let mut mag = vec![0.0; h * w];
    let mut dir = vec![Sector::Horizontal; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            let gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
            let i = y as usize * w + x as usize;
            mag[i] = gx.hypot(gy);
            dir[i] = sector(gx, gy);
        }
    }

    let m = |y: isize, x: isize| {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    // Ties on horizontal/vertical ridges resolve toward the lower-index pixel.
    let mut thin = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let v = mag[i];
            if v < params.low {
                continue;
            }
            let keep = match dir[i] {
                Sector::Horizontal => v > m(y, x - 1) && v >= m(y, x + 1),
                Sector::Vertical => v > m(y - 1, x) && v >= m(y + 1, x),
                Sector::Diagonal => v > m(y - 1, x - 1) && v > m(y + 1, x + 1),
                Sector::AntiDiagonal => v > m(y - 1, x + 1) && v > m(y + 1, x - 1),
            };
            if keep {
                thin[i] = v;
            }
        }
    }

    let mut bits = vec![false; h * w];
    let mut queue = VecDeque::new();
    for (i, &v) in thin.iter().enumerate() {
        if v >= params.high {
            bits[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (y, x) = ((i / w) as isize, (i % w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !bits[j] && thin[j] >= params.low {
                    bits[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    EdgeMap::new(h, w, bits)
}
