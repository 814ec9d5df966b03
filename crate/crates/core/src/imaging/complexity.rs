use serde::{Deserialize, Serialize};

use super::{canny_edges, CannyParams, EdgeMap, ImageRgb, Rgb};
use crate::Result;

/// Number of hue bins: two degrees per bin over the full circle.
pub const HUE_BINS: usize = 180;

/// Hue bin of a pixel, `floor(hue_degrees / 2)`. Achromatic pixels map to 0.
///
/// Integer arithmetic keeps bin boundaries exact: with `d = max - min` the
/// half-degree hue is `30 * (numerator / d) + sector_offset`.
pub fn rgb_to_hue_bin([r, g, b]: Rgb) -> usize {
    let (r, g, b) = (r as i32, g as i32, b as i32);
    let max = r.max(g).max(b);
    let d = max - r.min(g).min(b);
    if d == 0 {
        return 0;
    }
    let (num, offset) = if max == r {
        (g - b, 0)
    } else if max == g {
        (b - r, 60)
    } else {
        (r - g, 120)
    };
    ((30 * num).div_euclid(d) + offset).rem_euclid(HUE_BINS as i32) as usize
}

fn is_achromatic([r, g, b]: Rgb) -> bool {
    r == g && g == b
}

#[derive(Clone, Debug, PartialEq)]
pub struct HueHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl HueHistogram {
    pub fn from_image(image: &ImageRgb, exclude_achromatic: bool) -> Self {
        let mut counts = vec![0u64; HUE_BINS];
        let mut total = 0;
        for &px in image.pixels() {
            if exclude_achromatic && is_achromatic(px) {
                continue;
            }
            counts[rgb_to_hue_bin(px)] += 1;
            total += 1;
        }
        Self { counts, total }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_pixels(&self) -> u64 {
        self.total
    }

    /// Per-bin proportions; all zero when no pixel was counted.
    pub fn proportions(&self) -> Vec<f64> {
        if self.total == 0 {
            return vec![0.0; HUE_BINS];
        }
        self.counts
            .iter()
            .map(|&c| c as f64 / self.total as f64)
            .collect()
    }

    /// Shannon entropy of the proportions divided by `ln 180`, in [0, 1].
    pub fn normalized_entropy(&self) -> f64 {
        let h: f64 = self
            .proportions()
            .into_iter()
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum();
        // adding +0.0 turns the -0.0 of a single bin into 0.0
        (h / (HUE_BINS as f64).ln()).clamp(0.0, 1.0) + 0.0
    }
}

/// Fraction of edge pixels.
pub fn texture_complexity(edges: &EdgeMap) -> f64 {
    edges.count() as f64 / (edges.height() * edges.width()) as f64
}

pub fn color_complexity(image: &ImageRgb) -> f64 {
    color_complexity_with(image, false)
}

pub fn color_complexity_with(image: &ImageRgb, exclude_achromatic: bool) -> f64 {
    HueHistogram::from_image(image, exclude_achromatic).normalized_entropy()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Complexity {
    pub texture: f64,
    pub color: f64,
}

/// Both complexity metrics for one image.
pub fn measure(
    image: &ImageRgb,
    canny: &CannyParams,
    exclude_achromatic: bool,
) -> Result<Complexity> {
    let edges = canny_edges(image, canny)?;
    Ok(Complexity {
        texture: texture_complexity(&edges),
        color: color_complexity_with(image, exclude_achromatic),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Float reference for the standard RGB to HSV hue.
    fn hue_degrees(px: Rgb) -> Option<f64> {
        let [r, g, b] = px.map(|c| c as f64 / 255.0);
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let d = max - min;
        if d == 0.0 {
            return None;
        }
        let h = if max == r {
            60.0 * ((g - b) / d)
        } else if max == g {
            60.0 * ((b - r) / d + 2.0)
        } else {
            60.0 * ((r - g) / d + 4.0)
        };
        Some(if h < 0.0 { h + 360.0 } else { h })
    }

    #[test]
    fn primary_hues() {
        assert_eq!(rgb_to_hue_bin([255, 0, 0]), 0);
        assert_eq!(rgb_to_hue_bin([0, 255, 0]), 60);
        assert_eq!(rgb_to_hue_bin([0, 0, 255]), 120);
        assert_eq!(rgb_to_hue_bin([128, 128, 128]), 0);
        assert_eq!(rgb_to_hue_bin([255, 0, 1]), 179);
    }

    #[test]
    fn integer_bins_match_float_formula_away_from_boundaries() {
        let mut checked = 0;
        for r in (0..=255).step_by(15) {
            for g in (0..=255).step_by(17) {
                for b in (0..=255).step_by(51) {
                    let px = [r as u8, g as u8, b as u8];
                    let Some(h) = hue_degrees(px) else {
                        assert_eq!(rgb_to_hue_bin(px), 0);
                        continue;
                    };
                    let half = h / 2.0;
                    if (half - half.round()).abs() < 1e-9 {
                        continue;
                    }
                    assert_eq!(rgb_to_hue_bin(px), (half.floor() as usize) % 180, "{px:?}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn single_hue_is_zero_and_two_bins_closed_form() {
        let img = ImageRgb::filled(4, 4, [10, 200, 30]).unwrap();
        assert_eq!(color_complexity(&img), 0.0);

        let img =
            ImageRgb::from_fn(2, 2, |_, x| if x == 0 { [255, 0, 0] } else { [0, 0, 255] }).unwrap();
        let expected = 2f64.ln() / 180f64.ln();
        assert!((color_complexity(&img) - expected).abs() < 1e-12);
        assert!((expected - 0.133478).abs() < 1e-6);
    }

    #[test]
    fn achromatic_exclusion_flag() {
        let img =
            ImageRgb::from_fn(1, 2, |_, x| if x == 0 { [50; 3] } else { [0, 0, 255] }).unwrap();
        assert!(color_complexity_with(&img, false) > 0.0);
        assert_eq!(color_complexity_with(&img, true), 0.0);
        let gray = ImageRgb::filled(3, 3, [7; 3]).unwrap();
        let hist = HueHistogram::from_image(&gray, true);
        assert_eq!(hist.total_pixels(), 0);
        assert_eq!(hist.normalized_entropy(), 0.0);
    }

    #[test]
    fn texture_fraction() {
        let mut bits = vec![false; 100];
        bits.iter_mut().take(25).for_each(|b| *b = true);
        let e = EdgeMap::new(10, 10, bits).unwrap();
        assert_eq!(texture_complexity(&e), 0.25);
        assert_eq!(
            texture_complexity(&EdgeMap::new(2, 2, vec![true; 4]).unwrap()),
            1.0
        );
        assert_eq!(
            texture_complexity(&EdgeMap::new(2, 2, vec![false; 4]).unwrap()),
            0.0
        );
    }
}
