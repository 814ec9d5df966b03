use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contrast::FusedSaliency;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    /// N, S, E, W neighbors.
    Four,
    /// All eight neighbors.
    #[default]
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            4 => Ok(Self::Four),
            8 => Ok(Self::Eight),
            _ => Err(Error::param(
                "connectivity",
                format!("must be 4 or 8, got {v}"),
            )),
        }
    }
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: u8 = s
            .parse()
            .map_err(|_| Error::param("connectivity", format!("must be 4 or 8, got {s:?}")))?;
        v.try_into()
    }
}

/// Inclusive pixel bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl BBox {
    pub fn point(y: usize, x: usize) -> Self {
        Self {
            top: y,
            left: x,
            bottom: y,
            right: x,
        }
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }

    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }

    pub fn include(&mut self, y: usize, x: usize) {
        self.top = self.top.min(y);
        self.left = self.left.min(x);
        self.bottom = self.bottom.max(y);
        self.right = self.right.max(x);
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            top: self.top.min(other.top),
            left: self.left.min(other.left),
            bottom: self.bottom.max(other.bottom),
            right: self.right.max(other.right),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} mask bits for {height}x{width}",
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
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

/// A maximal connected set of mask pixels (linear indices, ascending).
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub pixels: Vec<usize>,
    pub cumulative_score: f64,
    pub bbox: BBox,
}

/// Number of pixels the top-`p` threshold must retain, `ceil(p * n)`.
///
/// A 1e-9 slack absorbs products such as `0.3 * 10 = 3.0000000000000004`.
pub fn retain_count(p: f64, n: usize) -> usize {
    ((p * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

fn check_fraction(name: &'static str, p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(name, format!("must be in (0, 1], got {p}")));
    }
    Ok(())
}

/// Nearest-rank threshold: the `ceil(p * HW)`-th largest saliency value.
/// Every pixel tied at the threshold is retained.
pub fn percentile_threshold(s: &FusedSaliency, p: f64) -> Result<f64> {
    check_fraction("p", p)?;
    let mut v = s.values().to_vec();
    let k = retain_count(p, v.len());
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    Ok(*kth)
}

pub fn threshold_mask(s: &FusedSaliency, tau: f64) -> BinaryMask {
    BinaryMask {
        height: s.height(),
        width: s.width(),
        bits: s.values().iter().map(|&v| v >= tau).collect(),
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

/// Pixel sets of the connected components, ordered by their first pixel in
/// raster order. Two-pass labeling with union-find.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Vec<usize>> {
    let (h, w) = (mask.height, mask.width);
    let mut labels = vec![0u32; h * w];
    let mut parent: Vec<u32> = vec![0];
    let back: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1)],
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask.bits[i] {
                continue;
            }
            let mut root = 0u32;
            for &(dy, dx) in back {
                let (ny, nx) = (y as isize + dy, x as isize + dx);
                if ny < 0 || nx < 0 || nx >= w as isize {
                    continue;
                }
                let l = labels[ny as usize * w + nx as usize];
                if l == 0 {
                    continue;
                }
                let r = find(&mut parent, l);
                if root == 0 {
                    root = r;
                } else if r != root {
                    let (lo, hi) = (root.min(r), root.max(r));
                    parent[hi as usize] = lo;
                    root = lo;
                }
            }
            if root == 0 {
                root = parent.len() as u32;
                parent.push(root);
            }
            labels[i] = root;
        }
    }
    let mut slot = vec![usize::MAX; parent.len()];
    let mut sets: Vec<Vec<usize>> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let r = find(&mut parent, l) as usize;
        if slot[r] == usize::MAX {
            slot[r] = sets.len();
            sets.push(Vec::new());
        }
        sets[slot[r]].push(i);
    }
    sets
}

/// Connected regions of `mask` scored by `s`, ordered by bbox `(top, left)`
/// and then by first pixel.
pub fn connected_components(
    mask: &BinaryMask,
    connectivity: Connectivity,
    s: &FusedSaliency,
) -> Result<Vec<Region>> {
    if (mask.height, mask.width) != (s.height(), s.width()) {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} vs saliency {}x{}",
            mask.height,
            mask.width,
            s.height(),
            s.width()
        )));
    }
    let w = mask.width;
    let mut regions: Vec<Region> = label_components(mask, connectivity)
        .into_iter()
        .map(|pixels| {
            let mut bbox = BBox::point(pixels[0] / w, pixels[0] % w);
            let mut score = 0.0;
            for &i in &pixels {
                bbox.include(i / w, i % w);
                score += s.values()[i];
            }
            Region {
                pixels,
                cumulative_score: score,
                bbox,
            }
        })
        .collect();
    regions.sort_by_key(|r| (r.bbox.top, r.bbox.left, r.pixels[0]));
    Ok(regions)
}

/// The mask `M*`: union of the kept regions.
#[derive(Clone, Debug, PartialEq)]
pub struct CarveMask {
    pub mask: BinaryMask,
    pub regions_kept: Vec<Region>,
}

impl CarveMask {
    pub fn is_empty(&self) -> bool {
        self.regions_kept.is_empty()
    }

    /// Tight bounding box of all kept pixels.
    pub fn bbox(&self) -> Option<BBox> {
        self.regions_kept
            .iter()
            .map(|r| r.bbox)
            .reduce(|a, b| a.union(&b))
    }

    pub fn height(&self) -> usize {
        self.mask.height
    }

    pub fn width(&self) -> usize {
        self.mask.width
    }
}

/// Keeps the `k` regions with the largest cumulative score. Ties keep the
/// earlier region in `(top, left)` order. An empty input yields an empty mask.
pub fn select_regions(
    mut regions: Vec<Region>,
    k: usize,
    height: usize,
    width: usize,
) -> Result<CarveMask> {
    if k == 0 {
        return Err(Error::param("k", "must be >= 1"));
    }
    regions.sort_by(|a, b| b.cumulative_score.total_cmp(&a.cumulative_score));
    regions.truncate(k);
    let mut bits = vec![false; height * width];
    for r in &regions {
        for &i in &r.pixels {
            *bits.get_mut(i).ok_or_else(|| {
                Error::DimensionMismatch(format!("region pixel {i} outside {height}x{width}"))
            })? = true;
        }
    }
    Ok(CarveMask {
        mask: BinaryMask::new(height, width, bits)?,
        regions_kept: regions,
    })
}
