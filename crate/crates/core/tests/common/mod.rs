//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::path::PathBuf;

use carve_core::attention::{AttentionMap, AttentionStack, PromptKind, StackInfo};
use carve_core::imaging::ImageRgb;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Connected components by explicit-stack depth-first flood fill, started
/// from each unvisited set pixel in raster order. Pixel lists are sorted.
pub fn flood_fill(bits: &[bool], h: usize, w: usize, eight: bool) -> Vec<Vec<usize>> {
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    for start in 0..h * w {
        if !bits[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp.push(i);
            let (y, x) = ((i / w) as i64, (i % w) as i64);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if (dy == 0 && dx == 0) || (!eight && dy != 0 && dx != 0) {
                        continue;
                    }
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                        continue;
                    }
                    let j = (ny * w as i64 + nx) as usize;
                    if bits[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Hue in degrees [0, 360) by the textbook float formula; `None` when
/// achromatic.
pub fn float_hue([r, g, b]: [u8; 3]) -> Option<f64> {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    if d == 0.0 {
        return None;
    }
    let h = if max == r {
        60.0 * (((g - b) / d) % 6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    Some(h.rem_euclid(360.0))
}

/// Fully saturated color at hue `deg`, rounded to 8 bits.
pub fn hsv_color(deg: f64) -> [u8; 3] {
    let hp = deg.rem_euclid(360.0) / 60.0;
    let x = 1.0 - (hp % 2.0 - 1.0).abs();
    let (r, g, b) = match hp as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [r, g, b].map(|v: f64| (v * 255.0).round() as u8)
}

/// Reference Canny with a full 2-D Gaussian kernel and direct 3x3 Sobel
/// convolution. Same documented conventions: replicated borders, magnitude
/// thresholds `>= low` / `>= high`, zero magnitude outside the image during
/// suppression, ties kept toward the lower-index neighbor on axis-aligned
/// directions, 8-connected hysteresis.
pub fn reference_canny(img: &ImageRgb, low: f64, high: f64, sigma: f64) -> Vec<bool> {
    let (h, w) = (img.height() as i64, img.width() as i64);
    let gray: Vec<f64> = img
        .pixels()
        .iter()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect();
    let px =
        |buf: &[f64], y: i64, x: i64| buf[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];

    let r = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            kernel.push((
                dy,
                dx,
                (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp(),
            ));
        }
    }
    let norm: f64 = kernel.iter().map(|k| k.2).sum();
    let mut smooth = vec![0.0; (h * w) as usize];
    for y in 0..h {
        for x in 0..w {
            smooth[(y * w + x) as usize] = kernel
                .iter()
                .map(|&(dy, dx, k)| k * px(&gray, y + dy, x + dx))
                .sum::<f64>()
                / norm;
        }
    }

    const SX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    const SY: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
    let mut mag = vec![0.0; (h * w) as usize];
    let mut ang = vec![0.0; (h * w) as usize];
    for y in 0..h {
        for x in 0..w {
            let (mut gx, mut gy) = (0.0, 0.0);
            for i in 0..3 {
                for j in 0..3 {
                    let v = px(&smooth, y + i as i64 - 1, x + j as i64 - 1);
                    gx += SX[i][j] * v;
                    gy += SY[i][j] * v;
                }
            }
            let k = (y * w + x) as usize;
            mag[k] = (gx * gx + gy * gy).sqrt();
            ang[k] = gy.atan2(gx).to_degrees().rem_euclid(180.0);
        }
    }
    let m = |y: i64, x: i64| {
        if (0..h).contains(&y) && (0..w).contains(&x) {
            mag[(y * w + x) as usize]
        } else {
            0.0
        }
    };
    let mut thin = vec![0.0; (h * w) as usize];
    for y in 0..h {
        for x in 0..w {
            let k = (y * w + x) as usize;
            let v = mag[k];
            if v < low {
                continue;
            }
            let a = ang[k];
            let keep = if !(22.5..157.5).contains(&a) {
                v > m(y, x - 1) && v >= m(y, x + 1)
            } else if a < 67.5 {
                v > m(y - 1, x - 1) && v > m(y + 1, x + 1)
            } else if a < 112.5 {
                v > m(y - 1, x) && v >= m(y + 1, x)
            } else {
                v > m(y - 1, x + 1) && v > m(y + 1, x - 1)
            };
            if keep {
                thin[k] = v;
            }
        }
    }
    let mut edges = vec![false; (h * w) as usize];
    let mut stack: Vec<(i64, i64)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if thin[(y * w + x) as usize] >= high {
                stack.push((y, x));
            }
        }
    }
    while let Some((y, x)) = stack.pop() {
        let k = (y * w + x) as usize;
        if edges[k] {
            continue;
        }
        edges[k] = true;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (ny, nx) = (y + dy, x + dx);
                if (0..h).contains(&ny) && (0..w).contains(&nx) {
                    let j = (ny * w + nx) as usize;
                    if !edges[j] && thin[j] >= low {
                        stack.push((ny, nx));
                    }
                }
            }
        }
    }
    edges
}

/// Stack with the same normalized weights at every `(layer, step)`.
pub fn constant_stack(
    grid: (usize, usize),
    layers: Vec<u32>,
    steps: Vec<u32>,
    weights: &[f64],
    kind: PromptKind,
) -> AttentionStack {
    AttentionStack::from_fn(StackInfo::default(), kind, grid, layers, steps, |l, t| {
        AttentionMap::from_weights(l, t, grid.0, grid.1, weights)
    })
    .unwrap()
}
