//! Contrastive refinement of question attention against general attention,
//! spatial reshape of token grids, and weighted fusion over layers and steps.
//!
//! The refinement is the minimizer of a separable regularized reconstruction
//! objective; per token it reduces to `q / (g + lambda)`.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionMap, AttentionStack, LayerRange};
use crate::{Error, Result};

/// Default regularization strength.
pub const DEFAULT_LAMBDA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastConfig {
    pub lambda: f64,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
        }
    }
}

impl ContrastConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda", format!("must be > 0, got {lambda}")));
        }
        Ok(Self { lambda })
    }
}

/// Token-grid field produced by refinement. Values are ratios, not a
/// distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinedMap {
    pub grid_h: usize,
    pub grid_w: usize,
    pub values: Vec<f64>,
}

/// Element-wise `q_i / (g_i + lambda)`.
///
/// `lambda = 0` is accepted only when every `g_i` is strictly positive.
pub fn refine_weights(q: &[f64], g: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if q.len() != g.len() {
        return Err(Error::DimensionMismatch(format!(
            "question has {} tokens, general has {}",
            q.len(),
            g.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param(
            "lambda",
            format!("must be >= 0, got {lambda}"),
        ));
    }
    if g.iter().chain(q).any(|v| v.is_nan() || *v < 0.0) {
        return Err(Error::param("attention", "weights must be non-negative"));
    }
    if lambda == 0.0 && g.contains(&0.0) {
        return Err(Error::param(
            "lambda",
            "lambda = 0 requires strictly positive general attention",
        ));
    }
    Ok(q.iter().zip(g).map(|(q, g)| q / (g + lambda)).collect())
}

pub fn contrast_refine(
    a_q: &AttentionMap,
    a_g: &AttentionMap,
    cfg: &ContrastConfig,
) -> Result<RefinedMap> {
    if a_q.grid() != a_g.grid() {
        return Err(Error::DimensionMismatch(format!(
            "question grid {:?} vs general grid {:?}",
            a_q.grid(),
            a_g.grid()
        )));
    }
    let (grid_h, grid_w) = a_q.grid();
    Ok(RefinedMap {
        grid_h,
        grid_w,
        values: refine_weights(&a_q.weights_f64(), &a_g.weights_f64(), cfg.lambda)?,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReshapeMode {
    /// Each pixel takes the value of the token covering it.
    #[default]
    Nearest,
    /// Half-pixel-centered bilinear interpolation with clamped edges.
    Bilinear,
}

impl FromStr for ReshapeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "bilinear" => Ok(Self::Bilinear),
            _ => Err(Error::param("reshape mode", format!("unknown {s:?}"))),
        }
    }
}

/// Upsamples a row-major token grid to `height x width` pixels.
pub fn reshape_grid(
    values: &[f64],
    grid: (usize, usize),
    height: usize,
    width: usize,
    mode: ReshapeMode,
) -> Result<Vec<f64>> {
    let (gh, gw) = grid;
    if values.len() != gh * gw || gh == 0 || gw == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {gh}x{gw} grid",
            values.len()
        )));
    }
    if height < gh || width < gw {
        return Err(Error::param(
            "reshape target",
            format!("{height}x{width} is smaller than the {gh}x{gw} token grid"),
        ));
    }
    let mut out = Vec::with_capacity(height * width);
    match mode {
        ReshapeMode::Nearest => {
            let cols: Vec<usize> = (0..width).map(|x| x * gw / width).collect();
            for y in 0..height {
                let row = &values[(y * gh / height) * gw..][..gw];
                out.extend(cols.iter().map(|&c| row[c]));
            }
        }
        ReshapeMode::Bilinear => {
            let axis = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f64)> {
                (0..n_out)
                    .map(|i| {
                        let src = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5)
                            .clamp(0.0, (n_in - 1) as f64);
                        let lo = src.floor() as usize;
                        let hi = (lo + 1).min(n_in - 1);
                        (lo, hi, src - lo as f64)
                    })
                    .collect()
            };
            let ys = axis(height, gh);
            let xs = axis(width, gw);
            for &(y0, y1, fy) in &ys {
                for &(x0, x1, fx) in &xs {
                    let top = values[y0 * gw + x0] * (1.0 - fx) + values[y0 * gw + x1] * fx;
                    let bot = values[y1 * gw + x0] * (1.0 - fx) + values[y1 * gw + x1] * fx;
                    out.push(top * (1.0 - fy) + bot * fy);
                }
            }
        }
    }
    Ok(out)
}

pub fn spatial_reshape(
    map: &RefinedMap,
    height: usize,
    width: usize,
    mode: ReshapeMode,
) -> Result<Vec<f64>> {
    reshape_grid(&map.values, (map.grid_h, map.grid_w), height, width, mode)
}

/// Non-negative pixel saliency with at least one positive value.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedSaliency {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl FusedSaliency {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} saliency values for {height}x{width}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("saliency", "values must be finite and >= 0"));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::Degenerate("saliency is zero everywhere".into()));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.values.iter().map(|v| v * c).collect(),
        )
    }
}

/// Which generation steps enter the fusion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSelector {
    /// First generated step only.
    Start,
    /// Final generated step only.
    #[default]
    End,
    /// Every step in the stack.
    Full,
    /// Inclusive step range.
    Range { start: u32, end: u32 },
}

impl StepSelector {
    /// Selected steps from a contiguous step list.
    pub fn resolve(&self, steps: &[u32]) -> Result<Vec<u32>> {
        let (Some(&first), Some(&last)) = (steps.first(), steps.last()) else {
            return Err(Error::param("steps", "stack has no steps"));
        };
        Ok(match *self {
            StepSelector::Start => vec![first],
            StepSelector::End => vec![last],
            StepSelector::Full => steps.to_vec(),
            StepSelector::Range { start, end } => {
                if start > end || start < first || end > last {
                    return Err(Error::param(
                        "steps",
                        format!("range {start}-{end} outside available {first}-{last}"),
                    ));
                }
                (start..=end).collect()
            }
        })
    }
}

impl std::fmt::Display for StepSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepSelector::Start => f.write_str("start"),
            StepSelector::End => f.write_str("end"),
            StepSelector::Full => f.write_str("full"),
            StepSelector::Range { start, end } => write!(f, "{start}-{end}"),
        }
    }
}

impl FromStr for StepSelector {
    type Err = Error;

    /// `start`, `end`, `full`, `A-B`, or a single step `A`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "start" => return Ok(Self::Start),
            "end" => return Ok(Self::End),
            "full" => return Ok(Self::Full),
            _ => {}
        }
        let bad = || Error::param("steps", format!("cannot parse {s:?}"));
        let parts: Vec<&str> = s.split(['-', ':']).collect();
        let (start, end) = match parts.as_slice() {
            [one] => {
                let t = one.trim().parse().map_err(|_| bad())?;
                (t, t)
            }
            [a, b] => (
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            ),
            _ => return Err(bad()),
        };
        if start > end {
            return Err(bad());
        }
        Ok(Self::Range { start, end })
    }
}

/// Fusion weight of step `t`; later steps weigh more.
pub fn fusion_weight(t: u32, t_start: u32) -> f64 {
    (t - t_start + 1) as f64
}

pub type RefinedMaps = BTreeMap<(u32, u32), RefinedMap>;

/// `S = sum_t w_t sum_l reshape(A_hat[l, t])` with `w_t = t - min(steps) + 1`.
///
/// Reshape is linear, so the weighted sum is taken on the token grid and
/// reshaped once. Layers and steps are summed in ascending order regardless
/// of the order given, which keeps the result bit-identical under
/// permutation.
pub fn fuse(
    refined: &RefinedMaps,
    layers: &[u32],
    steps: &[u32],
    height: usize,
    width: usize,
    mode: ReshapeMode,
) -> Result<FusedSaliency> {
    if layers.is_empty() || steps.is_empty() {
        return Err(Error::param(
            "fusion",
            "needs at least one layer and one step",
        ));
    }
    let mut layers = layers.to_vec();
    layers.sort_unstable();
    let mut steps = steps.to_vec();
    steps.sort_unstable();
    let t_start = steps[0];

    let first = refined
        .get(&(layers[0], steps[0]))
        .ok_or(Error::MissingMap {
            layer: layers[0],
            step: steps[0],
        })?;
    let grid = (first.grid_h, first.grid_w);
    let mut acc = vec![0.0; grid.0 * grid.1];
    for &t in &steps {
        let w = fusion_weight(t, t_start);
        for &l in &layers {
            let m = refined
                .get(&(l, t))
                .ok_or(Error::MissingMap { layer: l, step: t })?;
            if (m.grid_h, m.grid_w) != grid {
                return Err(Error::DimensionMismatch(format!(
                    "refined map ({l}, {t}) has grid {}x{}, expected {}x{}",
                    m.grid_h, m.grid_w, grid.0, grid.1
                )));
            }
            for (a, v) in acc.iter_mut().zip(&m.values) {
                *a += w * v;
            }
        }
    }
    FusedSaliency::new(
        height,
        width,
        reshape_grid(&acc, grid, height, width, mode)?,
    )
}

/// Refines every `(layer, step)` pair in `layers x steps`.
pub fn refine_stacks(
    question: &AttentionStack,
    general: &AttentionStack,
    layers: &[u32],
    steps: &[u32],
    cfg: &ContrastConfig,
) -> Result<RefinedMaps> {
    if question.grid() != general.grid() {
        return Err(Error::DimensionMismatch(format!(
            "question grid {:?} vs general grid {:?}",
            question.grid(),
            general.grid()
        )));
    }
    let mut out = RefinedMaps::new();
    for &l in layers {
        for &t in steps {
            let r = contrast_refine(question.require(l, t)?, general.require(l, t)?, cfg)?;
            out.insert((l, t), r);
        }
    }
    Ok(out)
}

/// Contrast, reshape, and fuse two stacks into pixel saliency.
#[allow(clippy::too_many_arguments)]
pub fn fused_saliency(
    question: &AttentionStack,
    general: &AttentionStack,
    layers: LayerRange,
    steps: StepSelector,
    cfg: &ContrastConfig,
    height: usize,
    width: usize,
    mode: ReshapeMode,
) -> Result<FusedSaliency> {
    let layers = layers.layers();
    let q_steps = steps.resolve(question.steps())?;
    let g_steps = steps.resolve(general.steps())?;
    if q_steps != g_steps {
        return Err(Error::param(
            "steps",
            format!("selector {steps} picks {q_steps:?} in the question stack but {g_steps:?} in the general stack"),
        ));
    }
    let refined = refine_stacks(question, general, &layers, &q_steps, cfg)?;
    fuse(&refined, &layers, &q_steps, height, width, mode)
}
