//! Attention maps over visual tokens, the CATT dump container, and entropy.

mod dump;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use dump::{
    read_dump, read_dump_file, write_dump, write_dump_file, DumpError, DumpHeader, DumpWarning,
    ParsedDump, CATT_MAGIC, CATT_VERSION, PAYLOAD_DTYPE,
};

/// Tolerance on the sum of a probability vector.
pub const PROBABILITY_TOLERANCE: f64 = 1e-6;

/// One layer/step attention row restricted to the visual tokens, laid out
/// row-major over the token grid. Weights keep the exact `f32` values
/// carried by the dump.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    layer: u32,
    step: u32,
    grid_h: usize,
    grid_w: usize,
    weights: Vec<f32>,
}

impl AttentionMap {
    pub fn new(
        layer: u32,
        step: u32,
        grid_h: usize,
        grid_w: usize,
        weights: Vec<f32>,
    ) -> std::result::Result<Self, DumpError> {
        if grid_h == 0 || grid_w == 0 {
            return Err(DumpError::EmptyGrid);
        }
        if weights.len() != grid_h * grid_w {
            return Err(DumpError::Truncated {
                expected: grid_h * grid_w,
                actual: weights.len(),
            });
        }
        let mut sum = 0.0f64;
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(DumpError::NonFiniteWeight { layer, step, index });
            }
            if w < 0.0 {
                return Err(DumpError::NegativeWeight { layer, step, index });
            }
            sum += w as f64;
        }
        if sum <= 0.0 {
            return Err(DumpError::ZeroMap { layer, step });
        }
        Ok(Self {
            layer,
            step,
            grid_h,
            grid_w,
            weights,
        })
    }

    /// Builds a map from `f64` weights, normalizing them first.
    pub fn from_weights(
        layer: u32,
        step: u32,
        grid_h: usize,
        grid_w: usize,
        weights: &[f64],
    ) -> Result<Self> {
        let p = normalize(weights)?;
        Ok(Self::new(
            layer,
            step,
            grid_h,
            grid_w,
            p.into_iter().map(|v| v as f32).collect(),
        )?)
    }

    pub fn layer(&self) -> u32 {
        self.layer
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_h, self.grid_w)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn weights_f64(&self) -> Vec<f64> {
        self.weights.iter().map(|&w| w as f64).collect()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().map(|&w| w as f64).sum()
    }

    /// Weights as an exactly normalized `f64` distribution.
    pub fn probabilities(&self) -> Vec<f64> {
        let s = self.sum();
        self.weights.iter().map(|&w| w as f64 / s).collect()
    }

    pub fn entropy(&self) -> f64 {
        entropy_nats(&self.probabilities())
    }

    pub(crate) fn renormalized(&self) -> Self {
        let s = self.sum();
        Self {
            weights: self
                .weights
                .iter()
                .map(|&w| (w as f64 / s) as f32)
                .collect(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    General,
    Question,
}

/// Descriptive fields shared by every map in a stack.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct StackInfo {
    pub model_id: String,
    pub prompt_text: String,
    pub generated_tokens: Vec<String>,
    pub head_aggregation: Option<String>,
}

/// All attention maps from one prompt run, dense over `layers x steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionStack {
    pub info: StackInfo,
    prompt_kind: PromptKind,
    grid_h: usize,
    grid_w: usize,
    layers: Vec<u32>,
    steps: Vec<u32>,
    // layer-major, then step
    maps: Vec<AttentionMap>,
}

impl AttentionStack {
    /// `maps` must hold one map per `(layer, step)` in layer-major order.
    pub fn new(
        info: StackInfo,
        prompt_kind: PromptKind,
        grid: (usize, usize),
        layers: Vec<u32>,
        steps: Vec<u32>,
        maps: Vec<AttentionMap>,
    ) -> std::result::Result<Self, DumpError> {
        check_layout(grid, &layers, &steps)?;
        let expected = layers.len() * steps.len();
        if maps.len() != expected {
            return Err(DumpError::Truncated {
                expected,
                actual: maps.len(),
            });
        }
        for (i, m) in maps.iter().enumerate() {
            let (l, t) = (layers[i / steps.len()], steps[i % steps.len()]);
            if m.layer != l || m.step != t || m.grid() != grid {
                return Err(DumpError::Layout(format!(
                    "map {i} is (layer {}, step {}, grid {:?}), expected (layer {l}, step {t}, grid {grid:?})",
                    m.layer,
                    m.step,
                    m.grid()
                )));
            }
        }
        Ok(Self {
            info,
            prompt_kind,
            grid_h: grid.0,
            grid_w: grid.1,
            layers,
            steps,
            maps,
        })
    }

    /// Builds a stack where every `(layer, step)` map is produced by `f`.
    pub fn from_fn(
        info: StackInfo,
        prompt_kind: PromptKind,
        grid: (usize, usize),
        layers: Vec<u32>,
        steps: Vec<u32>,
        mut f: impl FnMut(u32, u32) -> Result<AttentionMap>,
    ) -> Result<Self> {
        let mut maps = Vec::with_capacity(layers.len() * steps.len());
        for &l in &layers {
            for &t in &steps {
                maps.push(f(l, t)?);
            }
        }
        Ok(Self::new(info, prompt_kind, grid, layers, steps, maps)?)
    }

    pub fn prompt_kind(&self) -> PromptKind {
        self.prompt_kind
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_h, self.grid_w)
    }

    pub fn n_tokens(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn layers(&self) -> &[u32] {
        &self.layers
    }

    pub fn steps(&self) -> &[u32] {
        &self.steps
    }

    pub fn t_start(&self) -> u32 {
        self.steps[0]
    }

    pub fn t_end(&self) -> u32 {
        *self.steps.last().expect("steps are non-empty")
    }

    pub fn maps(&self) -> &[AttentionMap] {
        &self.maps
    }

    pub fn get(&self, layer: u32, step: u32) -> Option<&AttentionMap> {
        let li = self.layers.binary_search(&layer).ok()?;
        let ti = step.checked_sub(self.steps[0])? as usize;
        if ti >= self.steps.len() {
            return None;
        }
        self.maps.get(li * self.steps.len() + ti)
    }

    pub fn require(&self, layer: u32, step: u32) -> Result<&AttentionMap> {
        self.get(layer, step)
            .ok_or(Error::MissingMap { layer, step })
    }
}

pub(crate) fn check_layout(
    grid: (usize, usize),
    layers: &[u32],
    steps: &[u32],
) -> std::result::Result<(), DumpError> {
    if grid.0 == 0 || grid.1 == 0 {
        return Err(DumpError::EmptyGrid);
    }
    if layers.is_empty() || steps.is_empty() {
        return Err(DumpError::Layout(
            "layer and step lists must be non-empty".into(),
        ));
    }
    if layers.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DumpError::UnsortedLayers(layers.to_vec()));
    }
    if steps.windows(2).any(|w| w[1] != w[0].wrapping_add(1)) {
        return Err(DumpError::NonContiguousSteps(steps.to_vec()));
    }
    Ok(())
}

/// Inclusive layer range `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRange {
    pub start: u32,
    pub end: u32,
}

impl LayerRange {
    pub fn new(start: u32, end: u32) -> Result<Self> {
        if start > end {
            return Err(Error::param(
                "layer range",
                format!("[{start}, {end}] is empty"),
            ));
        }
        Ok(Self { start, end })
    }

    pub fn layers(&self) -> Vec<u32> {
        (self.start..=self.end).collect()
    }

    pub fn len(&self) -> usize {
        (self.end - self.start) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for LayerRange {
    fn default() -> Self {
        Self { start: 20, end: 25 }
    }
}

impl std::fmt::Display for LayerRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

impl std::str::FromStr for LayerRange {
    type Err = Error;

    /// Accepts `20-25`, `20:25`, or a single layer `22`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param("layer range", format!("cannot parse {s:?}"));
        let parts: Vec<&str> = s.split(['-', ':']).map(str::trim).collect();
        match parts.as_slice() {
            [one] => {
                let l = one.parse().map_err(|_| bad())?;
                Self::new(l, l)
            }
            [a, b] => Self::new(a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?),
            _ => Err(bad()),
        }
    }
}

/// Divides non-negative weights by their sum.
pub fn normalize(weights: &[f64]) -> Result<Vec<f64>> {
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::param(
            "weights",
            format!("entry {w} is negative or not finite"),
        ));
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(Error::Degenerate("weights sum to zero".into()));
    }
    Ok(weights.iter().map(|w| w / sum).collect())
}

/// `-sum p ln p` with `0 ln 0 = 0`; no validation.
pub(crate) fn entropy_nats(p: &[f64]) -> f64 {
    // + 0.0 maps the -0.0 of a one-hot vector to 0.0
    p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum::<f64>()
        + 0.0
}

/// Shannon entropy in nats of a probability vector.
pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::param(
            "distribution",
            "entries must be finite and >= 0",
        ));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(Error::param(
            "distribution",
            format!("sums to {sum}, expected 1"),
        ));
    }
    Ok(entropy_nats(p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEntropy {
    pub layer: u32,
    pub entropy: f64,
}

/// Entropy of each listed layer's map at `step`, in the given order.
pub fn layer_entropies(
    stack: &AttentionStack,
    layers: &[u32],
    step: u32,
) -> Result<Vec<LayerEntropy>> {
    layers
        .iter()
        .map(|&layer| {
            Ok(LayerEntropy {
                layer,
                entropy: stack.require(layer, step)?.entropy(),
            })
        })
        .collect()
}

/// Mean per-layer entropy over an explicit layer list.
pub fn mean_entropy(stack: &AttentionStack, layers: &[u32], step: u32) -> Result<f64> {
    if layers.is_empty() {
        return Err(Error::param("layer range", "no layers selected"));
    }
    let hs = layer_entropies(stack, layers, step)?;
    Ok(hs.iter().map(|h| h.entropy).sum::<f64>() / hs.len() as f64)
}

/// Layer-averaged attention entropy at one generation step.
pub fn overall_entropy(stack: &AttentionStack, range: LayerRange, step: u32) -> Result<f64> {
    mean_entropy(stack, &range.layers(), step)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn uniform_stack(
        grid: (usize, usize),
        layers: Vec<u32>,
        steps: Vec<u32>,
    ) -> AttentionStack {
        let n = grid.0 * grid.1;
        AttentionStack::from_fn(
            StackInfo::default(),
            PromptKind::Question,
            grid,
            layers,
            steps,
            |l, t| AttentionMap::from_weights(l, t, grid.0, grid.1, &vec![1.0; n]),
        )
        .unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        assert!(normalize(&[0.0, 0.0]).is_err());
        assert!(normalize(&[1.0, -0.5]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(shannon_entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((shannon_entropy(&[0.25; 4]).unwrap() - 4f64.ln()).abs() < 1e-12);
        let h = shannon_entropy(&[0.5, 0.25, 0.25]).unwrap();
        assert!((h - 1.5 * 2f64.ln()).abs() < 1e-12);
        assert!((h - 1.03972).abs() < 1e-5);
        assert!(shannon_entropy(&[0.5, 0.6]).is_err());
    }

    #[test]
    fn overall_entropy_is_mean_and_checks_layers() {
        // layer 1 one-hot (0 nats), layer 2 uniform over 4 (ln 4)
        let stack = AttentionStack::from_fn(
            StackInfo::default(),
            PromptKind::Question,
            (2, 2),
            vec![1, 2],
            vec![0],
            |l, t| {
                let w = if l == 1 {
                    vec![1.0, 0.0, 0.0, 0.0]
                } else {
                    vec![1.0; 4]
                };
                AttentionMap::from_weights(l, t, 2, 2, &w)
            },
        )
        .unwrap();
        let single = overall_entropy(&stack, LayerRange::new(2, 2).unwrap(), 0).unwrap();
        assert_eq!(single, stack.get(2, 0).unwrap().entropy());
        let both = overall_entropy(&stack, LayerRange::new(1, 2).unwrap(), 0).unwrap();
        assert_eq!(both, (0.0 + stack.get(2, 0).unwrap().entropy()) / 2.0);
        assert!(matches!(
            overall_entropy(&stack, LayerRange::new(1, 3).unwrap(), 0),
            Err(Error::MissingMap { layer: 3, .. })
        ));
        assert!(mean_entropy(&stack, &[], 0).is_err());
    }

    #[test]
    fn layer_range_parsing() {
        assert_eq!(
            "20-25".parse::<LayerRange>().unwrap(),
            LayerRange::new(20, 25).unwrap()
        );
        assert_eq!(
            "3:4".parse::<LayerRange>().unwrap(),
            LayerRange::new(3, 4).unwrap()
        );
        assert_eq!("7".parse::<LayerRange>().unwrap().len(), 1);
        assert!("9-2".parse::<LayerRange>().is_err());
        assert!("a-b".parse::<LayerRange>().is_err());
    }

    #[test]
    fn stack_lookup() {
        let s = uniform_stack((2, 3), vec![4, 9], vec![5, 6, 7]);
        assert_eq!(s.t_start(), 5);
        assert_eq!(s.t_end(), 7);
        let m = s.get(9, 6).unwrap();
        assert_eq!((m.layer(), m.step()), (9, 6));
        assert!(s.get(5, 6).is_none());
        assert!(s.get(4, 8).is_none());
        assert!(s.get(4, 4).is_none());
    }

    #[test]
    fn stack_rejects_step_gaps() {
        let maps = vec![
            AttentionMap::from_weights(0, 0, 1, 1, &[1.0]).unwrap(),
            AttentionMap::from_weights(0, 2, 1, 1, &[1.0]).unwrap(),
        ];
        let err = AttentionStack::new(
            StackInfo::default(),
            PromptKind::General,
            (1, 1),
            vec![0],
            vec![0, 2],
            maps,
        )
        .unwrap_err();
        assert!(matches!(err, DumpError::NonContiguousSteps(_)));
    }
}
