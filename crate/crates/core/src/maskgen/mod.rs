//! Mask generation and visual extraction.
//!
//! The pipeline runs contrast, reshape and fusion, keeps the top-`p` pixels
//! of the fused saliency, splits them into connected regions, keeps the `K`
//! regions with the highest cumulative saliency, and crops the image to
//! them.

mod extract;
mod regions;

use serde::{Deserialize, Serialize};

use crate::attention::{layer_entropies, AttentionStack, LayerEntropy, LayerRange};
use crate::contrast::{fused_saliency, ContrastConfig, FusedSaliency, ReshapeMode, StepSelector};
use crate::imaging::{ImageRgb, Rgb};
use crate::{Error, Result};

pub use extract::{extract, progressive_mask, ExtractOptions, Extraction, Resample, ResizePolicy};
pub use regions::{
    connected_components, label_components, percentile_threshold, retain_count, select_regions,
    threshold_mask, BBox, BinaryMask, CarveMask, Connectivity, Region,
};

pub const DEFAULT_P: f64 = 0.4;
pub const DEFAULT_K: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarveConfig {
    /// Fraction of pixels retained by the percentile threshold, in (0, 1].
    pub p: f64,
    /// Maximum number of regions kept.
    pub k: usize,
    pub lambda: f64,
    pub layers: LayerRange,
    pub steps: StepSelector,
    pub connectivity: Connectivity,
    pub fill: Rgb,
    pub resize_policy: ResizePolicy,
    pub resample: Resample,
    pub reshape: ReshapeMode,
}

impl Default for CarveConfig {
    fn default() -> Self {
        Self {
            p: DEFAULT_P,
            k: DEFAULT_K,
            lambda: crate::contrast::DEFAULT_LAMBDA,
            layers: LayerRange::default(),
            steps: StepSelector::default(),
            connectivity: Connectivity::default(),
            fill: [0, 0, 0],
            resize_policy: ResizePolicy::default(),
            resample: Resample::default(),
            reshape: ReshapeMode::default(),
        }
    }
}

impl CarveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::param(
                "p",
                format!("must be in (0, 1], got {}", self.p),
            ));
        }
        if self.k == 0 {
            return Err(Error::param("k", "must be >= 1"));
        }
        ContrastConfig::new(self.lambda)?;
        LayerRange::new(self.layers.start, self.layers.end)?;
        Ok(())
    }

    pub fn contrast(&self) -> ContrastConfig {
        ContrastConfig {
            lambda: self.lambda,
        }
    }

    pub fn extract_options(&self) -> ExtractOptions {
        ExtractOptions {
            fill: self.fill,
            resize_policy: self.resize_policy,
            resample: self.resample,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub bbox: BBox,
    pub pixels: usize,
    pub score: f64,
    pub kept: bool,
}

/// Everything the pipeline decided, for the JSON sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub image_height: usize,
    pub image_width: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub config: CarveConfig,
    pub steps_used: Vec<u32>,
    pub tau: f64,
    pub retained_pixels: usize,
    pub regions: Vec<RegionSummary>,
    pub crop: Option<BBox>,
    pub fallback: bool,
    pub question_entropies: Vec<LayerEntropy>,
    pub general_entropies: Vec<LayerEntropy>,
    pub question_overall_entropy: f64,
    pub general_overall_entropy: f64,
}

#[derive(Clone, Debug)]
pub struct CarveOutcome {
    pub image: ImageRgb,
    pub saliency: FusedSaliency,
    pub mask: CarveMask,
    pub diagnostics: Diagnostics,
}

fn check_stacks(question: &AttentionStack, general: &AttentionStack) -> Result<()> {
    if question.grid() != general.grid() {
        return Err(Error::DimensionMismatch(format!(
            "question grid {:?} vs general grid {:?}",
            question.grid(),
            general.grid()
        )));
    }
    Ok(())
}

/// Fused contrastive saliency at the image's resolution.
pub fn saliency_for(
    image: &ImageRgb,
    question: &AttentionStack,
    general: &AttentionStack,
    cfg: &CarveConfig,
) -> Result<FusedSaliency> {
    cfg.validate()?;
    check_stacks(question, general)?;
    fused_saliency(
        question,
        general,
        cfg.layers,
        cfg.steps,
        &cfg.contrast(),
        image.height(),
        image.width(),
        cfg.reshape,
    )
}

fn mean(hs: &[LayerEntropy]) -> f64 {
    hs.iter().map(|h| h.entropy).sum::<f64>() / hs.len() as f64
}

/// Contrast, reshape, fuse, threshold, label, select, extract.
pub fn carve_pipeline(
    image: &ImageRgb,
    question: &AttentionStack,
    general: &AttentionStack,
    cfg: &CarveConfig,
) -> Result<CarveOutcome> {
    let saliency = saliency_for(image, question, general, cfg)?;
    let tau = percentile_threshold(&saliency, cfg.p)?;
    let thresholded = threshold_mask(&saliency, tau);
    let regions = connected_components(&thresholded, cfg.connectivity, &saliency)?;
    let all_regions = regions.clone();
    let mask = select_regions(regions, cfg.k, image.height(), image.width())?;
    let extraction = extract(image, &mask, &cfg.extract_options())?;

    let layers = cfg.layers.layers();
    let question_entropies = layer_entropies(question, &layers, question.t_end())?;
    let general_entropies = layer_entropies(general, &layers, general.t_end())?;
    let summaries = all_regions
        .iter()
        .map(|r| RegionSummary {
            bbox: r.bbox,
            pixels: r.pixels.len(),
            score: r.cumulative_score,
            kept: mask.regions_kept.iter().any(|k| k.pixels[0] == r.pixels[0]),
        })
        .collect();
    let (grid_h, grid_w) = question.grid();
    let diagnostics = Diagnostics {
        image_height: image.height(),
        image_width: image.width(),
        grid_h,
        grid_w,
        config: cfg.clone(),
        steps_used: cfg.steps.resolve(question.steps())?,
        tau,
        retained_pixels: thresholded.count(),
        regions: summaries,
        crop: extraction.crop,
        fallback: extraction.fallback,
        question_overall_entropy: mean(&question_entropies),
        general_overall_entropy: mean(&general_entropies),
        question_entropies,
        general_entropies,
    };
    Ok(CarveOutcome {
        image: extraction.image,
        saliency,
        mask,
        diagnostics,
    })
}
