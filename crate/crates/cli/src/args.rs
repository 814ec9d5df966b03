use std::path::PathBuf;

use carve_core::attention::LayerRange;
use carve_core::contrast::{ReshapeMode, StepSelector, DEFAULT_LAMBDA};
use carve_core::imaging::{CannyParams, Rgb};
use carve_core::maskgen::{
    CarveConfig, Connectivity, Resample, ResizePolicy, DEFAULT_K, DEFAULT_P,
};
use carve_core::study::EntropySource;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "carve",
    version,
    about = "Contrastive attention refinement for vision-language models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Refine an image with a question dump and a general-instruction dump.
    Carve(CarveArgs),
    /// Texture and color complexity of an image.
    Complexity(ComplexityArgs),
    /// Per-layer attention entropy of one dump.
    Entropy(EntropyArgs),
    /// Fused contrastive saliency of a dump pair.
    Contrast(ContrastCmdArgs),
    /// Complexity/entropy correlation over a directory of samples.
    Study(StudyArgs),
    /// Write synthetic images and dump pairs.
    Synth(SynthArgs),
    /// Early-termination and caching cost model.
    Cost(CostArgs),
    /// Fill the lowest-saliency pixels at increasing ratios.
    Progressive(ProgressiveArgs),
}

fn parse_fill(s: &str) -> Result<Rgb, String> {
    if let Some(hex) = s.strip_prefix('#') {
        if hex.len() != 6 {
            return Err(format!("expected #rrggbb, got {s:?}"));
        }
        let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).map_err(|e| e.to_string());
        return Ok([byte(0)?, byte(2)?, byte(4)?]);
    }
    let parts: Vec<&str> = s.split(',').collect();
    let [r, g, b] = parts.as_slice() else {
        return Err(format!("expected r,g,b or #rrggbb, got {s:?}"));
    };
    let c = |v: &str| v.trim().parse::<u8>().map_err(|e| format!("{v:?}: {e}"));
    Ok([c(r)?, c(g)?, c(b)?])
}

/// Contrast and fusion settings shared by several subcommands.
#[derive(Debug, Args)]
pub struct ContrastArgs {
    /// Regularizer added to the general attention in the ratio
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Inclusive layer range, e.g. 20-25
    #[arg(long, default_value_t = LayerRange::default())]
    pub layers: LayerRange,
    /// Generation steps: start, end, full, a single step, or A-B
    #[arg(long, default_value_t = StepSelector::default())]
    pub steps: StepSelector,
    /// Token grid to pixel upsampling: nearest or bilinear
    #[arg(long, default_value = "nearest")]
    pub reshape: ReshapeMode,
}

#[derive(Debug, Args)]
pub struct DumpPair {
    /// Image file (PNG or JPEG)
    #[arg(long)]
    pub image: PathBuf,
    /// Attention dump for the task question
    #[arg(long)]
    pub q_dump: PathBuf,
    /// Attention dump for the general instruction
    #[arg(long)]
    pub g_dump: PathBuf,
}

#[derive(Debug, Args)]
pub struct CarveArgs {
    #[command(flatten)]
    pub inputs: DumpPair,
    /// Refined image output (PNG)
    #[arg(long, short)]
    pub out: PathBuf,
    /// Diagnostics JSON; defaults to the output path with a .json extension
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Fraction of pixels kept by the saliency threshold, in (0, 1]
    #[arg(long, default_value_t = DEFAULT_P)]
    pub p: f64,
    /// Maximum number of connected regions kept
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    /// Pixel connectivity for regions: 4 or 8
    #[arg(long, default_value = "8")]
    pub connectivity: Connectivity,
    /// Color for removed pixels and padding: r,g,b or #rrggbb
    #[arg(long, default_value = "0,0,0", value_parser = parse_fill)]
    pub fill: Rgb,
    /// How the crop is resized back: stretch or fit_pad
    #[arg(long, default_value = "fit_pad")]
    pub resize_policy: ResizePolicy,
    /// Resampling filter for the crop: nearest or bilinear
    #[arg(long, default_value = "bilinear")]
    pub resample: Resample,
    #[command(flatten)]
    pub contrast: ContrastArgs,
}

impl CarveArgs {
    pub fn config(&self) -> CarveConfig {
        CarveConfig {
            p: self.p,
            k: self.k,
            lambda: self.contrast.lambda,
            layers: self.contrast.layers,
            steps: self.contrast.steps,
            connectivity: self.connectivity,
            fill: self.fill,
            resize_policy: self.resize_policy,
            resample: self.resample,
            reshape: self.contrast.reshape,
        }
    }
}

#[derive(Debug, Args)]
pub struct CannyArgs {
    /// Gaussian pre-blur sigma
    #[arg(long, default_value_t = CannyParams::default().sigma)]
    pub sigma: f64,
    /// Hysteresis low threshold on Sobel magnitude
    #[arg(long, default_value_t = CannyParams::default().low)]
    pub low: f64,
    /// Hysteresis high threshold on Sobel magnitude
    #[arg(long, default_value_t = CannyParams::default().high)]
    pub high: f64,
    /// Leave gray pixels out of the hue histogram
    #[arg(long)]
    pub exclude_achromatic: bool,
}

impl CannyArgs {
    pub fn params(&self) -> CannyParams {
        CannyParams {
            sigma: self.sigma,
            low: self.low,
            high: self.high,
        }
    }
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    /// Image file (PNG or JPEG)
    pub image: PathBuf,
    #[command(flatten)]
    pub canny: CannyArgs,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    /// Attention dump
    pub dump: PathBuf,
    /// Inclusive layer range averaged into the overall entropy
    #[arg(long, default_value_t = LayerRange::default())]
    pub layers: LayerRange,
    /// Generation step; defaults to the dump's last step
    #[arg(long)]
    pub step: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ContrastCmdArgs {
    /// Attention dump for the task question
    #[arg(long)]
    pub q_dump: PathBuf,
    /// Attention dump for the general instruction
    #[arg(long)]
    pub g_dump: PathBuf,
    /// Output height in pixels; defaults to the token grid height
    #[arg(long)]
    pub height: Option<usize>,
    /// Output width in pixels; defaults to the token grid width
    #[arg(long)]
    pub width: Option<usize>,
    /// Optional grayscale PNG of the saliency scaled to its maximum
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub contrast: ContrastArgs,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Directory with <id>.png|jpg, <id>.q.catt, optional <id>.g.catt and labels.csv
    #[arg(long)]
    pub dir: PathBuf,
    /// Output directory for raw.csv, binned.csv, stats.json, plot.svg
    #[arg(long, short)]
    pub out: PathBuf,
    /// Inclusive layer range averaged into the overall entropy
    #[arg(long, default_value_t = LayerRange::default())]
    pub layers: LayerRange,
    /// Generation step; defaults to each dump's last step
    #[arg(long)]
    pub step: Option<u32>,
    /// Number of equal-width bins on [0, 1]
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Entropy source: question or contrasted
    #[arg(long, default_value = "question")]
    pub entropy_source: EntropySource,
    /// Regularizer for the contrasted entropy source
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Confidence level for intervals: 0.90, 0.95 or 0.99
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[command(flatten)]
    pub canny: CannyArgs,
}

fn parse_block(s: &str) -> Result<[usize; 4], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        &[t, l, b, r] if t <= b && l <= r => Ok([t, l, b, r]),
        _ => Err(format!(
            "expected top,left,bottom,right with top<=bottom and left<=right, got {s:?}"
        )),
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long, short)]
    pub out: PathBuf,
    /// Base seed; sample i uses seed + i. CARVE_SEED overrides it
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of samples
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    /// Visual roughness in [0, 1]; when absent, samples sweep 0..1 evenly
    /// (a single sample uses 0.5)
    #[arg(long)]
    pub roughness: Option<f64>,
    /// Semantic concentration in [0, 1]
    #[arg(long, default_value_t = 1.0)]
    pub concentration: f64,
    /// Bound on the general-prompt perturbation, in [0, 1)
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Token grid side
    #[arg(long, default_value_t = 16)]
    pub grid: usize,
    /// Image side in pixels
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Layers stored in the dumps
    #[arg(long, default_value_t = LayerRange::default())]
    pub layers: LayerRange,
    /// Number of generation steps stored
    #[arg(long, default_value_t = 4)]
    pub steps: u32,
    /// Semantic block in tokens, top,left,bottom,right (inclusive); a
    /// seed-placed bump otherwise
    #[arg(long, value_parser = parse_block)]
    pub block: Option<[usize; 4]>,
    /// Also write a recovery-experiment CSV over the same seeds
    #[arg(long)]
    pub recovery_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Fraction of layers run before extraction; overrides --l-total/--l-end
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Total decoder layers
    #[arg(long, default_value_t = 28)]
    pub l_total: u32,
    /// Last layer needed for extraction
    #[arg(long, default_value_t = 25)]
    pub l_end: u32,
    /// Cache hit rate in [0, 1]
    #[arg(long, default_value_t = 0.3)]
    pub rho: f64,
    /// Layers cached per step
    #[arg(long, default_value_t = 5)]
    pub n_layers: u64,
    /// Steps cached
    #[arg(long, default_value_t = 10)]
    pub n_steps: u64,
    /// Visual tokens per map
    #[arg(long, default_value_t = 1024)]
    pub n_v: u64,
}

#[derive(Debug, Args)]
pub struct ProgressiveArgs {
    #[command(flatten)]
    pub inputs: DumpPair,
    /// Output directory for mask_<ratio>.png files
    #[arg(long, short)]
    pub out: PathBuf,
    /// Fill ratios in [0, 1], comma separated
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75")]
    pub ratios: Vec<f64>,
    /// Color for filled pixels: r,g,b or #rrggbb
    #[arg(long, default_value = "0,0,0", value_parser = parse_fill)]
    pub fill: Rgb,
    #[command(flatten)]
    pub contrast: ContrastArgs,
}
