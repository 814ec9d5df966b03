//! Correlation harness: per-image texture and color complexity against
//! layer-averaged attention entropy, with binned means, Pearson
//! coefficients, and optional accuracy-vs-entropy statistics when outcome
//! labels are supplied.
//!
//! Input directory layout: `<id>.png|jpg|jpeg`, `<id>.q.catt`, optional
//! `<id>.g.catt`, optional `labels.csv` with columns `id,correct`.

mod plot;
mod stats;

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{
    entropy_nats, layer_entropies, normalize, read_dump_file, LayerEntropy, LayerRange,
};
use crate::contrast::{refine_weights, DEFAULT_LAMBDA};
use crate::imaging::{measure, CannyParams, ImageRgb};
use crate::{Error, Result};

pub use plot::{render_svg, Series};
pub use stats::{
    bin_index, bin_mean, confidence_interval, pearson_r, t_quantile, Bin, CONFIDENCE_LEVELS,
};

/// Which attention the entropy is measured on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropySource {
    /// The question-prompt attention as captured.
    #[default]
    Question,
    /// The refined ratio of question to general attention, renormalized.
    /// Needs `<id>.g.catt`.
    Contrasted,
}

impl std::str::FromStr for EntropySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "question" => Ok(Self::Question),
            "contrasted" => Ok(Self::Contrasted),
            _ => Err(Error::param("entropy source", format!("unknown {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub layers: LayerRange,
    /// Generation step; `None` takes each dump's last step.
    pub step: Option<u32>,
    pub n_bins: usize,
    pub canny: CannyParams,
    pub exclude_achromatic: bool,
    pub entropy_source: EntropySource,
    pub lambda: f64,
    pub confidence_level: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            layers: LayerRange::default(),
            step: None,
            n_bins: 10,
            canny: CannyParams::default(),
            exclude_achromatic: false,
            entropy_source: EntropySource::Question,
            lambda: DEFAULT_LAMBDA,
            confidence_level: 0.95,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bins == 0 {
            return Err(Error::param("bins", "need at least one bin"));
        }
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(Error::param(
                "lambda",
                format!("must be > 0, got {}", self.lambda),
            ));
        }
        t_quantile(self.confidence_level, 1)?;
        self.canny.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub texture_complexity: f64,
    pub color_complexity: f64,
    /// Mean per-layer entropy in nats.
    pub overall_entropy: f64,
    /// `overall_entropy / ln N_v`, in [0, 1].
    pub normalized_entropy: f64,
    pub layer_entropies: Vec<LayerEntropy>,
    pub correct: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRow {
    id: String,
    texture: f64,
    color: f64,
    entropy: f64,
    normalized_entropy: f64,
    /// `layer:entropy` pairs separated by `;`
    layer_entropies: String,
    correct: Option<u8>,
}

impl From<&SampleRecord> for RawRow {
    fn from(r: &SampleRecord) -> Self {
        RawRow {
            id: r.id.clone(),
            texture: r.texture_complexity,
            color: r.color_complexity,
            entropy: r.overall_entropy,
            normalized_entropy: r.normalized_entropy,
            layer_entropies: r
                .layer_entropies
                .iter()
                .map(|h| format!("{}:{}", h.layer, h.entropy))
                .collect::<Vec<_>>()
                .join(";"),
            correct: r.correct.map(u8::from),
        }
    }
}

impl TryFrom<RawRow> for SampleRecord {
    type Error = Error;

    fn try_from(row: RawRow) -> Result<Self> {
        let bad = || {
            Error::param(
                "layer_entropies",
                format!("malformed {:?}", row.layer_entropies),
            )
        };
        let layer_entropies = if row.layer_entropies.is_empty() {
            Vec::new()
        } else {
            row.layer_entropies
                .split(';')
                .map(|pair| {
                    let (l, h) = pair.split_once(':').ok_or_else(bad)?;
                    Ok(LayerEntropy {
                        layer: l.parse().map_err(|_| bad())?,
                        entropy: h.parse().map_err(|_| bad())?,
                    })
                })
                .collect::<Result<_>>()?
        };
        Ok(SampleRecord {
            id: row.id,
            texture_complexity: row.texture,
            color_complexity: row.color,
            overall_entropy: row.entropy,
            normalized_entropy: row.normalized_entropy,
            layer_entropies,
            correct: row.correct.map(|c| c != 0),
        })
    }
}

pub fn write_raw_csv<W: Write>(records: &[SampleRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record([
            "id",
            "texture",
            "color",
            "entropy",
            "normalized_entropy",
            "layer_entropies",
            "correct",
        ])?;
    }
    for r in records {
        w.serialize(RawRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw_csv<R: Read>(input: R) -> Result<Vec<SampleRecord>> {
    csv::Reader::from_reader(input)
        .deserialize::<RawRow>()
        .map(|row| SampleRecord::try_from(row?))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedRow {
    pub metric: String,
    pub center: f64,
    pub mean_entropy: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    pub half_width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBin {
    pub center: f64,
    pub count: usize,
    pub accuracy: Option<f64>,
    pub half_width: Option<f64>,
}

/// Statistics over labelled samples only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeStats {
    pub labelled: usize,
    pub accuracy_by_entropy: Vec<AccuracyBin>,
    pub entropy_correct: Option<MeanCi>,
    pub entropy_incorrect: Option<MeanCi>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyStats {
    pub samples: usize,
    pub pearson_texture_entropy: Option<f64>,
    pub pearson_color_entropy: Option<f64>,
    pub config: StudyConfig,
    pub outcome: Option<OutcomeStats>,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct StudyReport {
    pub records: Vec<SampleRecord>,
    pub binned: Vec<BinnedRow>,
    pub stats: StudyStats,
}

#[derive(Debug, Default)]
struct SampleFiles {
    image: Option<PathBuf>,
    question: Option<PathBuf>,
    general: Option<PathBuf>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

fn scan(dir: &Path) -> Result<(BTreeMap<String, SampleFiles>, Option<PathBuf>)> {
    let mut files: BTreeMap<String, SampleFiles> = BTreeMap::new();
    let mut labels = None;
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let Some(name) = path.file_name().and_then(|n| n.to_str()).map(str::to_owned) else {
            continue;
        };
        if name == "labels.csv" {
            labels = Some(path);
        } else if let Some(id) = name.strip_suffix(".q.catt") {
            files.entry(id.to_owned()).or_default().question = Some(path);
        } else if let Some(id) = name.strip_suffix(".g.catt") {
            files.entry(id.to_owned()).or_default().general = Some(path);
        } else if is_image(&path) {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_owned();
            files.entry(id).or_default().image = Some(path);
        }
    }
    Ok((files, labels))
}

#[derive(Deserialize)]
struct LabelRow {
    id: String,
    correct: u8,
}

fn read_labels(path: &Path, errors: &mut Vec<String>) -> Result<BTreeMap<String, bool>> {
    let mut out = BTreeMap::new();
    for row in csv::Reader::from_path(path)?.deserialize::<LabelRow>() {
        let row = row?;
        match row.correct {
            0 | 1 => {
                out.insert(row.id, row.correct == 1);
            }
            v => errors.push(format!(
                "labels.csv: {}: correct must be 0 or 1, got {v}",
                row.id
            )),
        }
    }
    Ok(out)
}

fn sample_entropies(files: &SampleFiles, cfg: &StudyConfig) -> Result<(Vec<LayerEntropy>, usize)> {
    let q_path = files.question.as_deref().expect("checked by caller");
    let q = read_dump_file(q_path)?;
    for w in &q.warnings {
        log::warn!("{}: {w}", q_path.display());
    }
    let q = q.stack;
    let step = cfg.step.unwrap_or_else(|| q.t_end());
    let layers = cfg.layers.layers();
    let hs = match cfg.entropy_source {
        EntropySource::Question => layer_entropies(&q, &layers, step)?,
        EntropySource::Contrasted => {
            let Some(g_path) = files.general.as_deref() else {
                return Err(Error::param(
                    "general dump",
                    "contrasted entropy needs <id>.g.catt",
                ));
            };
            let g = read_dump_file(g_path)?.stack;
            if g.grid() != q.grid() {
                return Err(Error::DimensionMismatch(format!(
                    "question grid {:?} vs general grid {:?}",
                    q.grid(),
                    g.grid()
                )));
            }
            layers
                .iter()
                .map(|&layer| {
                    let refined = refine_weights(
                        &q.require(layer, step)?.weights_f64(),
                        &g.require(layer, step)?.weights_f64(),
                        cfg.lambda,
                    )?;
                    Ok(LayerEntropy {
                        layer,
                        entropy: entropy_nats(&normalize(&refined)?),
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    Ok((hs, q.n_tokens()))
}

fn process(id: &str, files: &SampleFiles, cfg: &StudyConfig) -> Result<SampleRecord> {
    let image = ImageRgb::open(files.image.as_deref().expect("checked by caller"))?;
    let c = measure(&image, &cfg.canny, cfg.exclude_achromatic)?;
    let (layer_entropies, n_v) = sample_entropies(files, cfg)?;
    let overall =
        layer_entropies.iter().map(|h| h.entropy).sum::<f64>() / layer_entropies.len() as f64;
    let normalized = if n_v > 1 {
        (overall / (n_v as f64).ln()).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(SampleRecord {
        id: id.to_owned(),
        texture_complexity: c.texture,
        color_complexity: c.color,
        overall_entropy: overall,
        normalized_entropy: normalized,
        layer_entropies,
        correct: None,
    })
}

fn optional_pearson(x: &[f64], y: &[f64], what: &str) -> Option<f64> {
    match pearson_r(x, y) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("no {what} correlation: {e}");
            None
        }
    }
}

fn outcome_stats(records: &[SampleRecord], cfg: &StudyConfig) -> Result<Option<OutcomeStats>> {
    let labelled: Vec<(f64, bool)> = records
        .iter()
        .filter_map(|r| r.correct.map(|c| (r.normalized_entropy, c)))
        .collect();
    if labelled.is_empty() {
        return Ok(None);
    }
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); cfg.n_bins];
    for &(h, c) in &labelled {
        per_bin[bin_index(h, cfg.n_bins)].push(if c { 1.0 } else { 0.0 });
    }
    let width = 1.0 / cfg.n_bins as f64;
    let accuracy_by_entropy = per_bin
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let ci = if v.len() >= 2 {
                Some(confidence_interval(v, cfg.confidence_level)?)
            } else {
                None
            };
            Ok(AccuracyBin {
                center: (k as f64 + 0.5) * width,
                count: v.len(),
                accuracy: (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64),
                half_width: ci.map(|c| c.1),
            })
        })
        .collect::<Result<_>>()?;
    let group = |want: bool| -> Result<Option<MeanCi>> {
        let v: Vec<f64> = labelled
            .iter()
            .filter(|l| l.1 == want)
            .map(|l| l.0)
            .collect();
        if v.len() < 2 {
            return Ok(None);
        }
        let (mean, half_width) = confidence_interval(&v, cfg.confidence_level)?;
        Ok(Some(MeanCi {
            n: v.len(),
            mean,
            half_width,
        }))
    };
    Ok(Some(OutcomeStats {
        labelled: labelled.len(),
        accuracy_by_entropy,
        entropy_correct: group(true)?,
        entropy_incorrect: group(false)?,
    }))
}

/// Builds the report from already-computed records.
pub fn summarize(
    records: Vec<SampleRecord>,
    cfg: &StudyConfig,
    errors: Vec<String>,
) -> Result<StudyReport> {
    cfg.validate()?;
    let h: Vec<f64> = records.iter().map(|r| r.normalized_entropy).collect();
    let tex: Vec<f64> = records.iter().map(|r| r.texture_complexity).collect();
    let col: Vec<f64> = records.iter().map(|r| r.color_complexity).collect();
    let mut binned = Vec::new();
    for (metric, x) in [("texture", &tex), ("color", &col)] {
        for b in bin_mean(x, &h, cfg.n_bins)? {
            binned.push(BinnedRow {
                metric: metric.to_owned(),
                center: b.center,
                mean_entropy: b.mean,
                count: b.count,
            });
        }
    }
    let stats = StudyStats {
        samples: records.len(),
        pearson_texture_entropy: optional_pearson(&tex, &h, "texture/entropy"),
        pearson_color_entropy: optional_pearson(&col, &h, "color/entropy"),
        config: cfg.clone(),
        outcome: outcome_stats(&records, cfg)?,
        errors,
    };
    Ok(StudyReport {
        records,
        binned,
        stats,
    })
}

/// Measures every complete sample in `dir`. Orphan images or dumps and
/// per-sample failures are collected in `stats.errors`; the run continues.
pub fn run_study(dir: &Path, cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let (files, labels_path) = scan(dir)?;
    let mut errors = Vec::new();
    let mut complete = Vec::new();
    for (id, f) in &files {
        match (&f.image, &f.question) {
            (Some(_), Some(_)) => complete.push((id, f)),
            (Some(_), None) => errors.push(format!("{id}: image has no question dump")),
            (None, _) => errors.push(format!("{id}: dump has no image")),
        }
    }
    let results: Vec<Result<SampleRecord>> = complete
        .par_iter()
        .map(|(id, f)| process(id, f, cfg))
        .collect();
    let mut records = Vec::new();
    for ((id, _), r) in complete.iter().zip(results) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => errors.push(format!("{id}: {e}")),
        }
    }
    if let Some(path) = labels_path {
        let labels = read_labels(&path, &mut errors)?;
        for r in &mut records {
            r.correct = labels.get(&r.id).copied();
        }
    }
    if records.is_empty() {
        log::warn!("no usable samples in {}", dir.display());
    }
    for e in &errors {
        log::warn!("{e}");
    }
    summarize(records, cfg, errors)
}

/// Writes `raw.csv`, `binned.csv`, `stats.json`, and `plot.svg` (the plot
/// only when there is at least one sample).
pub fn write_outputs(report: &StudyReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_raw_csv(&report.records, fs::File::create(out_dir.join("raw.csv"))?)?;
    let mut w = csv::Writer::from_path(out_dir.join("binned.csv"))?;
    for row in &report.binned {
        w.serialize(row)?;
    }
    w.flush()?;
    let mut json = serde_json::to_string_pretty(&report.stats)?;
    json.push('\n');
    fs::write(out_dir.join("stats.json"), json)?;
    if !report.records.is_empty() {
        let bins = |metric: &str| -> Vec<Bin> {
            report
                .binned
                .iter()
                .filter(|b| b.metric == metric)
                .map(|b| Bin {
                    center: b.center,
                    mean: b.mean_entropy,
                    count: b.count,
                })
                .collect()
        };
        let (tb, cb) = (bins("texture"), bins("color"));
        let point = |f: fn(&SampleRecord) -> f64| -> Vec<(f64, f64)> {
            report
                .records
                .iter()
                .map(|r| (f(r), r.normalized_entropy))
                .collect()
        };
        let svg = render_svg(
            "Complexity vs attention entropy",
            "complexity",
            "normalized entropy",
            &[
                Series {
                    label: "texture",
                    color: "#1f77b4",
                    points: point(|r| r.texture_complexity),
                    bins: &tb,
                },
                Series {
                    label: "color",
                    color: "#ff7f0e",
                    points: point(|r| r.color_complexity),
                    bins: &cb,
                },
            ],
        );
        fs::write(out_dir.join("plot.svg"), svg)?;
    }
    Ok(())
}
