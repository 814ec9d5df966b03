mod args;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use carve_core::attention::{layer_entropies, read_dump_file, write_dump_file, AttentionStack};
use carve_core::contrast::fused_saliency;
use carve_core::imaging::{measure, Complexity, ImageRgb};
use carve_core::maskgen::{carve_pipeline, progressive_mask, saliency_for, CarveConfig};
use carve_core::oracle::{
    cost_model, entropy_monotonicity_report, recovery_experiment, synth_sample, write_recovery_csv,
    CostParams, SemanticFocus, SynthParams,
};
use carve_core::study::{run_study, write_outputs, StudyConfig};
use clap::Parser;
use serde_json::json;

use args::{Cli, Command};

const EXIT_VALIDATION: u8 = 2;
const EXIT_PARSE: u8 = 3;

/// Bad flag combination detected by the front end itself.
#[derive(Debug)]
struct InvalidArgs(String);

impl fmt::Display for InvalidArgs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidArgs {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InvalidArgs>() {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<carve_core::Error>() {
            return if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_PARSE
            };
        }
    }
    EXIT_PARSE
}

fn print_text(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    print_text(&(serde_json::to_string_pretty(value)? + "\n"))
}

fn load_stack(path: &Path) -> Result<AttentionStack> {
    let parsed = read_dump_file(path).with_context(|| format!("reading {}", path.display()))?;
    for w in &parsed.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(parsed.stack)
}

fn load_image(path: &Path) -> Result<ImageRgb> {
    ImageRgb::open(path).with_context(|| format!("reading {}", path.display()))
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn cmd_carve(a: &args::CarveArgs) -> Result<()> {
    let cfg = a.config();
    cfg.validate()?;
    let image = load_image(&a.inputs.image)?;
    let q = load_stack(&a.inputs.q_dump)?;
    let g = load_stack(&a.inputs.g_dump)?;
    let out = carve_pipeline(&image, &q, &g, &cfg)?;
    out.image
        .save_png(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    let diag_path = a
        .diagnostics
        .clone()
        .unwrap_or_else(|| a.out.with_extension("json"));
    let mut diag = serde_json::to_string_pretty(&out.diagnostics)?;
    diag.push('\n');
    fs::write(&diag_path, &diag).with_context(|| format!("writing {}", diag_path.display()))?;
    if out.diagnostics.fallback {
        log::warn!("mask was empty; wrote the original image");
    }
    print_text(&diag)
}

fn cmd_complexity(a: &args::ComplexityArgs) -> Result<()> {
    let params = a.canny.params();
    params.validate()?;
    let image = load_image(&a.image)?;
    let c = measure(&image, &params, a.canny.exclude_achromatic)?;
    let rounded = Complexity {
        texture: round6(c.texture),
        color: round6(c.color),
    };
    print_text(&(serde_json::to_string(&rounded)? + "\n"))
}

fn cmd_entropy(a: &args::EntropyArgs) -> Result<()> {
    let stack = load_stack(&a.dump)?;
    let step = a.step.unwrap_or_else(|| stack.t_end());
    let hs = layer_entropies(&stack, &a.layers.layers(), step)?;
    let overall = hs.iter().map(|h| h.entropy).sum::<f64>() / hs.len() as f64;
    let n_v = stack.n_tokens();
    print_json(&json!({
        "step": step,
        "n_tokens": n_v,
        "layers": hs,
        "overall": overall,
        "normalized": if n_v > 1 { overall / (n_v as f64).ln() } else { 0.0 },
        "monotonicity_violations": entropy_monotonicity_report(&stack, step)?,
    }))
}

fn cmd_contrast(a: &args::ContrastCmdArgs) -> Result<()> {
    let q = load_stack(&a.q_dump)?;
    let g = load_stack(&a.g_dump)?;
    let (gh, gw) = q.grid();
    let (h, w) = (a.height.unwrap_or(gh), a.width.unwrap_or(gw));
    let cfg = carve_core::contrast::ContrastConfig::new(a.contrast.lambda)?;
    let s = fused_saliency(
        &q,
        &g,
        a.contrast.layers,
        a.contrast.steps,
        &cfg,
        h,
        w,
        a.contrast.reshape,
    )?;
    let v = s.values();
    let max = v.iter().copied().fold(f64::MIN, f64::max);
    let min = v.iter().copied().fold(f64::MAX, f64::min);
    let argmax = v.iter().position(|&x| x == max).unwrap_or(0);
    if let Some(path) = &a.out {
        let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
        let img = ImageRgb::from_fn(h, w, |y, x| {
            [(s.get(y, x) * scale).round().clamp(0.0, 255.0) as u8; 3]
        })?;
        img.save_png(path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    print_json(&json!({
        "height": h,
        "width": w,
        "min": min,
        "max": max,
        "sum": v.iter().sum::<f64>(),
        "argmax": { "y": argmax / w, "x": argmax % w },
    }))
}

fn cmd_study(a: &args::StudyArgs) -> Result<()> {
    let cfg = StudyConfig {
        layers: a.layers,
        step: a.step,
        n_bins: a.bins,
        canny: a.canny.params(),
        exclude_achromatic: a.canny.exclude_achromatic,
        entropy_source: a.entropy_source,
        lambda: a.lambda,
        confidence_level: a.level,
    };
    cfg.validate()?;
    let report =
        run_study(&a.dir, &cfg).with_context(|| format!("scanning {}", a.dir.display()))?;
    write_outputs(&report, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    print_json(&report.stats)
}

fn seed_from_env(flag: u64) -> Result<u64> {
    match std::env::var("CARVE_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| {
            InvalidArgs(format!("CARVE_SEED must be an unsigned integer, got {v:?}")).into()
        }),
        Err(_) => Ok(flag),
    }
}

fn cmd_synth(a: &args::SynthArgs) -> Result<()> {
    let seed = seed_from_env(a.seed)?;
    if a.count == 0 {
        return Err(InvalidArgs("--count must be >= 1".into()).into());
    }
    if a.steps == 0 {
        return Err(InvalidArgs("--steps must be >= 1".into()).into());
    }
    if let Some([_, _, b, r]) = a.block {
        if b >= a.grid || r >= a.grid {
            return Err(InvalidArgs(format!("--block exceeds the {0}x{0} grid", a.grid)).into());
        }
    }
    let base = SynthParams {
        seed,
        grid_h: a.grid,
        grid_w: a.grid,
        vis_roughness: a.roughness.unwrap_or(0.5),
        sem_concentration: a.concentration,
        delta: a.delta,
        focus: a
            .block
            .map(|[top, left, bottom, right]| SemanticFocus::Block {
                top,
                left,
                bottom,
                right,
            }),
        layers: a.layers.layers(),
        steps: (0..a.steps).collect(),
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut written = Vec::new();
    for i in 0..a.count {
        let roughness = match (a.roughness, a.count) {
            (Some(r), _) => r,
            (None, 1) => 0.5,
            (None, n) => i as f64 / (n - 1) as f64,
        };
        let p = SynthParams {
            seed: seed + i,
            vis_roughness: roughness,
            ..base.clone()
        };
        let sample = synth_sample(&p, a.size, a.size)?;
        let id = format!("synth_{i:03}");
        let path = |suffix: &str| -> PathBuf { a.out.join(format!("{id}{suffix}")) };
        sample.image.save_png(path(".png"))?;
        write_dump_file(path(".q.catt"), &sample.data.question)?;
        write_dump_file(path(".g.catt"), &sample.data.general)?;
        written.push(json!({ "id": id, "seed": p.seed, "roughness": roughness }));
    }
    if let Some(csv_path) = &a.recovery_csv {
        let rows = recovery_experiment(&base, seed..seed + a.count, 1e-3)?;
        let file = fs::File::create(csv_path)
            .with_context(|| format!("writing {}", csv_path.display()))?;
        write_recovery_csv(&rows, file)?;
    }
    print_json(&json!({ "samples": written }))
}

fn cmd_cost(a: &args::CostArgs) -> Result<()> {
    let params = match a.alpha {
        Some(alpha) => CostParams::from_alpha(alpha, a.rho, a.n_layers, a.n_steps, a.n_v)?,
        None => CostParams::from_layers(a.l_total, a.l_end, a.rho, a.n_layers, a.n_steps, a.n_v)?,
    };
    let r = cost_model(&params)?;
    print_json(&json!({
        "alpha": params.alpha,
        "rho": params.rho,
        "eta1": r.eta1,
        "s_cache": r.s_cache,
        "s_combined": r.s_combined,
        "memory_bytes": r.memory_bytes,
    }))
}

fn cmd_progressive(a: &args::ProgressiveArgs) -> Result<()> {
    if let Some(r) = a.ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(InvalidArgs(format!("ratio {r} is outside [0, 1]")).into());
    }
    let cfg = CarveConfig {
        lambda: a.contrast.lambda,
        layers: a.contrast.layers,
        steps: a.contrast.steps,
        reshape: a.contrast.reshape,
        ..CarveConfig::default()
    };
    cfg.validate()?;
    let image = load_image(&a.inputs.image)?;
    let q = load_stack(&a.inputs.q_dump)?;
    let g = load_stack(&a.inputs.g_dump)?;
    let s = saliency_for(&image, &q, &g, &cfg)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut written = Vec::new();
    for &ratio in &a.ratios {
        let masked = progressive_mask(&image, &s, ratio, a.fill)?;
        let path = a.out.join(format!("mask_{ratio:.3}.png"));
        masked.save_png(&path)?;
        written.push(json!({ "ratio": ratio, "path": path }));
    }
    print_json(&json!({ "outputs": written }))
}

/// The error chain joined with ": ", skipping causes whose text the
/// previous message already contains.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if parts.last().is_some_and(|prev| prev.contains(&msg)) {
            continue;
        }
        parts.push(msg);
    }
    parts.join(": ")
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Carve(a) => cmd_carve(a),
        Command::Complexity(a) => cmd_complexity(a),
        Command::Entropy(a) => cmd_entropy(a),
        Command::Contrast(a) => cmd_contrast(a),
        Command::Study(a) => cmd_study(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Cost(a) => cmd_cost(a),
        Command::Progressive(a) => cmd_progressive(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
