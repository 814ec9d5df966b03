use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::attention::{AttentionMap, AttentionStack, PromptKind, StackInfo};
use crate::imaging::ImageRgb;
use crate::{Error, Result, GENERAL_INSTRUCTION};

/// Log-standard-deviation of the visual factor at zero roughness. Rougher
/// images spread attention more evenly, so the log-spread shrinks linearly
/// to zero as roughness goes to 1.
pub const VIS_LOG_STD_MAX: f64 = 1.5;

/// Semantic peak height above the unit baseline at full concentration.
pub const SEM_PEAK: f64 = 9.0;

/// Where the question-specific signal sits on the token grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SemanticFocus {
    /// Gaussian bump centered at a token coordinate, width in tokens.
    Bump { row: f64, col: f64, width: f64 },
    /// Constant lift over an inclusive token rectangle.
    Block {
        top: usize,
        left: usize,
        bottom: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub grid_h: usize,
    pub grid_w: usize,
    /// In [0, 1]; higher means flatter visual attention.
    pub vis_roughness: f64,
    /// In [0, 1]; 0 makes the semantic factor constant.
    pub sem_concentration: f64,
    /// Bound on the general-prompt perturbation, in [0, 1).
    pub delta: f64,
    /// `None` places a bump at a seed-dependent position.
    pub focus: Option<SemanticFocus>,
    pub layers: Vec<u32>,
    pub steps: Vec<u32>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 0,
            grid_h: 16,
            grid_w: 16,
            vis_roughness: 0.5,
            sem_concentration: 1.0,
            delta: 0.05,
            focus: None,
            layers: (20..=25).collect(),
            steps: (0..4).collect(),
        }
    }
}

/// Ground-truth factors behind a synthetic attention pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Factors {
    pub grid_h: usize,
    pub grid_w: usize,
    pub f_vis: Vec<f64>,
    pub f_sem: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub delta: f64,
}

impl Factors {
    pub fn n_v(&self) -> usize {
        self.f_vis.len()
    }

    /// `F_vis * F_sem`, unnormalized.
    pub fn raw_question(&self) -> Vec<f64> {
        self.f_vis
            .iter()
            .zip(&self.f_sem)
            .map(|(v, s)| v * s)
            .collect()
    }

    /// `F_vis * (1 + eps)`, unnormalized.
    pub fn raw_general(&self) -> Vec<f64> {
        self.f_vis
            .iter()
            .zip(&self.epsilon)
            .map(|(v, e)| v * (1.0 + e))
            .collect()
    }

    pub fn f_sem_max(&self) -> f64 {
        self.f_sem.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn f_vis_min(&self) -> f64 {
        self.f_vis.iter().copied().fold(f64::MAX, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct Synthesized {
    pub question: AttentionStack,
    pub general: AttentionStack,
    pub factors: Factors,
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param(name, format!("must be in [0, 1], got {v}")));
    }
    Ok(())
}

/// Draws a visual factor, a semantic factor and a general-prompt
/// perturbation, and composes the question and general attention stacks.
/// Every `(layer, step)` map of a stack is the same normalized field.
pub fn synth_decomposition(params: &SynthParams) -> Result<Synthesized> {
    check_unit("vis_roughness", params.vis_roughness)?;
    check_unit("sem_concentration", params.sem_concentration)?;
    if !(0.0..1.0).contains(&params.delta) {
        return Err(Error::param(
            "delta",
            format!("must be in [0, 1), got {}", params.delta),
        ));
    }
    let (gh, gw) = (params.grid_h, params.grid_w);
    let n = gh * gw;
    if n == 0 {
        return Err(Error::param("grid", "token grid must be non-empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let log_std = VIS_LOG_STD_MAX * (1.0 - params.vis_roughness);
    let f_vis: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (log_std * z).exp()
        })
        .collect();
    let epsilon: Vec<f64> = if params.delta > 0.0 {
        let u = Uniform::new_inclusive(-params.delta, params.delta).expect("valid bounds");
        (0..n).map(|_| u.sample(&mut rng)).collect()
    } else {
        vec![0.0; n]
    };
    let focus = params.focus.unwrap_or_else(|| SemanticFocus::Bump {
        row: rng.random_range(0.0..gh as f64),
        col: rng.random_range(0.0..gw as f64),
        width: (gh.max(gw) as f64 / 6.0).max(0.5),
    });
    let lift = SEM_PEAK * params.sem_concentration;
    let f_sem: Vec<f64> = (0..n)
        .map(|i| {
            let (r, c) = (i / gw, i % gw);
            let shape = match focus {
                SemanticFocus::Bump { row, col, width } => {
                    let d2 = (r as f64 + 0.5 - row).powi(2) + (c as f64 + 0.5 - col).powi(2);
                    (-d2 / (2.0 * width * width)).exp()
                }
                SemanticFocus::Block {
                    top,
                    left,
                    bottom,
                    right,
                } => {
                    if (top..=bottom).contains(&r) && (left..=right).contains(&c) {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            1.0 + lift * shape
        })
        .collect();

    let factors = Factors {
        grid_h: gh,
        grid_w: gw,
        f_vis,
        f_sem,
        epsilon,
        delta: params.delta,
    };
    let build = |kind: PromptKind, raw: Vec<f64>, prompt: &str| {
        let info = StackInfo {
            model_id: "synthetic".into(),
            prompt_text: prompt.into(),
            generated_tokens: params.steps.iter().map(|t| format!("tok{t}")).collect(),
            head_aggregation: Some("mean".into()),
        };
        let template = AttentionMap::from_weights(0, 0, gh, gw, &raw)?;
        AttentionStack::from_fn(
            info,
            kind,
            (gh, gw),
            params.layers.clone(),
            params.steps.clone(),
            |l, t| {
                Ok(AttentionMap::new(
                    l,
                    t,
                    gh,
                    gw,
                    template.weights().to_vec(),
                )?)
            },
        )
    };
    Ok(Synthesized {
        question: build(
            PromptKind::Question,
            factors.raw_question(),
            "synthetic question",
        )?,
        general: build(
            PromptKind::General,
            factors.raw_general(),
            GENERAL_INSTRUCTION,
        )?,
        factors,
    })
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|u| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

/// Mosaic of random colored cells, dark and bright in a checkerboard so
/// every cell boundary is a luminance step. Roughness sets both the number
/// of cells per side (1 to 16) and the spread of hues around a base hue.
pub fn synth_image(seed: u64, roughness: f64, height: usize, width: usize) -> Result<ImageRgb> {
    check_unit("roughness", roughness)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a6e);
    let cells = 1 + (roughness * 15.0).round() as usize;
    let base: f64 = rng.random_range(0.0..360.0);
    let spread = 360.0 * roughness;
    let colors: Vec<[u8; 3]> = (0..cells * cells)
        .map(|i| {
            let h = base + spread * (rng.random::<f64>() - 0.5);
            // dark cells stay under ~51 gray, light cells over ~138 for any hue
            if (i / cells + i % cells).is_multiple_of(2) {
                hsv_to_rgb(h, rng.random_range(0.6..1.0), rng.random_range(0.1..0.2))
            } else {
                hsv_to_rgb(h, rng.random_range(0.25..0.45), rng.random_range(0.9..1.0))
            }
        })
        .collect();
    ImageRgb::from_fn(height, width, |y, x| {
        colors[(y * cells / height) * cells + x * cells / width]
    })
}

/// A complete synthetic sample: image plus question and general stacks whose
/// visual factor shares the image's roughness.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub image: ImageRgb,
    pub data: Synthesized,
}

pub fn synth_sample(params: &SynthParams, height: usize, width: usize) -> Result<SynthSample> {
    Ok(SynthSample {
        image: synth_image(params.seed, params.vis_roughness, height, width)?,
        data: synth_decomposition(params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stacks() {
        let p = SynthParams::default();
        let a = synth_decomposition(&p).unwrap();
        let b = synth_decomposition(&p).unwrap();
        assert_eq!(a.question, b.question);
        assert_eq!(a.general, b.general);
        assert_eq!(a.factors, b.factors);
    }

    #[test]
    fn zero_concentration_makes_question_proportional_to_general() {
        let p = SynthParams {
            sem_concentration: 0.0,
            delta: 0.0,
            ..SynthParams::default()
        };
        let s = synth_decomposition(&p).unwrap();
        assert!(s.factors.f_sem.iter().all(|&v| v == 1.0));
        assert_eq!(
            s.question.maps()[0].weights(),
            s.general.maps()[0].weights()
        );
    }

    #[test]
    fn rougher_visual_factor_spreads_general_attention() {
        let at = |r: f64| {
            let p = SynthParams {
                vis_roughness: r,
                seed: 11,
                ..SynthParams::default()
            };
            synth_decomposition(&p).unwrap().general.maps()[0].entropy()
        };
        assert!(at(0.8) > at(0.1));
    }

    #[test]
    fn perturbation_respects_delta() {
        let p = SynthParams {
            delta: 0.07,
            ..SynthParams::default()
        };
        let s = synth_decomposition(&p).unwrap();
        assert!(s.factors.epsilon.iter().all(|e| e.abs() <= 0.07));
        assert!(s.factors.f_vis.iter().all(|&v| v > 0.0));
        assert!(synth_decomposition(&SynthParams { delta: 1.0, ..p }).is_err());
    }

    #[test]
    fn block_focus_lifts_only_the_block() {
        let p = SynthParams {
            grid_h: 4,
            grid_w: 4,
            focus: Some(SemanticFocus::Block {
                top: 1,
                left: 1,
                bottom: 2,
                right: 2,
            }),
            ..SynthParams::default()
        };
        let s = synth_decomposition(&p).unwrap();
        for i in 0..16 {
            let inside = (1..=2).contains(&(i / 4)) && (1..=2).contains(&(i % 4));
            assert_eq!(
                s.factors.f_sem[i],
                if inside { 1.0 + SEM_PEAK } else { 1.0 }
            );
        }
    }

    #[test]
    fn smooth_image_is_flat() {
        let img = synth_image(3, 0.0, 20, 30).unwrap();
        assert!(img.pixels().iter().all(|&p| p == img.pixels()[0]));
        let rough = synth_image(3, 1.0, 32, 32).unwrap();
        assert!(rough.pixels().iter().any(|&p| p != rough.pixels()[0]));
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), [0, 0, 255]);
    }
}
