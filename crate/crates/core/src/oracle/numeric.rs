use std::io::Write;

use serde::{Deserialize, Serialize};

use super::synth::{synth_decomposition, SynthParams};
use crate::attention::{layer_entropies, AttentionStack, LayerEntropy};
use crate::contrast::refine_weights;
use crate::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section stopping width.
pub const GOLDEN_TOLERANCE: f64 = 1e-9;

/// The regularized reconstruction objective
/// `J(x) = sum (x_i g_i - q_i)^2 + lambda sum x_i^2 g_i`.
pub fn objective(x: &[f64], q: &[f64], g: &[f64], lambda: f64) -> f64 {
    x.iter()
        .zip(q)
        .zip(g)
        .map(|((x, q), g)| (x * g - q).powi(2) + lambda * x * x * g)
        .sum()
}

/// `j(a) - j(b)` for one coordinate, factored so that the comparison keeps
/// full relative precision near the optimum where `j` is flat.
fn coordinate_delta(a: f64, b: f64, q: f64, g: f64, lambda: f64) -> f64 {
    (a - b) * ((a + b) * g * (g + lambda) - 2.0 * g * q)
}

fn minimize_coordinate(q: f64, g: f64, lambda: f64) -> f64 {
    if g == 0.0 {
        // objective is the constant q^2; take the minimum-norm point
        return 0.0;
    }
    let less = |a: f64, b: f64| coordinate_delta(a, b, q, g, lambda) < 0.0;
    // q, g >= 0 puts the minimizer in [0, inf); grow until j rises again
    let mut hi = 1.0;
    for _ in 0..1100 {
        if less(hi / 2.0, hi) {
            break;
        }
        hi *= 2.0;
    }
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    while b - a > GOLDEN_TOLERANCE {
        if !less(d, c) {
            b = d;
            d = c;
            c = b - INV_PHI * (b - a);
        } else {
            a = c;
            c = d;
            d = a + INV_PHI * (b - a);
        }
    }
    0.5 * (a + b)
}

/// Minimizes [`objective`] coordinate by coordinate with golden-section
/// search. Independent of the closed-form refinement.
pub fn solve_numeric(q: &[f64], g: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if q.len() != g.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} question weights vs {} general weights",
            q.len(),
            g.len()
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", format!("must be > 0, got {lambda}")));
    }
    if q.iter().chain(g).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::param("attention", "weights must be finite and >= 0"));
    }
    Ok(q.iter()
        .zip(g)
        .map(|(&q, &g)| minimize_coordinate(q, g, lambda))
        .collect())
}

/// `delta * max|F_sem| / (1 - delta)`.
pub fn recovery_error_bound(delta: f64, f_sem_max: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::param(
            "delta",
            format!("must be in [0, 1), got {delta}"),
        ));
    }
    Ok(delta * f_sem_max / (1.0 - delta))
}

/// Mean and variance of the visual factor at one token.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaStats {
    pub mu: f64,
    pub sigma2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalLambda {
    pub exact: f64,
    pub approx: f64,
}

/// MSE-optimal regularization: `mu (sqrt(1 + 2 sigma^2 / mu^2) - 1)` and its
/// small-noise approximation `sigma^2 / mu`.
pub fn optimal_lambda(stats: LambdaStats) -> Result<OptimalLambda> {
    if stats.mu.is_nan() || stats.mu <= 0.0 {
        return Err(Error::param("mu", format!("must be > 0, got {}", stats.mu)));
    }
    if stats.sigma2.is_nan() || stats.sigma2 < 0.0 {
        return Err(Error::param(
            "sigma2",
            format!("must be >= 0, got {}", stats.sigma2),
        ));
    }
    let LambdaStats { mu, sigma2 } = stats;
    Ok(OptimalLambda {
        exact: mu * ((1.0 + 2.0 * sigma2 / (mu * mu)).sqrt() - 1.0),
        approx: sigma2 / mu,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionBound {
    /// `(max g + lambda) / (min g + lambda)`
    pub exact: f64,
    /// `(max g + lambda) / lambda`
    pub bound: f64,
}

pub fn condition_bound(g: &[f64], lambda: f64) -> Result<ConditionBound> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", format!("must be > 0, got {lambda}")));
    }
    if g.is_empty() || g.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::param(
            "attention",
            "need non-empty, finite, non-negative weights",
        ));
    }
    let max = g.iter().copied().fold(f64::MIN, f64::max);
    let min = g.iter().copied().fold(f64::MAX, f64::min);
    let out = ConditionBound {
        exact: (max + lambda) / (min + lambda),
        bound: (max + lambda) / lambda,
    };
    debug_assert!(out.exact <= out.bound);
    Ok(out)
}

/// Adjacent layer pairs whose entropy increases by more than 1e-9.
pub fn monotonicity_violations(entropies: &[LayerEntropy]) -> Vec<(u32, u32)> {
    entropies
        .windows(2)
        .filter(|w| w[1].entropy > w[0].entropy + 1e-9)
        .map(|w| (w[0].layer, w[1].layer))
        .collect()
}

/// Checks the layer-wise entropy decrease at `step` over all layers of the
/// stack. Diagnostic only.
pub fn entropy_monotonicity_report(stack: &AttentionStack, step: u32) -> Result<Vec<(u32, u32)>> {
    Ok(monotonicity_violations(&layer_entropies(
        stack,
        stack.layers(),
        step,
    )?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub seed: u64,
    pub delta: f64,
    pub lambda: f64,
    pub observed_error: f64,
    pub bound: f64,
}

/// Recovers the semantic factor from raw synthetic factors with
/// `lambda = lambda_scale * min F_vis` and records the sup-norm error.
pub fn recovery_experiment(
    base: &SynthParams,
    seeds: impl IntoIterator<Item = u64>,
    lambda_scale: f64,
) -> Result<Vec<RecoveryRow>> {
    seeds
        .into_iter()
        .map(|seed| {
            let p = SynthParams {
                seed,
                ..base.clone()
            };
            let factors = synth_decomposition(&p)?.factors;
            let lambda = lambda_scale * factors.f_vis_min();
            let est = refine_weights(&factors.raw_question(), &factors.raw_general(), lambda)?;
            let observed_error = est
                .iter()
                .zip(&factors.f_sem)
                .map(|(a, s)| (a - s).abs())
                .fold(0.0, f64::max);
            Ok(RecoveryRow {
                seed,
                delta: p.delta,
                lambda,
                observed_error,
                bound: recovery_error_bound(p.delta, factors.f_sem_max())?,
            })
        })
        .collect()
}

pub fn write_recovery_csv<W: Write>(rows: &[RecoveryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_matches_hand_solution() {
        let x = solve_numeric(&[0.2], &[0.1], 0.05).unwrap();
        assert!((x[0] - 0.2 / 0.15).abs() < 1e-8);
    }

    #[test]
    fn zero_general_gives_zero() {
        assert_eq!(solve_numeric(&[0.3], &[0.0], 0.1).unwrap(), vec![0.0]);
    }

    #[test]
    fn heavy_regularization_drives_to_zero() {
        let x = solve_numeric(&[0.4], &[0.01], 1e4).unwrap();
        assert!(x[0] < 1e-4);
        assert!((x[0] - 0.4 / 1e4).abs() < 1e-8);
    }

    #[test]
    fn bound_examples() {
        assert_eq!(recovery_error_bound(0.0, 3.0).unwrap(), 0.0);
        assert!((recovery_error_bound(0.05, 2.0).unwrap() - 0.105263).abs() < 1e-6);
        assert!(recovery_error_bound(1.0, 2.0).is_err());
    }

    #[test]
    fn optimal_lambda_examples() {
        let z = optimal_lambda(LambdaStats {
            mu: 2.0,
            sigma2: 0.0,
        })
        .unwrap();
        assert_eq!((z.exact, z.approx), (0.0, 0.0));
        let o = optimal_lambda(LambdaStats {
            mu: 1.0,
            sigma2: 0.5,
        })
        .unwrap();
        assert!((o.exact - (2f64.sqrt() - 1.0)).abs() < 1e-12);
        let small = optimal_lambda(LambdaStats {
            mu: 3.0,
            sigma2: 0.09,
        })
        .unwrap();
        assert!((small.exact - small.approx).abs() / small.approx < 0.01);
        assert!(optimal_lambda(LambdaStats {
            mu: 0.0,
            sigma2: 1.0
        })
        .is_err());
    }

    #[test]
    fn condition_examples() {
        let c = condition_bound(&[0.9, 0.0, 0.5], 0.1).unwrap();
        assert!((c.exact - 10.0).abs() < 1e-12);
        assert!((c.bound - 10.0).abs() < 1e-12);
        let big = condition_bound(&[0.9, 0.1], 1e9).unwrap();
        assert!((big.exact - 1.0).abs() < 1e-8 && (big.bound - 1.0).abs() < 1e-8);
        assert!(condition_bound(&[0.5], 0.0).is_err());
    }

    #[test]
    fn monotonicity_examples() {
        let e = |v: &[f64]| -> Vec<LayerEntropy> {
            v.iter()
                .enumerate()
                .map(|(i, &h)| LayerEntropy {
                    layer: i as u32,
                    entropy: h,
                })
                .collect()
        };
        assert!(monotonicity_violations(&e(&[3.0, 2.0, 1.0])).is_empty());
        assert_eq!(monotonicity_violations(&e(&[1.0, 2.0])), vec![(0, 1)]);
        assert!(monotonicity_violations(&e(&[1.0])).is_empty());
    }

    #[test]
    fn recovery_csv_has_header_and_rows() {
        let rows = recovery_experiment(&SynthParams::default(), 0..3, 1e-3).unwrap();
        let mut buf = Vec::new();
        write_recovery_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("seed,delta,lambda,observed_error,bound"));
        assert_eq!(lines.count(), 3);
    }
}
