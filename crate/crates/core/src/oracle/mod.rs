//! Synthetic attention decompositions and numerical checks of the contrast
//! step: a brute-force minimizer, the recovery error bound, regularization
//! and conditioning formulas, and the early-termination cost model.

mod cost;
mod numeric;
mod synth;

pub use cost::{cost_model, CostParams, CostReport, BYTES_PER_ELEMENT};
pub use numeric::{
    condition_bound, entropy_monotonicity_report, monotonicity_violations, objective,
    optimal_lambda, recovery_error_bound, recovery_experiment, solve_numeric, write_recovery_csv,
    ConditionBound, LambdaStats, OptimalLambda, RecoveryRow, GOLDEN_TOLERANCE,
};
pub use synth::{
    synth_decomposition, synth_image, synth_sample, Factors, SemanticFocus, SynthParams,
    SynthSample, Synthesized, SEM_PEAK, VIS_LOG_STD_MAX,
};
