use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Bytes per cached attention weight (f32).
pub const BYTES_PER_ELEMENT: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Fraction of layers run before extraction, `l_end / l_total`.
    pub alpha: f64,
    /// Cache hit rate in [0, 1].
    pub rho: f64,
    pub n_layers: u64,
    pub n_steps: u64,
    pub n_v: u64,
}

impl CostParams {
    pub fn from_alpha(alpha: f64, rho: f64, n_layers: u64, n_steps: u64, n_v: u64) -> Result<Self> {
        let p = Self {
            alpha,
            rho,
            n_layers,
            n_steps,
            n_v,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_layers(
        l_total: u32,
        l_end: u32,
        rho: f64,
        n_layers: u64,
        n_steps: u64,
        n_v: u64,
    ) -> Result<Self> {
        if l_end < 1 || l_end > l_total {
            return Err(Error::param(
                "l_end",
                format!("need 1 <= l_end <= l_total, got {l_end} of {l_total}"),
            ));
        }
        Self::from_alpha(l_end as f64 / l_total as f64, rho, n_layers, n_steps, n_v)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::param(
                "alpha",
                format!("must be in (0, 1], got {}", self.alpha),
            ));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::param(
                "rho",
                format!("must be in [0, 1], got {}", self.rho),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub eta1: f64,
    pub s_cache: f64,
    pub s_combined: f64,
    pub memory_bytes: u64,
}

/// Savings from early termination and attention caching.
pub fn cost_model(p: &CostParams) -> Result<CostReport> {
    p.validate()?;
    let a = p.alpha;
    Ok(CostReport {
        eta1: 2.0 * (1.0 - a) / 3.0,
        s_cache: 3.0 / (1.0 + a),
        s_combined: 3.0 / ((2.0 - p.rho) * a + 1.0),
        memory_bytes: p.n_layers * p.n_steps * p.n_v * BYTES_PER_ELEMENT,
    })
}
