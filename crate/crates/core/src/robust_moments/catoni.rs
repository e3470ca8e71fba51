//! Catoni-type robust estimation of directional fourth moments.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorops::{check_unit, DataMatrix};

/// Narrowest influence function in the Catoni band,
/// `ψ(x) = sign(x) log(1 + |x| + x²/2)`.
pub fn psi(x: f64) -> f64 {
    let a = x.abs();
    (a + 0.5 * a * a).ln_1p().copysign(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CatoniScale {
    /// `α = √(2 log(2/δ) / (n v̂))`, `v̂` the sample variance of the inputs.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatoniConfig {
    pub alpha: CatoniScale,
    pub delta: f64,
    pub max_bisections: usize,
}

impl Default for CatoniConfig {
    fn default() -> Self {
        Self { alpha: CatoniScale::Auto, delta: 0.01, max_bisections: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KurtosisMethod {
    Sample,
    Catoni,
}

/// Estimate of `θᵤ = E(u⊤X)⁴` and the excess kurtosis `θᵤ − 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct KurtosisEstimate {
    pub direction: DVector<f64>,
    pub theta_hat: f64,
    pub kappa_hat: f64,
    pub method: KurtosisMethod,
}

impl KurtosisEstimate {
    fn new(direction: DVector<f64>, theta_hat: f64, method: KurtosisMethod) -> Self {
        Self { direction, theta_hat, kappa_hat: theta_hat - 3.0, method }
    }
}

fn resolve_alpha(values: &[f64], cfg: &CatoniConfig) -> Result<f64> {
    match cfg.alpha {
        CatoniScale::Fixed(a) if a > 0.0 && a.is_finite() => Ok(a),
        CatoniScale::Fixed(a) => Err(Error::InvalidInput(format!("alpha must be positive, got {a}"))),
        CatoniScale::Auto => {
            if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
                return Err(Error::InvalidInput(format!("delta must lie in (0,1), got {}", cfg.delta)));
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = if values.len() > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let var = var.max(1e-12);
            Ok((2.0 * (2.0 / cfg.delta).ln() / (n * var)).sqrt())
        }
    }
}

/// Root of `Σ ψ(α(vᵢ − θ)) = 0` by bisection on `[min v, max v]`.
pub fn catoni_mean(values: &[f64], cfg: &CatoniConfig) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("no values".into()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: i, col: 0 });
    }
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo == hi {
        return Ok(lo);
    }
    let alpha = resolve_alpha(values, cfg)?;
    let objective = |theta: f64| values.iter().map(|v| psi(alpha * (v - theta))).sum::<f64>();

    // Non-increasing in θ: non-negative at the bottom of the bracket,
    // non-positive at the top.
    let (f_lo, f_hi) = (objective(lo), objective(hi));
    if f_lo < 0.0 || f_hi > 0.0 {
        return Err(Error::InvalidInput(format!(
            "no sign change across the bracket: f({lo}) = {f_lo}, f({hi}) = {f_hi}"
        )));
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    for _ in 0..cfg.max_bisections {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-10 * (1.0 + mid.abs()) {
            return Ok(mid);
        }
        let f = objective(mid);
        if f == 0.0 {
            return Ok(mid);
        } else if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    if hi - lo <= 1e-10 * (1.0 + mid.abs()) {
        return Ok(mid);
    }
    Err(Error::NoConvergence { iterations: cfg.max_bisections, width: hi - lo })
}

fn fourth_powers(data: &DataMatrix, u: &DVector<f64>) -> Result<Vec<f64>> {
    check_unit(u, data.d())?;
    Ok(data.project(u)?.iter().map(|p| p.powi(4)).collect())
}

/// Catoni estimate of `E(u⊤X)⁴`.
pub fn catoni_theta(data: &DataMatrix, u: &DVector<f64>, cfg: &CatoniConfig) -> Result<KurtosisEstimate> {
    let values = fourth_powers(data, u)?;
    let theta = catoni_mean(&values, cfg)?;
    Ok(KurtosisEstimate::new(u.clone(), theta, KurtosisMethod::Catoni))
}

/// Plain empirical `(1/n) Σ (u⊤Xᵢ)⁴`.
pub fn sample_kurtosis(data: &DataMatrix, u: &DVector<f64>) -> Result<KurtosisEstimate> {
    let values = fourth_powers(data, u)?;
    let theta = values.iter().sum::<f64>() / values.len() as f64;
    Ok(KurtosisEstimate::new(u.clone(), theta, KurtosisMethod::Sample))
}
