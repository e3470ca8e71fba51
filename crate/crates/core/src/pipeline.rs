//! Whitening, fitting and mapping back to the observation scale in one call.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fastica::{fit, FastIcaConfig, MixingEstimate};
use crate::tensorops::DataMatrix;
use crate::whiten::{unwhiten_columns, whiten, WhitenPlan, WhitenResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PipelineConfig {
    pub whiten: WhitenPlan,
    pub fastica: FastIcaConfig,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Columns on the observation scale, `Σ̂^{1/2} âⱼ`.
    pub estimate: MixingEstimate,
    /// Orthonormal estimate in whitened coordinates.
    pub whitened_estimate: MixingEstimate,
    pub whitening: WhitenResult,
}

impl PipelineOutput {
    /// Rows that fed the fixed-point iterations.
    pub fn n_fit(&self) -> usize {
        self.whitening.fitting_rows.len()
    }

    /// `Σ̂^{1/2} Â` with each column rescaled to unit norm.
    pub fn unit_columns(&self) -> DMatrix<f64> {
        let mut a = self.estimate.a_hat.clone();
        for mut c in a.column_iter_mut() {
            let norm = c.norm();
            if norm > 0.0 {
                c /= norm;
            }
        }
        a
    }
}

pub fn run_pipeline(data: &DataMatrix, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let whitening = whiten(data, &cfg.whiten)?;
    let whitened_estimate = fit(&whitening.whitened, &cfg.fastica)?;
    let estimate = unwhiten_columns(&whitened_estimate, &whitening)?;
    Ok(PipelineOutput { estimate, whitened_estimate, whitening })
}
