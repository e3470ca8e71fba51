//! Prewhitening, by default with sample splitting: the covariance is
//! estimated on the first part of the rows and applied to the rest.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fastica::MixingEstimate;
use crate::tensorops::DataMatrix;

/// Eigenvalues below `EIG_FLOOR · λ_max` are treated as singular.
pub const EIG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhitenMode {
    /// Covariance from the first `⌈split_fraction · n⌉` rows, applied to the
    /// remaining rows.
    Split,
    /// Known covariance; the data are used as they are, without centering.
    Known(DMatrix<f64>),
    None,
    /// Covariance from all rows, applied to all rows.
    InSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitenPlan {
    pub mode: WhitenMode,
    pub split_fraction: f64,
}

impl WhitenPlan {
    pub fn new(mode: WhitenMode) -> Self {
        Self { mode, split_fraction: 0.5 }
    }
}

impl Default for WhitenPlan {
    fn default() -> Self {
        Self::new(WhitenMode::Split)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhitenResult {
    pub whitened: DataMatrix,
    pub sigma_half: DMatrix<f64>,
    pub sigma_inv_half: DMatrix<f64>,
    /// Subtracted before whitening, when the mode centers.
    pub mean: Option<DVector<f64>>,
    pub covariance_rows: Range<usize>,
    pub fitting_rows: Range<usize>,
}

/// `(Σ^{1/2}, Σ^{−1/2})` of a symmetric positive definite matrix.
pub fn sqrt_pair(sigma: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !sigma.is_square() {
        return Err(Error::DimensionMismatch { expected: sigma.nrows(), got: sigma.ncols() });
    }
    let scale = sigma.amax().max(f64::MIN_POSITIVE);
    if (sigma - sigma.transpose()).amax() > 1e-10 * scale {
        return Err(Error::InvalidInput("covariance matrix is not symmetric".into()));
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lambda_max = eig.eigenvalues.max();
    let floor = EIG_FLOOR * lambda_max;
    for (index, &value) in eig.eigenvalues.iter().enumerate() {
        if !(value >= floor) || !(lambda_max > 0.0) {
            return Err(Error::SingularCovariance { index, value, floor });
        }
    }
    let q = &eig.eigenvectors;
    let root = q * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * q.transpose();
    let inv_root = q * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * q.transpose();
    Ok(((&root + root.transpose()) * 0.5, (&inv_root + inv_root.transpose()) * 0.5))
}

fn mean_and_covariance(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.tr_mul(&centered) / x.nrows() as f64;
    (mean, cov)
}

fn apply(x: &DMatrix<f64>, mean: Option<&DVector<f64>>, inv_half: &DMatrix<f64>) -> Result<DataMatrix> {
    let mut out = x.clone();
    if let Some(m) = mean {
        for mut row in out.row_iter_mut() {
            row -= m.transpose();
        }
    }
    DataMatrix::new(out * inv_half)
}

pub fn whiten(data: &DataMatrix, plan: &WhitenPlan) -> Result<WhitenResult> {
    let (n, d) = (data.n(), data.d());
    let x = data.values();
    match &plan.mode {
        WhitenMode::None => Ok(WhitenResult {
            whitened: data.clone(),
            sigma_half: DMatrix::identity(d, d),
            sigma_inv_half: DMatrix::identity(d, d),
            mean: None,
            covariance_rows: 0..0,
            fitting_rows: 0..n,
        }),
        WhitenMode::Known(sigma) => {
            if sigma.nrows() != d {
                return Err(Error::DimensionMismatch { expected: d, got: sigma.nrows() });
            }
            let (half, inv_half) = sqrt_pair(sigma)?;
            Ok(WhitenResult {
                whitened: apply(x, None, &inv_half)?,
                sigma_half: half,
                sigma_inv_half: inv_half,
                mean: None,
                covariance_rows: 0..0,
                fitting_rows: 0..n,
            })
        }
        WhitenMode::InSample => {
            let (mean, cov) = mean_and_covariance(x);
            let (half, inv_half) = sqrt_pair(&cov)?;
            Ok(WhitenResult {
                whitened: apply(x, Some(&mean), &inv_half)?,
                sigma_half: half,
                sigma_inv_half: inv_half,
                mean: Some(mean),
                covariance_rows: 0..n,
                fitting_rows: 0..n,
            })
        }
        WhitenMode::Split => {
            let f = plan.split_fraction;
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidInput(format!("split fraction must lie in (0,1), got {f}")));
            }
            let n1 = (f * n as f64).ceil() as usize;
            if n1 < 2 || n1 >= n {
                return Err(Error::InvalidInput(format!(
                    "cannot split {n} rows into a covariance part of {n1} and a non-empty fitting part"
                )));
            }
            let (mean, cov) = mean_and_covariance(&x.rows(0, n1).into_owned());
            let (half, inv_half) = sqrt_pair(&cov)?;
            Ok(WhitenResult {
                whitened: apply(&x.rows(n1, n - n1).into_owned(), Some(&mean), &inv_half)?,
                sigma_half: half,
                sigma_inv_half: inv_half,
                mean: Some(mean),
                covariance_rows: 0..n1,
                fitting_rows: n1..n,
            })
        }
    }
}

/// Maps whitened-scale directions back: `âⱼ ← Σ̂^{1/2} âⱼ`.
pub fn unwhiten_columns(estimate: &MixingEstimate, result: &WhitenResult) -> Result<MixingEstimate> {
    if estimate.d() != result.sigma_half.nrows() {
        return Err(Error::DimensionMismatch { expected: result.sigma_half.nrows(), got: estimate.d() });
    }
    let mut out = estimate.clone();
    out.a_hat = &result.sigma_half * &estimate.a_hat;
    Ok(out)
}
