//! Asymptotic variances of linear and bilinear forms of the estimated
//! mixing matrix, and the intervals and statistics built from them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::special::{chi2_cdf, norm_ppf};
use crate::error::{Error, Result};
use crate::tensorops::DataMatrix;

/// Entries with `a_ij² > 1 − ENTRY_MARGIN` are rejected by [`sigma_entry`].
pub const ENTRY_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    Analytic(String),
    Plugin,
}

/// Moments of one unit-variance source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMoments {
    pub es3: f64,
    pub es4: f64,
    pub es6: f64,
    pub kappa4: f64,
    /// `E S⁶ − (E S³)²`.
    pub var_s3: f64,
    pub source: MomentSource,
}

impl SourceMoments {
    pub fn new(es3: f64, es4: f64, es6: f64, source: MomentSource) -> Self {
        Self { es3, es4, es6, kappa4: es4 - 3.0, var_s3: es6 - es3 * es3, source }
    }

    /// `Var(S³) / κ₄²`.
    pub fn ratio(&self, component: usize) -> Result<f64> {
        if self.kappa4 == 0.0 || !self.kappa4.is_finite() {
            return Err(Error::ZeroKurtosis { component });
        }
        Ok(self.var_s3 / (self.kappa4 * self.kappa4))
    }
}

/// Empirical moments of the recovered sources `Ŝ = Â⁻¹ (X − X̄)`, each
/// standardized to unit variance.
pub fn plugin_moments(data: &DataMatrix, a_hat: &DMatrix<f64>) -> Result<Vec<SourceMoments>> {
    let d = data.d();
    if a_hat.shape() != (d, d) {
        return Err(Error::DimensionMismatch { expected: d, got: a_hat.ncols() });
    }
    let inv = a_hat
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("estimated mixing matrix is singular".into()))?;
    let mean = data.values().row_mean();
    let mut centered = data.values().clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let s = centered * inv.transpose();
    let n = s.nrows() as f64;
    s.column_iter()
        .enumerate()
        .map(|(j, col)| {
            let var = col.iter().map(|x| x * x).sum::<f64>() / n;
            if !(var > 0.0) {
                return Err(Error::ZeroKurtosis { component: j });
            }
            let sd = var.sqrt();
            let mut m = [0.0; 3];
            for &x in col.iter() {
                let z = x / sd;
                let z3 = z * z * z;
                m[0] += z3;
                m[1] += z3 * z;
                m[2] += z3 * z3;
            }
            Ok(SourceMoments::new(m[0] / n, m[1] / n, m[2] / n, MomentSource::Plugin))
        })
        .collect()
}

fn check_component(a: &DMatrix<f64>, j: usize) -> Result<()> {
    if j >= a.ncols() {
        return Err(Error::InvalidInput(format!("component {j} out of range for d = {}", a.ncols())));
    }
    Ok(())
}

/// `σ_u = √(u⊤(I − aⱼaⱼ⊤)u · Var(Sⱼ³)/κ₄(Sⱼ)²)`.
pub fn sigma_linear(u: &DVector<f64>, j: usize, a: &DMatrix<f64>, moments: &SourceMoments) -> Result<f64> {
    check_component(a, j)?;
    if u.len() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: u.len() });
    }
    let aj = a.column(j);
    let proj = aj.dot(u);
    let perp = (u.norm_squared() - proj * proj).max(0.0);
    Ok((perp * moments.ratio(j)?).sqrt())
}

/// `σ_ij = √((1 − a_ij²) Var(Sⱼ³)/κ₄(Sⱼ)²)`.
pub fn sigma_entry(i: usize, j: usize, a: &DMatrix<f64>, moments: &SourceMoments) -> Result<f64> {
    check_component(a, j)?;
    if i >= a.nrows() {
        return Err(Error::InvalidInput(format!("row {i} out of range for d = {}", a.nrows())));
    }
    let aij = a[(i, j)];
    if aij * aij > 1.0 - ENTRY_MARGIN + 1e-12 {
        return Err(Error::EntryTooCloseToOne { value: aij.abs() });
    }
    Ok(((1.0 - aij * aij) * moments.ratio(j)?).sqrt())
}

/// Joint asymptotic covariance of `(u₁⊤â₁, …, u_d⊤â_d)`.
pub fn joint_covariance(us: &[DVector<f64>], a: &DMatrix<f64>, moments: &[SourceMoments]) -> Result<DMatrix<f64>> {
    let d = a.ncols();
    if us.len() != d || moments.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: us.len().min(moments.len()) });
    }
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        let s = sigma_linear(&us[i], i, a, &moments[i])?;
        out[(i, i)] = s * s;
        for j in 0..i {
            let v = us[i].dot(&a.column(j)) * us[j].dot(&a.column(i)) * moments[i].es4 * moments[j].es4
                / (moments[i].kappa4 * moments[j].kappa4);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// `σ_{u,v} = √(u⊤ A D_v A⊤ u)` with `(D_v)_kk = Σ_{j≠k} vⱼ² Var(Sⱼ³)/κ₄(Sⱼ)²`.
pub fn sigma_bilinear(
    u: &DVector<f64>,
    v: &DVector<f64>,
    a: &DMatrix<f64>,
    moments: &[SourceMoments],
) -> Result<f64> {
    let d = a.ncols();
    if u.len() != a.nrows() || v.len() != d || moments.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: v.len() });
    }
    let weighted: Vec<f64> = (0..d)
        .map(|j| Ok(v[j] * v[j] * moments[j].ratio(j)?))
        .collect::<Result<_>>()?;
    let total: f64 = weighted.iter().sum();
    let w = a.tr_mul(u);
    let s2: f64 = (0..d).map(|k| w[k] * w[k] * (total - weighted[k])).sum();
    Ok(s2.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2Alignment {
    pub statistic: f64,
    pub dof: usize,
    /// `P(χ²_dof ≤ statistic)`.
    pub cdf: f64,
}

/// `n κ₄² / Var(S³) · (1 − ⟨âⱼ, aⱼ⟩²)`, referred to `χ²_d`.
pub fn chi2_alignment(
    a_hat_j: &DVector<f64>,
    a_j: &DVector<f64>,
    n: usize,
    moments: &SourceMoments,
) -> Result<Chi2Alignment> {
    if a_hat_j.len() != a_j.len() {
        return Err(Error::DimensionMismatch { expected: a_j.len(), got: a_hat_j.len() });
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let c = a_hat_j.dot(a_j) / (a_hat_j.norm() * a_j.norm());
    let sin2 = (1.0 - c * c).max(0.0);
    let statistic = n as f64 * sin2 / moments.ratio(0)?;
    let dof = a_j.len();
    Ok(Chi2Alignment { statistic, dof, cdf: chi2_cdf(statistic, dof as f64) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Contrast {
    /// `u⊤ âⱼ`.
    Linear { u: Vec<f64>, j: usize },
    /// `â_ij`.
    Entry { i: usize, j: usize },
    /// `u⊤ Â v`.
    Bilinear { u: Vec<f64>, v: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastInterval {
    pub contrast: Contrast,
    pub estimate: f64,
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
    /// `σ = 0`: the interval collapses to the estimate and carries no
    /// coverage guarantee.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub level: f64,
    pub z: f64,
    pub n: usize,
    pub intervals: Vec<ContrastInterval>,
    /// Joint asymptotic covariance of the diagonal `(â₁₁, …, â_dd)`; omitted
    /// when some kurtosis vanishes.
    pub joint_covariance: Option<Vec<Vec<f64>>>,
}

/// Intervals `estimate ± z_{(1+level)/2} σ / √n` for every contrast. The
/// variances are evaluated at `a_hat`, the plug-in for the unknown `A`.
pub fn confidence_intervals(
    a_hat: &DMatrix<f64>,
    moments: &[SourceMoments],
    n: usize,
    contrasts: &[Contrast],
    level: f64,
) -> Result<InferenceReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("level must lie in (0,1), got {level}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let d = a_hat.ncols();
    if moments.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: moments.len() });
    }
    let z = norm_ppf(0.5 * (1.0 + level));
    let scale = z / (n as f64).sqrt();
    let vec_of = |x: &[f64], len: usize| -> Result<DVector<f64>> {
        if x.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: x.len() });
        }
        Ok(DVector::from_column_slice(x))
    };
    let mut intervals = Vec::with_capacity(contrasts.len());
    for c in contrasts {
        let (estimate, sigma) = match c {
            Contrast::Linear { u, j } => {
                check_component(a_hat, *j)?;
                let u = vec_of(u, a_hat.nrows())?;
                (u.dot(&a_hat.column(*j)), sigma_linear(&u, *j, a_hat, &moments[*j])?)
            }
            Contrast::Entry { i, j } => {
                check_component(a_hat, *j)?;
                let s = sigma_entry(*i, *j, a_hat, &moments[*j])?;
                (a_hat[(*i, *j)], s)
            }
            Contrast::Bilinear { u, v } => {
                let u = vec_of(u, a_hat.nrows())?;
                let v = vec_of(v, d)?;
                (u.dot(&(a_hat * &v)), sigma_bilinear(&u, &v, a_hat, moments)?)
            }
        };
        let half = scale * sigma;
        intervals.push(ContrastInterval {
            contrast: c.clone(),
            estimate,
            sigma,
            lower: estimate - half,
            upper: estimate + half,
            degenerate: sigma == 0.0,
        });
    }
    let basis: Vec<DVector<f64>> =
        (0..d).map(|j| DVector::from_fn(a_hat.nrows(), |i, _| f64::from(u8::from(i == j)))).collect();
    let joint = if a_hat.is_square() {
        joint_covariance(&basis, a_hat, moments)
            .ok()
            .map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect())
    } else {
        None
    };
    Ok(InferenceReport { level, z, n, intervals, joint_covariance: joint })
}
