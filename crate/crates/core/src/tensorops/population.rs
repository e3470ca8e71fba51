//! Exact population moments of a (possibly deflated) ICA model.
//!
//! For `X = Σᵏ bₖ Sₖ + G` with independent unit-variance sources and
//! Gaussian-equivalent second moments `cov`, the fourth cumulant is
//! `Σ κₖ bₖ⊗bₖ⊗bₖ⊗bₖ` and the fourth moment adds `M₀(cov)`. This is the
//! noiseless reference against which the sample paths are checked.

use nalgebra::{DMatrix, DVector};

use super::{check_len, sym, SymOperator};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    cov: DMatrix<f64>,
    directions: DMatrix<f64>,
    kappa: DVector<f64>,
}

impl PopulationModel {
    /// Whitened model with orthonormal mixing `a` and excess kurtoses `kappa`.
    pub fn odeco(a: &DMatrix<f64>, kappa: &[f64]) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != kappa.len() {
            return Err(Error::DimensionMismatch { expected: a.ncols(), got: kappa.len() });
        }
        Ok(Self {
            cov: a * a.transpose(),
            directions: a.clone(),
            kappa: DVector::from_column_slice(kappa),
        }
        .with_dim_check(d)?)
    }

    fn with_dim_check(self, d: usize) -> Result<Self> {
        if self.cov.nrows() != d || self.directions.nrows() != d {
            return Err(Error::DimensionMismatch { expected: d, got: self.cov.nrows() });
        }
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.cov.nrows()
    }

    pub fn directions(&self) -> &DMatrix<f64> {
        &self.directions
    }

    pub fn kappa(&self) -> &DVector<f64> {
        &self.kappa
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `E X (u⊤X)³ = 3 (u⊤Σu) Σu + Σ κₖ (bₖ⊤u)³ bₖ`.
    pub fn third_contraction(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(u, self.d())?;
        let su = &self.cov * u;
        let q = u.dot(&su);
        let proj = self.directions.tr_mul(u);
        let coeffs = DVector::from_fn(proj.len(), |k, _| self.kappa[k] * proj[k].powi(3));
        Ok(su * (3.0 * q) + &self.directions * coeffs)
    }

    /// `E (u⊤X)⁴ = 3 (u⊤Σu)² + Σ κₖ (bₖ⊤u)⁴`.
    pub fn fourth_moment(&self, u: &DVector<f64>) -> Result<f64> {
        check_len(u, self.d())?;
        let q = u.dot(&(&self.cov * u));
        let proj = self.directions.tr_mul(u);
        Ok(3.0 * q * q + proj.iter().zip(self.kappa.iter()).map(|(p, k)| k * p.powi(4)).sum::<f64>())
    }

    /// Replaces `X` by `(I − aa⊤) X`.
    pub fn deflate(&mut self, a: &DVector<f64>) -> Result<()> {
        check_len(a, self.d())?;
        let p = DMatrix::identity(self.d(), self.d()) - a * a.transpose();
        self.cov = &p * &self.cov * &p;
        self.directions = &p * &self.directions;
        Ok(())
    }

    /// Coordinates of the model in an orthonormal `d × r` basis.
    pub fn in_basis(&self, basis: &DMatrix<f64>) -> Result<Self> {
        if basis.nrows() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: basis.nrows() });
        }
        Ok(Self {
            cov: basis.tr_mul(&self.cov) * basis,
            directions: basis.tr_mul(&self.directions),
            kappa: self.kappa.clone(),
        })
    }

    /// Matricized cumulant `Σ κₖ vec(bₖbₖ⊤) vec(bₖbₖ⊤)⊤` on compressed
    /// symmetric coordinates.
    pub fn cumulant_operator(&self) -> PopulationCumulant {
        let d = self.d();
        let cols: Vec<DVector<f64>> = self
            .directions
            .column_iter()
            .map(|b| sym::compress(&(b * b.transpose())))
            .collect();
        let factors = if cols.is_empty() {
            DMatrix::zeros(sym::sym_dim(d), 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        PopulationCumulant { d, factors, kappa: self.kappa.clone() }
    }
}

/// Low-rank population cumulant operator.
#[derive(Debug, Clone)]
pub struct PopulationCumulant {
    d: usize,
    factors: DMatrix<f64>,
    kappa: DVector<f64>,
}

impl PopulationCumulant {
    pub fn d(&self) -> usize {
        self.d
    }
}

impl SymOperator for PopulationCumulant {
    fn dim(&self) -> usize {
        sym::sym_dim(self.d)
    }

    fn apply_block(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        let mut coeffs = self.factors.tr_mul(block);
        for (k, mut row) in coeffs.row_iter_mut().enumerate() {
            row *= self.kappa[k];
        }
        &self.factors * coeffs
    }
}
