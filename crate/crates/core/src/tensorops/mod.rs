//! Matrix-free contractions of fourth-moment tensors.
//!
//! The empirical fourth-moment tensor of an `n × d` sample is never stored.
//! Every contraction goes through the rows of the data, and the `d² × d²`
//! matricization is applied through the symmetric-matrix subspace, which has
//! dimension `d(d+1)/2` (see [`sym`]).

mod dense;
mod population;
mod spectral;
pub mod sym;

pub use dense::{DenseTensor4, D_MAX_DENSE};
pub use population::{PopulationCumulant, PopulationModel};
pub use spectral::{
    check_symmetry, rank_d_spectral, DenseSymOperator, SpectralConfig, SpectralDecomposition,
    SymOperator,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance on `‖u‖ = 1` for direction arguments.
pub const UNIT_TOL: f64 = 1e-8;

/// `n × d` sample matrix, one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    /// Wraps a matrix after checking that it is non-empty and finite.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "data must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        for col in 0..values.ncols() {
            for row in 0..values.nrows() {
                if !values[(row, col)].is_finite() {
                    return Err(Error::NonFinite { row, col });
                }
            }
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: r.len() });
            }
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// Contiguous block of rows `start..start + len`.
    pub fn rows(&self, start: usize, len: usize) -> Result<DataMatrix> {
        if start + len > self.n() || len == 0 {
            return Err(Error::InvalidInput(format!(
                "row range {start}..{} out of bounds for n = {}",
                start + len,
                self.n()
            )));
        }
        Ok(Self { values: self.values.rows(start, len).into_owned() })
    }

    /// Projections `X u` of every row onto `u`.
    pub fn project(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(u, self.d())?;
        Ok(&self.values * u)
    }

    /// Expresses every row in the coordinates of an orthonormal `d × r` basis.
    pub fn in_basis(&self, basis: &DMatrix<f64>) -> Result<DataMatrix> {
        if basis.nrows() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: basis.nrows() });
        }
        Ok(Self { values: &self.values * basis })
    }
}

pub(crate) fn check_len(u: &DVector<f64>, d: usize) -> Result<()> {
    if u.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: u.len() });
    }
    Ok(())
}

pub(crate) fn check_unit(u: &DVector<f64>, d: usize) -> Result<()> {
    check_len(u, d)?;
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { row: 0, col: 0 });
    }
    let norm = u.norm();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NotUnitNorm { norm });
    }
    Ok(())
}

/// Result of contracting the fourth-moment tensor along `k` of its modes.
#[derive(Debug, Clone, PartialEq)]
pub enum Contraction {
    Scalar(f64),
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
    /// Order-3 tensor stored with index `(i, j, k)` at `i + d (j + d k)`.
    Tensor3(Vec<f64>),
}

impl Contraction {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Contraction::Scalar(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&DVector<f64>> {
        match self {
            Contraction::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            Contraction::Matrix(m) => Some(m),
            _ => None,
        }
    }
}

/// Contracts `(1/n) Σᵢ Xᵢ⊗Xᵢ⊗Xᵢ⊗Xᵢ` with the given unit directions, filling
/// the trailing modes first: three directions leave a vector, two a matrix.
pub fn contract4(data: &DataMatrix, directions: &[&DVector<f64>]) -> Result<Contraction> {
    let d = data.d();
    if directions.is_empty() || directions.len() > 4 {
        return Err(Error::InvalidInput(format!(
            "between one and four directions required, got {}",
            directions.len()
        )));
    }
    for u in directions {
        check_unit(u, d)?;
    }
    let x = data.values();
    let n = data.n() as f64;
    // weight_i = Π_k (u_k⊤ X_i)
    let mut weight = DVector::from_element(data.n(), 1.0);
    for u in directions {
        weight.component_mul_assign(&(x * *u));
    }
    let out = match directions.len() {
        4 => Contraction::Scalar(weight.sum() / n),
        3 => Contraction::Vector(x.tr_mul(&weight) / n),
        2 => {
            let mut scaled = x.clone();
            for (i, mut row) in scaled.row_iter_mut().enumerate() {
                row *= weight[i];
            }
            Contraction::Matrix(x.tr_mul(&scaled) / n)
        }
        _ => {
            let mut t = vec![0.0; d * d * d];
            for i in 0..data.n() {
                let w = weight[i] / n;
                for k in 0..d {
                    let wk = w * x[(i, k)];
                    for j in 0..d {
                        let wjk = wk * x[(i, j)];
                        let base = d * (j + d * k);
                        for a in 0..d {
                            t[base + a] += wjk * x[(i, a)];
                        }
                    }
                }
            }
            Contraction::Tensor3(t)
        }
    };
    Ok(out)
}

/// Slice `(1/n) Σᵢ XᵢXᵢ⊤ (Xᵢ⊤ W Xᵢ)` of the sample fourth moment along modes 3, 4.
pub fn contract4_weighted(data: &DataMatrix, weight: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = data.d();
    if weight.nrows() != d || weight.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: weight.nrows() });
    }
    let x = data.values();
    let xw = x * weight;
    let mut scaled = x.clone();
    for i in 0..data.n() {
        let q = x.row(i).dot(&xw.row(i));
        scaled.row_mut(i).scale_mut(q);
    }
    Ok(x.tr_mul(&scaled) / data.n() as f64)
}

/// `⟨M₀, u⊗u⊗u⊗u⟩ = 3‖u‖⁴` for the Gaussian fourth-moment tensor.
pub fn m0_contract(u: &DVector<f64>) -> Result<f64> {
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { row: 0, col: 0 });
    }
    let s = u.norm_squared();
    Ok(3.0 * s * s)
}

/// Matricized Gaussian baseline applied to `vec V`, reshaped back:
/// `tr(V) I + V + V⊤`.
pub fn m0_apply(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !v.is_square() {
        return Err(Error::DimensionMismatch { expected: v.nrows(), got: v.ncols() });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { row: 0, col: 0 });
    }
    let d = v.nrows();
    Ok(DMatrix::identity(d, d) * v.trace() + v + v.transpose())
}
