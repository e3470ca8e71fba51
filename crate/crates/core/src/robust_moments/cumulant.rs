use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensorops::{rank_d_spectral, sym, DataMatrix, SpectralConfig, SymOperator};

/// Which estimate of the matricized fourth moment an operator represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CumulantKind {
    /// `(1/n) Σ Yᵢ Yᵢ⊤` with `Yᵢ = Xᵢ⊗Xᵢ`.
    SampleRaw,
    /// `(1/n) Σ (Yᵢ − Ȳ)(Yᵢ − Ȳ)⊤ + vec(I) vec(I)⊤`.
    BiasCorrectedH,
    /// `P̂ (Ĥ₁ − M₀) P̂` with `P̂` the top-rank projection of `Ĥ₂ − M₀`.
    ProjectedM,
}

#[derive(Debug, Clone)]
enum Repr {
    Moment {
        data: DataMatrix,
        /// Compressed `Ȳ`, present for the bias-corrected estimate.
        mean: Option<DVector<f64>>,
    },
    Projected {
        /// `d(d+1)/2 × r` compressed orthonormal basis `U` with `P̂ = UU⊤`.
        basis: DMatrix<f64>,
        /// `U⊤ (Ĥ₁ − M₀) U`.
        core: DMatrix<f64>,
        /// Leading eigenvalues of `Ĥ₂ − M₀`.
        values: DVector<f64>,
    },
}

/// Matrix-free matricized fourth-moment operator.
///
/// As a [`SymOperator`] it acts on compressed symmetric coordinates of
/// dimension `d(d+1)/2`; [`CumulantOperator::apply_full`] gives the action
/// on `R^{d²}`.
#[derive(Debug, Clone)]
pub struct CumulantOperator {
    kind: CumulantKind,
    d: usize,
    m0_subtracted: bool,
    repr: Repr,
}

/// Rows per chunk when streaming lifted samples, sized to keep each chunk
/// near 16 MB.
fn chunk_rows(n: usize, m: usize) -> usize {
    ((1usize << 21) / m.max(1)).clamp(1, n.max(1))
}

fn lifted_mean(data: &DataMatrix) -> DVector<f64> {
    let (n, d) = (data.n(), data.d());
    let m = sym::sym_dim(d);
    let chunk = chunk_rows(n, m);
    let mut sum = DVector::zeros(m);
    let mut start = 0;
    while start < n {
        let len = chunk.min(n - start);
        let y = sym::lift_rows(&data.values().rows(start, len).into_owned());
        for (j, col) in y.column_iter().enumerate() {
            sum[j] += col.sum();
        }
        start += len;
    }
    sum / n as f64
}

/// Splits rows into the first `⌊n/2⌋` and the remainder.
pub fn split_halves(data: &DataMatrix) -> Result<(DataMatrix, DataMatrix)> {
    let n = data.n();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 rows to split, got {n}")));
    }
    let first = n / 2;
    Ok((data.rows(0, first)?, data.rows(first, n - first)?))
}

impl CumulantOperator {
    /// Bias-corrected second-moment matrix of `Xᵢ⊗Xᵢ`.
    pub fn build_h(data: &DataMatrix) -> Result<Self> {
        if data.n() < 2 {
            return Err(Error::InvalidInput(format!("need n ≥ 2, got {}", data.n())));
        }
        Ok(Self {
            kind: CumulantKind::BiasCorrectedH,
            d: data.d(),
            m0_subtracted: false,
            repr: Repr::Moment { data: data.clone(), mean: Some(lifted_mean(data)) },
        })
    }

    /// Plain matricized sample moment.
    pub fn sample_raw(data: &DataMatrix) -> Self {
        Self {
            kind: CumulantKind::SampleRaw,
            d: data.d(),
            m0_subtracted: false,
            repr: Repr::Moment { data: data.clone(), mean: None },
        }
    }

    /// The same estimate with the Gaussian baseline `M₀` removed.
    pub fn minus_m0(mut self) -> Self {
        self.m0_subtracted = true;
        self
    }

    /// `P̂ (Ĥ₁ − M₀) P̂` with `P̂` the top-`d` projection of `Ĥ₂ − M₀`.
    pub fn build_projected_m(half1: &DataMatrix, half2: &DataMatrix, rng: &mut Rng) -> Result<Self> {
        Self::build_projected_m_with(half1, half2, half1.d(), &SpectralConfig::default(), rng)
    }

    pub fn build_projected_m_with(
        half1: &DataMatrix,
        half2: &DataMatrix,
        rank: usize,
        cfg: &SpectralConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        if half1.d() != half2.d() {
            return Err(Error::DimensionMismatch { expected: half1.d(), got: half2.d() });
        }
        let h2 = Self::build_h(half2)?.minus_m0();
        let h1 = Self::build_h(half1)?.minus_m0();
        Self::projected_from(&h2, &h1, half1.d(), rank, cfg, rng)
    }

    /// Projected operator from arbitrary cumulant estimates: the projection
    /// comes from `for_projection`, the compressed core from `for_core`.
    pub fn projected_from(
        for_projection: &dyn SymOperator,
        for_core: &dyn SymOperator,
        d: usize,
        rank: usize,
        cfg: &SpectralConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let m = sym::sym_dim(d);
        if for_projection.dim() != m || for_core.dim() != m {
            return Err(Error::DimensionMismatch { expected: m, got: for_projection.dim() });
        }
        let dec = rank_d_spectral(for_projection, rank, cfg, rng)?;
        let image = for_core.apply_block(&dec.basis);
        let core = dec.basis.tr_mul(&image);
        let core = (&core + core.transpose()) * 0.5;
        Ok(Self {
            kind: CumulantKind::ProjectedM,
            d,
            m0_subtracted: true,
            repr: Repr::Projected { basis: dec.basis, core, values: dec.values },
        })
    }

    pub fn kind(&self) -> CumulantKind {
        self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_m0_subtracted(&self) -> bool {
        self.m0_subtracted
    }

    /// Compressed projection basis (`d(d+1)/2 × r`), for projected operators.
    pub fn compressed_basis(&self) -> Option<&DMatrix<f64>> {
        match &self.repr {
            Repr::Projected { basis, .. } => Some(basis),
            Repr::Moment { .. } => None,
        }
    }

    /// Projection basis embedded in `R^{d²}` (`d² × r`).
    pub fn projection_basis(&self) -> Option<DMatrix<f64>> {
        self.compressed_basis().map(|b| sym::embed_columns(b, self.d))
    }

    /// Leading eigenvalues of the operator the projection was taken from.
    pub fn projection_values(&self) -> Option<&DVector<f64>> {
        match &self.repr {
            Repr::Projected { values, .. } => Some(values),
            Repr::Moment { .. } => None,
        }
    }

    /// Applies `P̂` in compressed coordinates.
    pub fn project(&self, block: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        self.compressed_basis().map(|u| u * u.tr_mul(block))
    }

    /// Action on `v ∈ R^{d²}` (column-major `vec`).
    pub fn apply_full(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let d2 = self.d * self.d;
        if v.len() != d2 {
            return Err(Error::DimensionMismatch { expected: d2, got: v.len() });
        }
        let s = sym::from_vec(v.as_slice(), self.d);
        Ok(sym::to_vec(self.apply(&s).as_slice(), self.d))
    }

    /// Explicit `d(d+1)/2 × d(d+1)/2` matrix. Cheaper than `apply_block` once
    /// the block has more columns than the compressed dimension.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Moment { data, mean } => {
                let mut out = self.moment_apply(data, mean.as_ref(), None);
                if self.m0_subtracted {
                    out -= sym::m0_apply_block(&DMatrix::identity(self.dim(), self.dim()), self.d);
                }
                out
            }
            Repr::Projected { basis, core, .. } => basis * core * basis.transpose(),
        }
    }

    /// `(1/n) Σ yᵢ yᵢ⊤ · block` over lifted rows, or the Gram matrix itself
    /// when `block` is absent.
    fn moment_apply(&self, data: &DataMatrix, mean: Option<&DVector<f64>>, block: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        let (n, d) = (data.n(), data.d());
        let m = sym::sym_dim(d);
        let chunk = chunk_rows(n, m);
        let mut out = DMatrix::zeros(m, block.map_or(m, |b| b.ncols()));
        let mut start = 0;
        while start < n {
            let len = chunk.min(n - start);
            let mut y = sym::lift_rows(&data.values().rows(start, len).into_owned());
            if let Some(mu) = mean {
                for (j, mut col) in y.column_iter_mut().enumerate() {
                    col.add_scalar_mut(-mu[j]);
                }
            }
            // nalgebra's transposed products do not use the blocked kernel.
            let yt = y.transpose();
            match block {
                Some(b) => out.gemm(1.0, &yt, &(&y * b), 1.0),
                None => out.gemm(1.0, &yt, &y, 1.0),
            }
            start += len;
        }
        out /= n as f64;
        if mean.is_some() {
            let id = sym::identity(d);
            match block {
                Some(b) => out.ger(1.0, &id, &b.tr_mul(&id), 1.0),
                None => out.ger(1.0, &id, &id, 1.0),
            }
        }
        out
    }
}

impl SymOperator for CumulantOperator {
    fn dim(&self) -> usize {
        sym::sym_dim(self.d)
    }

    fn apply_block(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.repr {
            Repr::Moment { data, mean } => {
                let mut out = self.moment_apply(data, mean.as_ref(), Some(block));
                if self.m0_subtracted {
                    out -= sym::m0_apply_block(block, self.d);
                }
                out
            }
            Repr::Projected { basis, core, .. } => basis * (core * basis.tr_mul(block)),
        }
    }
}
