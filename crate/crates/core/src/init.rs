//! Starting directions for the fixed-point iteration.
//!
//! The two slicing initializers contract a cumulant estimate against random
//! Gaussian weights `G` and return the leading eigenvector of the slice with
//! the largest spectral norm. Slice `l` always draws `G` from the substream
//! `(seed, l)`, so the winner does not depend on batching or thread count.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Rng};
use crate::robust_moments::{CumulantKind, CumulantOperator};
use crate::tensorops::{rank_d_spectral, sym, DataMatrix, DenseSymOperator, SpectralConfig, SymOperator};

/// Upper limit on the default slice count.
pub const L_CAP: usize = 400;

/// Slices of dimension above this use power iteration instead of a dense
/// eigendecomposition.
const DENSE_SLICE_MAX: usize = 64;
const SLICE_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    ProjectionSlicing,
    SampleSlicing,
    RandomUnit,
    NaiveMatricization,
}

impl InitKind {
    pub const ALL: [InitKind; 4] = [
        InitKind::ProjectionSlicing,
        InitKind::SampleSlicing,
        InitKind::RandomUnit,
        InitKind::NaiveMatricization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitKind::ProjectionSlicing => "projection",
            InitKind::SampleSlicing => "slicing",
            InitKind::RandomUnit => "random",
            InitKind::NaiveMatricization => "naive",
        }
    }

    /// Whether a retry with a fresh seed can produce a different candidate.
    pub fn is_randomized(self) -> bool {
        !matches!(self, InitKind::NaiveMatricization)
    }
}

impl std::str::FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projection" => Ok(InitKind::ProjectionSlicing),
            "slicing" => Ok(InitKind::SampleSlicing),
            "random" => Ok(InitKind::RandomUnit),
            "naive" => Ok(InitKind::NaiveMatricization),
            other => Err(Error::InvalidInput(format!(
                "unknown initializer '{other}' (expected projection, slicing, random or naive)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitMethod {
    pub kind: InitKind,
    /// Slice count; `None` means [`default_slices`] of the working dimension.
    pub slices: Option<usize>,
}

impl InitMethod {
    pub fn new(kind: InitKind) -> Self {
        Self { kind, slices: None }
    }

    pub fn with_slices(kind: InitKind, slices: usize) -> Self {
        Self { kind, slices: Some(slices) }
    }

    pub fn slices_for(&self, d: usize) -> usize {
        self.slices.unwrap_or_else(|| default_slices(d))
    }
}

impl Default for InitMethod {
    fn default() -> Self {
        Self::new(InitKind::ProjectionSlicing)
    }
}

/// `min(d², 400)`.
pub fn default_slices(d: usize) -> usize {
    (d * d).clamp(1, L_CAP)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitCandidate {
    pub direction: DVector<f64>,
    /// Spectral norm of the winning slice, for the slicing initializers.
    pub slice_singular_value: Option<f64>,
    pub slice_index: Option<usize>,
}

impl InitCandidate {
    fn plain(direction: DVector<f64>) -> Self {
        Self { direction, slice_singular_value: None, slice_index: None }
    }
}

/// Flips `v` so that its largest-magnitude entry is positive.
pub fn fix_sign(mut v: DVector<f64>) -> DVector<f64> {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.len() > 0 && v[best] < 0.0 {
        v.neg_mut();
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceMode {
    Sample,
    Projected,
}

/// The `d × d` matrix `T ×₃,₄ W` for a matricized cumulant `T` given as an
/// operator on compressed symmetric coordinates.
#[derive(Debug, Clone)]
pub struct SlicedMatrixOperator {
    mode: SliceMode,
    matrix: DMatrix<f64>,
}

impl SlicedMatrixOperator {
    /// Only the symmetric part of `weight` matters, since `T` is symmetric
    /// in its last two modes.
    pub fn new(op: &dyn SymOperator, d: usize, weight: &DMatrix<f64>, mode: SliceMode) -> Result<Self> {
        if weight.shape() != (d, d) || op.dim() != sym::sym_dim(d) {
            return Err(Error::DimensionMismatch { expected: d, got: weight.nrows() });
        }
        let w = sym::compress(weight);
        let image = op.apply(&w);
        Ok(Self { mode, matrix: sym::expand(image.as_slice(), d) })
    }

    pub fn mode(&self) -> SliceMode {
        self.mode
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }
}

/// Largest `|λ|` of a symmetric matrix, and optionally its eigenvector.
fn top_abs_eigen(b: &DMatrix<f64>, want_vector: bool, rng: &mut Rng) -> (f64, Option<DVector<f64>>) {
    let d = b.nrows();
    if d <= DENSE_SLICE_MAX {
        if !want_vector {
            let ev = b.clone().symmetric_eigenvalues();
            return (ev.iter().fold(0.0f64, |m, x| m.max(x.abs())), None);
        }
        let eig = SymmetricEigen::new(b.clone());
        let mut best = 0;
        for i in 1..d {
            if eig.eigenvalues[i].abs() > eig.eigenvalues[best].abs() {
                best = i;
            }
        }
        return (eig.eigenvalues[best].abs(), Some(eig.eigenvectors.column(best).into_owned()));
    }
    // Power iteration on B², whose top eigenvector is B's top-|λ| one.
    let mut v = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut *rng)).normalize();
    for _ in 0..500 {
        let w = b * (b * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return (0.0, Some(v));
        }
        let next = w / norm;
        let delta = 1.0 - next.dot(&v).abs();
        v = next;
        if delta < 1e-10 {
            break;
        }
    }
    ((b * &v).norm(), Some(v))
}

fn slice_weight(d: usize, seed: u64, l: usize) -> DMatrix<f64> {
    let mut rng = substream(seed, &[l as u64]);
    DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng))
}

/// Slices `op` against `slices` Gaussian weights and returns the top
/// eigenvector of the slice with the largest spectral norm. With `project`
/// set, each weight is first passed through `P̂`.
fn best_slice(
    op: &dyn SymOperator,
    d: usize,
    slices: usize,
    seed: u64,
    project: Option<&CumulantOperator>,
) -> Result<InitCandidate> {
    if slices == 0 {
        return Err(Error::InvalidInput("slice count must be at least 1".into()));
    }
    let m = sym::sym_dim(d);
    if op.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, got: op.dim() });
    }
    let mut best: Option<(f64, usize, DMatrix<f64>)> = None;
    let mut start = 0;
    while start < slices {
        let len = SLICE_BATCH.min(slices - start);
        let mut weights = DMatrix::zeros(m, len);
        for c in 0..len {
            weights.set_column(c, &sym::compress(&slice_weight(d, seed, start + c)));
        }
        if let Some(p) = project {
            weights = p.project(&weights).expect("projected operator");
        }
        let image = op.apply_block(&weights);
        for c in 0..len {
            let l = start + c;
            let b = sym::expand(image.column(c).as_slice(), d);
            let mut rng = substream(seed, &[l as u64, 1]);
            let (sigma, _) = top_abs_eigen(&b, false, &mut rng);
            if !sigma.is_finite() {
                return Err(Error::NonFinite { row: l, col: 0 });
            }
            if best.as_ref().map_or(true, |(s, _, _)| sigma > *s) {
                best = Some((sigma, l, b));
            }
        }
        start += len;
    }
    let (sigma, l, b) = best.expect("at least one slice");
    let mut rng = substream(seed, &[l as u64, 1]);
    let (_, v) = top_abs_eigen(&b, true, &mut rng);
    let v = v.expect("vector requested");
    Ok(InitCandidate {
        direction: fix_sign(v.normalize()),
        slice_singular_value: Some(sigma),
        slice_index: Some(l),
    })
}

/// Random slicing of the projected estimate `P̂ (Ĥ₁ − M₀) P̂`.
pub fn init_projection_slicing(op: &CumulantOperator, slices: usize, seed: u64) -> Result<InitCandidate> {
    if op.kind() != CumulantKind::ProjectedM {
        return Err(Error::InvalidInput("projection slicing needs a projected operator".into()));
    }
    best_slice(op, op.d(), slices, seed, Some(op))
}

/// Random slicing of the raw sample cumulant `M̂₄ − M₀`.
pub fn init_sample_slicing(data: &DataMatrix, slices: usize, seed: u64) -> Result<InitCandidate> {
    let op = CumulantOperator::sample_raw(data).minus_m0();
    if sym::sym_dim(data.d()) <= slices {
        return best_slice(&DenseSymOperator(op.to_dense()), data.d(), slices, seed, None);
    }
    best_slice(&op, data.d(), slices, seed, None)
}

/// Random slicing of any matricized cumulant on compressed coordinates.
pub fn init_operator_slicing(op: &dyn SymOperator, d: usize, slices: usize, seed: u64) -> Result<InitCandidate> {
    best_slice(op, d, slices, seed, None)
}

/// Uniform direction on the sphere.
pub fn init_random_unit(d: usize, rng: &mut Rng) -> InitCandidate {
    loop {
        let g: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut *rng));
        let norm = g.norm();
        if norm > 0.0 {
            return InitCandidate::plain(g / norm);
        }
    }
}

/// Leading left singular vector of the reshaped top eigenvector of the
/// matricized sample cumulant.
pub fn init_naive_matricization(data: &DataMatrix) -> Result<InitCandidate> {
    let op = CumulantOperator::sample_raw(data).minus_m0();
    init_naive_operator(&op, data.d())
}

pub fn init_naive_operator(op: &dyn SymOperator, d: usize) -> Result<InitCandidate> {
    let cfg = SpectralConfig { residual_tol: Some(1e-8), ..Default::default() };
    let mut rng = substream(0, &[]);
    let dec = rank_d_spectral(op, 1, &cfg, &mut rng)?;
    let u1 = sym::expand(dec.basis.column(0).as_slice(), d);
    let (_, v) = top_abs_eigen(&u1, true, &mut rng);
    Ok(InitCandidate::plain(fix_sign(v.expect("vector requested").normalize())))
}
