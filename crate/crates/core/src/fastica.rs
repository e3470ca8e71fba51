//! Deflationary kurtosis-based FastICA.
//!
//! Component `j` is initialized in orthonormal coordinates of the complement
//! of the components already found, refined by the fixed-point map on the
//! deflated data, and then removed from the data by projection.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{
    init_naive_matricization, init_naive_operator, init_operator_slicing, init_projection_slicing,
    init_random_unit, init_sample_slicing, InitCandidate, InitKind, InitMethod,
};
use crate::rng::{derive_seed, substream};
use crate::robust_moments::{split_halves, CumulantOperator};
use crate::tensorops::{check_unit, DataMatrix, PopulationModel, SpectralConfig};

/// Something the fixed-point iteration can run on: a sample or an exact
/// population model.
pub trait MomentModel: Sized {
    fn dim(&self) -> usize;

    /// `E X (a⊤X)³`.
    fn third_moment(&self, a: &DVector<f64>) -> Result<DVector<f64>>;

    /// `E (a⊤X)⁴`.
    fn fourth_moment(&self, a: &DVector<f64>) -> Result<f64>;

    /// `E ‖X‖²`, used to detect rank collapse.
    fn energy(&self) -> f64;

    /// Replaces `X` by `X − (a⊤X) a`.
    fn deflated(&self, a: &DVector<f64>) -> Result<Self>;

    fn in_basis(&self, basis: &DMatrix<f64>) -> Result<Self>;

    /// Runs an initializer in this model's own coordinates.
    fn initialize(&self, kind: InitKind, slices: usize, seed: u64) -> Result<InitCandidate>;
}

impl MomentModel for DataMatrix {
    fn dim(&self) -> usize {
        self.d()
    }

    fn third_moment(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        let mut p = self.project(a)?;
        p.apply(|x| *x = *x * *x * *x);
        Ok(self.values().tr_mul(&p) / self.n() as f64)
    }

    fn fourth_moment(&self, a: &DVector<f64>) -> Result<f64> {
        let p = self.project(a)?;
        Ok(p.iter().map(|x| x.powi(4)).sum::<f64>() / self.n() as f64)
    }

    fn energy(&self) -> f64 {
        self.values().norm_squared() / self.n() as f64
    }

    fn deflated(&self, a: &DVector<f64>) -> Result<Self> {
        deflate(self, a)
    }

    fn in_basis(&self, basis: &DMatrix<f64>) -> Result<Self> {
        DataMatrix::in_basis(self, basis)
    }

    fn initialize(&self, kind: InitKind, slices: usize, seed: u64) -> Result<InitCandidate> {
        match kind {
            InitKind::ProjectionSlicing => {
                let (h1, h2) = split_halves(self)?;
                let mut rng = substream(seed, &[u64::MAX]);
                let op = CumulantOperator::build_projected_m_with(
                    &h1,
                    &h2,
                    self.d(),
                    &SpectralConfig::default(),
                    &mut rng,
                )?;
                init_projection_slicing(&op, slices, seed)
            }
            InitKind::SampleSlicing => init_sample_slicing(self, slices, seed),
            InitKind::RandomUnit => Ok(init_random_unit(self.d(), &mut substream(seed, &[]))),
            InitKind::NaiveMatricization => init_naive_matricization(self),
        }
    }
}

impl MomentModel for PopulationModel {
    fn dim(&self) -> usize {
        self.d()
    }

    fn third_moment(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        self.third_contraction(a)
    }

    fn fourth_moment(&self, a: &DVector<f64>) -> Result<f64> {
        PopulationModel::fourth_moment(self, a)
    }

    fn energy(&self) -> f64 {
        self.cov().trace()
    }

    fn deflated(&self, a: &DVector<f64>) -> Result<Self> {
        let mut next = self.clone();
        next.deflate(a)?;
        Ok(next)
    }

    fn in_basis(&self, basis: &DMatrix<f64>) -> Result<Self> {
        PopulationModel::in_basis(self, basis)
    }

    fn initialize(&self, kind: InitKind, slices: usize, seed: u64) -> Result<InitCandidate> {
        let cum = self.cumulant_operator();
        match kind {
            InitKind::ProjectionSlicing => {
                let mut rng = substream(seed, &[u64::MAX]);
                let op = CumulantOperator::projected_from(
                    &cum,
                    &cum,
                    self.d(),
                    self.d(),
                    &SpectralConfig::default(),
                    &mut rng,
                )?;
                init_projection_slicing(&op, slices, seed)
            }
            InitKind::SampleSlicing => init_operator_slicing(&cum, self.d(), slices, seed),
            InitKind::RandomUnit => Ok(init_random_unit(self.d(), &mut substream(seed, &[]))),
            InitKind::NaiveMatricization => init_naive_operator(&cum, self.d()),
        }
    }
}

/// One step of `a ← normalize(a − (1/3) E X (a⊤X)³)`.
pub fn fixed_point_step<M: MomentModel>(model: &M, a: &DVector<f64>) -> Result<DVector<f64>> {
    check_unit(a, model.dim())?;
    let next = a - model.third_moment(a)? / 3.0;
    let norm = next.norm();
    if !(norm > 1e-12) {
        return Err(Error::DegenerateUpdate);
    }
    Ok(next / norm)
}

/// Every row `Xᵢ` replaced by `Xᵢ − (a⊤Xᵢ) a`.
pub fn deflate(data: &DataMatrix, a: &DVector<f64>) -> Result<DataMatrix> {
    check_unit(a, data.d())?;
    let p = data.project(a)?;
    let mut values = data.values().clone();
    values.ger(-1.0, &p, a, 1.0);
    DataMatrix::new(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastIcaConfig {
    /// Fixed-point iteration cap `T`; `None` means `max(20, ⌈4 ln d⌉)`.
    pub max_iter: Option<usize>,
    /// Stop once `1 − |⟨a_t, a_{t−1}⟩|` falls below this. Zero runs all `T`
    /// steps.
    pub conv_tol: f64,
    pub init: InitMethod,
    pub seed: u64,
    /// Number of components to extract; `None` means all `d`.
    pub components: Option<usize>,
    /// Refined candidates with `|κ̂| <` this are treated as spurious.
    pub spurious_kurtosis: f64,
    pub max_reinit: usize,
}

impl Default for FastIcaConfig {
    fn default() -> Self {
        Self {
            max_iter: None,
            conv_tol: 1e-9,
            init: InitMethod::default(),
            seed: 0,
            components: None,
            spurious_kurtosis: 0.05,
            max_reinit: 3,
        }
    }
}

impl FastIcaConfig {
    pub fn iterations(&self, d: usize) -> usize {
        self.max_iter.unwrap_or_else(|| default_iterations(d))
    }
}

pub fn default_iterations(d: usize) -> usize {
    let log_term = (4.0 * (d.max(1) as f64).ln()).ceil() as usize;
    log_term.max(20)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDiagnostics {
    /// Winning initial candidate, in ambient coordinates.
    pub candidate: InitCandidate,
    pub attempts: usize,
    /// Every attempt ended with `|κ̂|` below the spurious threshold.
    pub spurious: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingEstimate {
    /// `d × k`, one estimated direction per column, in extraction order.
    pub a_hat: DMatrix<f64>,
    /// `f̂(âⱼ) = (1/n) Σ (âⱼ⊤Xᵢ)⁴ − 3` on the deflated data.
    pub kappa_hat: Vec<f64>,
    pub iters_used: Vec<usize>,
    pub init_diagnostics: Vec<ComponentDiagnostics>,
}

impl MixingEstimate {
    pub fn d(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn components(&self) -> usize {
        self.a_hat.ncols()
    }

    /// Largest `|⟨âᵢ, âⱼ⟩|` over `i ≠ j`.
    pub fn max_coherence(&self) -> f64 {
        let g = self.a_hat.tr_mul(&self.a_hat);
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..i {
                worst = worst.max(g[(i, j)].abs());
            }
        }
        worst
    }

    /// Near-orthogonality diagnostic: coherence above 0.2.
    pub fn coherence_flag(&self) -> bool {
        self.max_coherence() > 0.2
    }
}

/// Orthonormal basis of the complement of the columns in `found`.
fn complement_basis(found: &[DVector<f64>], d: usize) -> DMatrix<f64> {
    if found.is_empty() {
        return DMatrix::identity(d, d);
    }
    let mut p = DMatrix::<f64>::identity(d, d);
    for a in found {
        p.ger(-1.0, a, a, 1.0);
    }
    let p = (&p + p.transpose()) * 0.5;
    let eig = SymmetricEigen::new(p);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let r = d - found.len();
    let cols: Vec<DVector<f64>> =
        order[..r].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    DMatrix::from_columns(&cols)
}

fn orthogonalize(mut a: DVector<f64>, found: &[DVector<f64>]) -> DVector<f64> {
    for f in found {
        let c = f.dot(&a);
        a.axpy(-c, f, 1.0);
    }
    a
}

struct Refined {
    direction: DVector<f64>,
    kappa: f64,
    iters: usize,
}

fn refine<M: MomentModel>(
    model: &M,
    start: DVector<f64>,
    found: &[DVector<f64>],
    t_max: usize,
    conv_tol: f64,
) -> Result<Refined> {
    let mut a = start;
    let mut iters = 0;
    while iters < t_max {
        let next = fixed_point_step(model, &a)?;
        let next = orthogonalize(next, found);
        let norm = next.norm();
        if !(norm > 1e-12) {
            return Err(Error::DegenerateUpdate);
        }
        let next = next / norm;
        let delta = 1.0 - next.dot(&a).abs();
        a = next;
        iters += 1;
        if delta < conv_tol {
            break;
        }
    }
    let kappa = model.fourth_moment(&a)? - 3.0;
    Ok(Refined { direction: a, kappa, iters })
}

/// Deflationary FastICA on whitened data or an exact population model.
pub fn fit<M: MomentModel>(model: &M, cfg: &FastIcaConfig) -> Result<MixingEstimate> {
    let d = model.dim();
    if !(cfg.conv_tol >= 0.0) {
        return Err(Error::InvalidInput(format!("conv_tol must be non-negative, got {}", cfg.conv_tol)));
    }
    let k = cfg.components.unwrap_or(d).min(d);
    let t_max = cfg.iterations(d);
    let base_energy = model.energy();

    let mut current: Option<M> = None;
    let mut found: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut kappa_hat = Vec::with_capacity(k);
    let mut iters_used = Vec::with_capacity(k);
    let mut diagnostics = Vec::with_capacity(k);

    for j in 0..k {
        let cur = current.as_ref().unwrap_or(model);
        let basis = complement_basis(&found, d);
        let reduced = cur.in_basis(&basis)?;
        if !(reduced.energy() > 1e-12 * base_energy) {
            return Err(Error::RankCollapse {
                component: j,
                d,
                partial: Box::new(assemble(d, &found, kappa_hat, iters_used, diagnostics)),
            });
        }
        let slices = cfg.init.slices_for(reduced.dim());
        let attempts = if cfg.init.kind.is_randomized() { cfg.max_reinit + 1 } else { 1 };

        let mut best: Option<(Refined, InitCandidate)> = None;
        let mut used = 0;
        for attempt in 0..attempts {
            used += 1;
            let seed = derive_seed(cfg.seed, &[j as u64, attempt as u64]);
            let mut cand = reduced.initialize(cfg.init.kind, slices, seed)?;
            let start = (&basis * &cand.direction).normalize();
            cand.direction = start.clone();
            let refined = refine(cur, start, &found, t_max, cfg.conv_tol)?;
            let good = refined.kappa.abs() >= cfg.spurious_kurtosis;
            if best.as_ref().map_or(true, |(b, _)| refined.kappa.abs() > b.kappa.abs()) {
                best = Some((refined, cand));
            }
            if good {
                break;
            }
        }
        let (refined, cand) = best.expect("at least one attempt");
        let spurious = refined.kappa.abs() < cfg.spurious_kurtosis;
        diagnostics.push(ComponentDiagnostics { candidate: cand, attempts: used, spurious });
        kappa_hat.push(refined.kappa);
        iters_used.push(refined.iters);
        let next = cur.deflated(&refined.direction)?;
        found.push(refined.direction);
        current = Some(next);
    }
    Ok(assemble(d, &found, kappa_hat, iters_used, diagnostics))
}

fn assemble(
    d: usize,
    found: &[DVector<f64>],
    kappa_hat: Vec<f64>,
    iters_used: Vec<usize>,
    init_diagnostics: Vec<ComponentDiagnostics>,
) -> MixingEstimate {
    let a_hat = if found.is_empty() { DMatrix::zeros(d, 0) } else { DMatrix::from_columns(found) };
    MixingEstimate { a_hat, kappa_hat, iters_used, init_diagnostics }
}
