//! Top-rank eigenspaces of symmetric operators given only by their action.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// A symmetric linear map on `R^N` known through block products.
pub trait SymOperator {
    fn dim(&self) -> usize;

    /// `op · block` for an `N × k` block.
    fn apply_block(&self, block: &DMatrix<f64>) -> DMatrix<f64>;

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let block = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        DVector::from_column_slice(self.apply_block(&block).as_slice())
    }
}

/// Explicit symmetric matrix.
#[derive(Debug, Clone)]
pub struct DenseSymOperator(pub DMatrix<f64>);

impl SymOperator for DenseSymOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply_block(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        &self.0 * block
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralConfig {
    pub oversample: usize,
    pub power_iters: usize,
    /// Keep iterating past `power_iters` until the Ritz residual
    /// `‖op U − U Λ‖_F / ‖Λ‖` falls below this value.
    pub residual_tol: Option<f64>,
    pub max_power_iters: usize,
    /// Operators with `N ≤ dense_factor · (rank + oversample)` are
    /// materialized and decomposed exactly. Zero forces the randomized path.
    pub dense_factor: usize,
    /// Relative tolerance of the randomized symmetry probe.
    pub symmetry_tol: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            oversample: 10,
            power_iters: 2,
            residual_tol: None,
            max_power_iters: 50,
            dense_factor: 4,
            symmetry_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// `N × rank`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Eigenvalues ordered by decreasing magnitude.
    pub values: DVector<f64>,
    /// Set when the sketch lost rank during orthonormalization.
    pub rank_deficient: bool,
    pub residual: f64,
}

impl SpectralDecomposition {
    /// Projection `U U⊤`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

/// Randomized probe of `⟨v, op w⟩ = ⟨op v, w⟩` on two random pairs.
pub fn check_symmetry(op: &dyn SymOperator, tol: f64, rng: &mut Rng) -> Result<()> {
    let n = op.dim();
    let probe = DMatrix::from_fn(n, 4, |_, _| StandardNormal.sample(&mut *rng));
    let image = op.apply_block(&probe);
    let mut worst: f64 = 0.0;
    for p in [(0, 1), (2, 3)] {
        let (v, w) = (probe.column(p.0), probe.column(p.1));
        let (opv, opw) = (image.column(p.0), image.column(p.1));
        let lhs = v.dot(&opw);
        let rhs = opv.dot(&w);
        let scale = v.norm() * opw.norm() + opv.norm() * w.norm();
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    if worst > tol {
        return Err(Error::Asymmetric { defect: worst });
    }
    Ok(())
}

fn orthonormalize(y: DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let k = y.ncols();
    let qr = y.qr();
    let r = qr.r();
    let r00 = r[(0, 0)].abs();
    let deficient = r00 == 0.0 || (0..k).any(|i| r[(i, i)].abs() <= 1e-12 * r00);
    (qr.q(), deficient)
}

/// Eigenpairs of the symmetric `k × k` matrix, ordered by decreasing |λ|.
fn sorted_eigen(b: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let sym = (&b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()).then(a.cmp(&b))
    });
    let vecs = DMatrix::from_columns(
        &order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>(),
    );
    let vals = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    (vecs, vals)
}

fn ritz_residual(image: &DMatrix<f64>, basis: &DMatrix<f64>, values: &DVector<f64>) -> f64 {
    let scaled = basis * DMatrix::from_diagonal(values);
    let denom = values.norm();
    if denom == 0.0 {
        image.norm()
    } else {
        (image - scaled).norm() / denom
    }
}

/// Top-`rank` eigenspace (by magnitude) of a symmetric operator by randomized
/// subspace iteration, with an exact dense path for small operators.
pub fn rank_d_spectral(
    op: &dyn SymOperator,
    rank: usize,
    cfg: &SpectralConfig,
    rng: &mut Rng,
) -> Result<SpectralDecomposition> {
    let n = op.dim();
    if rank == 0 || rank > n {
        return Err(Error::InvalidInput(format!("rank {rank} outside 1..={n}")));
    }
    check_symmetry(op, cfg.symmetry_tol, rng)?;
    let k = (rank + cfg.oversample).min(n);

    if n <= cfg.dense_factor * k {
        let full = op.apply_block(&DMatrix::identity(n, n));
        let (vecs, vals) = sorted_eigen(full.clone());
        let basis = vecs.columns(0, rank).into_owned();
        let values = vals.rows(0, rank).into_owned();
        let res = ritz_residual(&(&full * &basis), &basis, &values);
        return Ok(SpectralDecomposition { basis, values, rank_deficient: false, residual: res });
    }

    let omega = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut *rng));
    let (mut q, mut deficient) = orthonormalize(op.apply_block(&omega));
    let mut iters = 0;
    loop {
        let image = op.apply_block(&q);
        let small = q.tr_mul(&image);
        let (vecs, vals) = sorted_eigen(small);
        let top = vecs.columns(0, rank);
        let basis = &q * top;
        let values = vals.rows(0, rank).into_owned();
        // op U = (op Q) V, so the residual needs no extra application.
        let res = ritz_residual(&(&image * top), &basis, &values);

        let done_fixed = iters >= cfg.power_iters;
        let converged = match cfg.residual_tol {
            Some(tol) => done_fixed && (res <= tol || iters >= cfg.max_power_iters),
            None => done_fixed,
        };
        if converged {
            return Ok(SpectralDecomposition {
                basis,
                values,
                rank_deficient: deficient,
                residual: res,
            });
        }
        let (next, def) = orthonormalize(image);
        q = next;
        deficient |= def;
        iters += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;

    fn diag_op(values: &[f64]) -> DenseSymOperator {
        DenseSymOperator(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    fn random_orthogonal(n: usize, rng: &mut crate::rng::Rng) -> DMatrix<f64> {
        let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut *rng));
        g.qr().q()
    }

    #[test]
    fn diagonal_operator_dense_and_randomized() {
        let mut vals = vec![0.0; 9];
        vals[..3].copy_from_slice(&[5.0, 4.0, 3.0]);
        let op = diag_op(&vals);
        for dense_factor in [4, 0] {
            let cfg = SpectralConfig { dense_factor, ..Default::default() };
            let mut rng = substream(1, &[]);
            let dec = rank_d_spectral(&op, 3, &cfg, &mut rng).unwrap();
            for (i, want) in [5.0, 4.0, 3.0].iter().enumerate() {
                assert!((dec.values[i] - want).abs() < 1e-10);
                assert!((dec.basis[(i, i)].abs() - 1.0).abs() < 1e-10);
            }
            let gram = dec.basis.tr_mul(&dec.basis);
            assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-10);
        }
    }

    #[test]
    fn negative_eigenvalues_rank_by_magnitude() {
        let op = diag_op(&[1.0, -6.0, 0.5, 2.0, 0.0, 0.0]);
        let mut rng = substream(2, &[]);
        let dec = rank_d_spectral(&op, 2, &SpectralConfig::default(), &mut rng).unwrap();
        assert!((dec.values[0] + 6.0).abs() < 1e-12);
        assert!((dec.values[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_operator_is_rejected() {
        let mut m = DMatrix::<f64>::identity(5, 5);
        m[(0, 1)] = 3.0;
        let mut rng = substream(3, &[]);
        let err = rank_d_spectral(&DenseSymOperator(m), 2, &SpectralConfig::default(), &mut rng);
        assert!(matches!(err, Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn rank_deficiency_is_reported_not_fatal() {
        let mut vals = vec![0.0; 100];
        vals[0] = 1.0;
        let cfg = SpectralConfig { dense_factor: 0, ..Default::default() };
        let mut rng = substream(4, &[]);
        let dec = rank_d_spectral(&diag_op(&vals), 3, &cfg, &mut rng).unwrap();
        assert!(dec.rank_deficient);
        assert!((dec.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = substream(5, &[]);
        let q = random_orthogonal(60, &mut rng);
        let spectrum = DVector::from_fn(60, |i, _| 1.0 / (1.0 + i as f64));
        let op = DenseSymOperator(&q * DMatrix::from_diagonal(&spectrum) * q.transpose());
        let cfg = SpectralConfig { dense_factor: 0, ..Default::default() };
        let a = rank_d_spectral(&op, 4, &cfg, &mut substream(6, &[])).unwrap();
        let b = rank_d_spectral(&op, 4, &cfg, &mut substream(6, &[])).unwrap();
        assert_eq!(a.basis, b.basis);
        assert_eq!(a.values, b.values);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn projector_is_idempotent_with_trace_rank(seed in 0u64..1000, rank in 1usize..6) {
            let n = 40;
            let mut rng = substream(seed, &[]);
            let g: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
            let op = DenseSymOperator(&g * g.transpose());
            let cfg = SpectralConfig { dense_factor: 0, ..Default::default() };
            let dec = rank_d_spectral(&op, rank, &cfg, &mut rng).unwrap();
            let p = dec.projector();
            prop_assert!((&p * &p - &p).norm() < 1e-8);
            prop_assert!((p.trace() - rank as f64).abs() < 1e-8);
        }

        #[test]
        fn residual_small_with_eigengap(seed in 0u64..1000, rank in 1usize..5) {
            let n = 50;
            let mut rng = substream(seed, &[]);
            let q = random_orthogonal(n, &mut rng);
            // Top eigenvalues in [1, 2], the rest at least 0.1 below λ_rank.
            let spectrum = DVector::from_fn(n, |i, _| {
                if i < rank { 2.0 - 0.2 * i as f64 } else { 0.8 * (0.9f64).powi(i as i32) }
            });
            let op = DenseSymOperator(&q * DMatrix::from_diagonal(&spectrum) * q.transpose());
            let cfg = SpectralConfig {
                dense_factor: 0,
                residual_tol: Some(1e-7),
                max_power_iters: 200,
                ..Default::default()
            };
            let dec = rank_d_spectral(&op, rank, &cfg, &mut rng).unwrap();
            prop_assert!(dec.residual <= 1e-6, "residual {}", dec.residual);
            let gram = dec.basis.tr_mul(&dec.basis);
            prop_assert!((gram - DMatrix::identity(rank, rank)).norm() < 1e-10);
        }
    }
}
