//! Alignment, losses and the asymptotic inference formulas for estimated
//! mixing matrices.

mod assignment;
pub mod special;
mod variance;

pub use assignment::{bottleneck_assignment, min_cost_assignment};
pub use variance::{
    chi2_alignment, confidence_intervals, joint_covariance, plugin_moments, sigma_bilinear,
    sigma_entry, sigma_linear, Chi2Alignment, Contrast, ContrastInterval, InferenceReport,
    MomentSource, SourceMoments, ENTRY_MARGIN,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// `permutation[j]` is the estimated column matched to true column `j`.
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
    /// Column `j` is `signs[j] · â_{permutation[j]}`.
    pub aligned_a_hat: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub ell_m: f64,
    pub ell_a: f64,
    /// True column matched to each estimated column under the `ℓ_M` optimum.
    pub assignment_m: Vec<usize>,
    /// Same for the `ℓ_A` optimum.
    pub assignment_a: Vec<usize>,
}

fn unit_columns(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = m.clone();
    for mut c in out.column_iter_mut() {
        let n = c.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidInput("zero or non-finite column".into()));
        }
        c /= n;
    }
    Ok(out)
}

/// Normalized columns of both matrices and their Gram matrix `Â⊤A`.
fn normalized(a_hat: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if a_hat.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: a_hat.nrows() });
    }
    if a_hat.ncols() > a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), got: a_hat.ncols() });
    }
    let (h, t) = (unit_columns(a_hat)?, unit_columns(a)?);
    let g = h.tr_mul(&t);
    Ok((h, t, g))
}

/// `sin ∠(âᵢ, aⱼ)` for every pair, computed as the norm of the residual
/// `âᵢ − ⟨âᵢ, aⱼ⟩ aⱼ` so that small angles keep full precision.
pub fn sin_matrix(a_hat: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (h, t, g) = normalized(a_hat, a)?;
    Ok(DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| {
        let c = g[(i, j)];
        let hi = h.column(i);
        let tj = t.column(j);
        let r2: f64 = hi.iter().zip(tj.iter()).map(|(x, y)| (x - c * y).powi(2)).sum();
        r2.sqrt().min(1.0)
    }))
}

/// Signed permutation maximizing `Σⱼ ⟨â_{π(j)}, aⱼ⟩²`, signs chosen so that
/// every aligned column has a non-negative inner product with its target.
pub fn align(a_hat: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<Alignment> {
    if a_hat.shape() != a.shape() || !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), got: a_hat.ncols() });
    }
    let (_, _, g) = normalized(a_hat, a)?;
    // Rows are true columns here so that the result reads as π(j).
    let cost = g.transpose().map(|c| -c * c);
    let permutation = min_cost_assignment(&cost);
    let d = a.ncols();
    let mut signs = vec![1.0; d];
    let mut aligned = DMatrix::zeros(a.nrows(), d);
    for j in 0..d {
        let col = a_hat.column(permutation[j]);
        if col.dot(&a.column(j)) < 0.0 {
            signs[j] = -1.0;
        }
        aligned.set_column(j, &(col * signs[j]));
    }
    Ok(Alignment { permutation, signs, aligned_a_hat: aligned })
}

/// Both losses. `a_hat` may hold fewer columns than `a`; each estimated
/// column is then matched to a distinct true column.
pub fn losses(a_hat: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<LossReport> {
    let sin = sin_matrix(a_hat, a)?;
    let sin2 = sin.map(|s| s * s);
    let (ell_m, assignment_m) = bottleneck_assignment(&sin);
    let assignment_a = min_cost_assignment(&sin2);
    let k = a_hat.ncols().max(1) as f64;
    let total: f64 = assignment_a.iter().enumerate().map(|(i, &j)| sin2[(i, j)]).sum();
    let ell_a = (total / k).max(0.0).sqrt();
    Ok(LossReport { ell_m, ell_a, assignment_m, assignment_a })
}

/// `ℓ_M`, panicking on malformed input. Handy in tests and experiments.
pub fn loss_m(a_hat: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    losses(a_hat, a).expect("conformable matrices").ell_m
}

pub fn loss_a(a_hat: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    losses(a_hat, a).expect("conformable matrices").ell_a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand_distr::{Distribution, StandardNormal};

    fn haar(d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = substream(seed, &[]);
        DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng)).qr().q()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn brute(a_hat: &DMatrix<f64>, a: &DMatrix<f64>) -> (f64, f64, Vec<usize>) {
        let d = a.ncols();
        let sin2 = |i: usize, j: usize| {
            let h = a_hat.column(i).normalize();
            let t = a.column(j).normalize();
            (&h - &t * h.dot(&t)).norm_squared()
        };
        let mut best_m = f64::INFINITY;
        let mut best_a = f64::INFINITY;
        let mut best_perm = Vec::new();
        for p in permutations(d) {
            let m = (0..d).map(|j| sin2(p[j], j).max(0.0).sqrt()).fold(0.0, f64::max);
            let s: f64 = (0..d).map(|j| sin2(p[j], j)).sum();
            best_m = best_m.min(m);
            if s < best_a {
                best_a = s;
                best_perm = p;
            }
        }
        (best_m, (best_a / d as f64).sqrt(), best_perm)
    }

    #[test]
    fn signed_permutation_aligns_exactly() {
        let a = haar(5, 1);
        let perm = [3usize, 0, 4, 1, 2];
        let signs = [1.0, -1.0, -1.0, 1.0, -1.0];
        let a_hat = DMatrix::from_fn(5, 5, |i, j| signs[j] * a[(i, perm[j])]);
        let al = align(&a_hat, &a).unwrap();
        assert!((&al.aligned_a_hat - &a).norm() < 1e-14);
        let rep = losses(&a_hat, &a).unwrap();
        assert!(rep.ell_m < 1e-14 && rep.ell_a < 1e-14);
    }

    #[test]
    fn swap_in_two_dimensions() {
        let a = DMatrix::<f64>::identity(2, 2);
        let a_hat = DMatrix::from_column_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let al = align(&a_hat, &a).unwrap();
        assert_eq!(al.permutation, vec![1, 0]);
        assert_eq!(al.signs, vec![1.0, 1.0]);
    }

    #[test]
    fn small_noise_keeps_identity_alignment() {
        let mut rng = substream(2, &[]);
        for d in 2..=6 {
            let a = haar(d, d as u64);
            let noise: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
            let noise = &noise * (0.1 / noise.norm());
            let mut a_hat = &a + noise;
            for mut c in a_hat.column_iter_mut() {
                c.normalize_mut();
            }
            let al = align(&a_hat, &a).unwrap();
            assert_eq!(al.permutation, (0..d).collect::<Vec<_>>());
            assert_eq!(brute(&a_hat, &a).2, al.permutation);
        }
    }

    #[test]
    fn two_column_rotation() {
        for d in [2, 4, 7] {
            let p = haar(d, 3);
            let mut q = p.clone();
            let s = std::f64::consts::FRAC_1_SQRT_2;
            q.set_column(0, &((p.column(0) + p.column(1)) * s));
            q.set_column(1, &((p.column(0) - p.column(1)) * s));
            let rep = losses(&q, &p).unwrap();
            assert!((rep.ell_m - s).abs() <= 1e-12);
            let want_a = (1.0 / d as f64).sqrt();
            assert!((rep.ell_a - want_a).abs() <= 1e-12);
        }
    }

    #[test]
    fn losses_match_brute_force() {
        let mut rng = substream(4, &[]);
        for d in 2..=6 {
            for _ in 0..20 {
                let a = haar(d, rand::Rng::gen(&mut rng));
                let a_hat = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
                let rep = losses(&a_hat, &a).unwrap();
                let (m, l, _) = brute(&a_hat, &a);
                assert!((rep.ell_m - m).abs() < 1e-15);
                assert!((rep.ell_a - l).abs() < 1e-12);
                assert!(rep.ell_a <= rep.ell_m + 1e-12);
                assert!((0.0..=1.0).contains(&rep.ell_m));
            }
        }
    }

    #[test]
    fn fewer_estimated_columns() {
        let a = haar(4, 5);
        let a_hat = DMatrix::from_columns(&[a.column(2).into_owned(), -a.column(0).into_owned()]);
        let rep = losses(&a_hat, &a).unwrap();
        assert_eq!(rep.assignment_m, vec![2, 0]);
        assert!(rep.ell_m < 1e-14);
        let bad = DMatrix::<f64>::zeros(3, 2);
        assert!(losses(&bad, &a).is_err());
    }
}
