//! Orthonormal coordinates on symmetric `d × d` matrices.
//!
//! The matricized fourth-moment tensor maps every antisymmetric matrix to
//! zero, so all `d² × d²` operators here are carried on the symmetric
//! subspace. Coordinates are `s_aa = V_aa` and `s_ab = √2 V_ab` for `a < b`,
//! ordered column by column over the upper triangle. The embedding into
//! `R^{d²}` is an isometry.

use nalgebra::{DMatrix, DVector};

/// Dimension `d(d+1)/2` of the symmetric subspace.
pub fn sym_dim(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Position of `(a, b)`, `a ≤ b`, in the compressed vector.
#[inline]
pub fn sym_index(a: usize, b: usize) -> usize {
    debug_assert!(a <= b);
    b * (b + 1) / 2 + a
}

/// Compressed coordinates of the symmetric part of `v`.
pub fn compress(v: &DMatrix<f64>) -> DVector<f64> {
    let d = v.nrows();
    let mut s = DVector::zeros(sym_dim(d));
    for b in 0..d {
        for a in 0..=b {
            s[sym_index(a, b)] = if a == b {
                v[(a, a)]
            } else {
                (v[(a, b)] + v[(b, a)]) / std::f64::consts::SQRT_2
            };
        }
    }
    s
}

/// Symmetric matrix with compressed coordinates `s`.
pub fn expand(s: &[f64], d: usize) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(d, d);
    for b in 0..d {
        for a in 0..=b {
            let x = s[sym_index(a, b)];
            if a == b {
                v[(a, a)] = x;
            } else {
                let y = x / std::f64::consts::SQRT_2;
                v[(a, b)] = y;
                v[(b, a)] = y;
            }
        }
    }
    v
}

/// `E⊤ v` for `v ∈ R^{d²}` in column-major `vec` order.
pub fn from_vec(v: &[f64], d: usize) -> DVector<f64> {
    compress(&DMatrix::from_column_slice(d, d, v))
}

/// `E s ∈ R^{d²}` in column-major `vec` order.
pub fn to_vec(s: &[f64], d: usize) -> DVector<f64> {
    DVector::from_column_slice(expand(s, d).as_slice())
}

/// Embedding matrix `E` (`d² × d(d+1)/2`) applied to the columns of `block`.
pub fn embed_columns(block: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(d * d, block.ncols());
    for (j, col) in block.column_iter().enumerate() {
        out.set_column(j, &to_vec(col.as_slice(), d));
    }
    out
}

/// Compressed `vec(I)`.
pub fn identity(d: usize) -> DVector<f64> {
    let mut s = DVector::zeros(sym_dim(d));
    for a in 0..d {
        s[sym_index(a, a)] = 1.0;
    }
    s
}

/// Trace of the symmetric matrix with coordinates `s`.
pub fn trace(s: &[f64], d: usize) -> f64 {
    (0..d).map(|a| s[sym_index(a, a)]).sum()
}

/// Compressed `Yᵢ = Xᵢ⊗Xᵢ` for every row of `x`, so that `⟨Yᵢ, s⟩ = Xᵢ⊤ V Xᵢ`.
pub fn lift_rows(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (c, d) = x.shape();
    let mut y = DMatrix::zeros(c, sym_dim(d));
    for b in 0..d {
        let xb = x.column(b);
        for a in 0..=b {
            let xa = x.column(a);
            let scale = if a == b { 1.0 } else { std::f64::consts::SQRT_2 };
            let mut col = y.column_mut(sym_index(a, b));
            for i in 0..c {
                col[i] = scale * xa[i] * xb[i];
            }
        }
    }
    y
}

/// Gaussian baseline `M₀` applied to each compressed column:
/// `tr(V) I + 2V` for symmetric `V`.
pub fn m0_apply_block(block: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let mut out = block * 2.0;
    for (j, col) in block.column_iter().enumerate() {
        let tr = trace(col.as_slice(), d);
        for a in 0..d {
            out[(sym_index(a, a), j)] += tr;
        }
    }
    out
}
