use nalgebra::{DMatrix, DVector};

use super::{check_len, Contraction, DataMatrix};
use crate::error::{Error, Result};

/// Largest dimension for which a dense `d⁴` tensor is built.
pub const D_MAX_DENSE: usize = 12;

/// Dense, fully symmetric fourth-order tensor. Used as a brute-force oracle
/// for the matrix-free paths.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor4 {
    d: usize,
    entries: Vec<f64>,
}

#[inline]
fn idx(d: usize, i: usize, j: usize, k: usize, l: usize) -> usize {
    i + d * (j + d * (k + d * l))
}

fn sorted4(i: usize, j: usize, k: usize, l: usize) -> [usize; 4] {
    let mut s = [i, j, k, l];
    s.sort_unstable();
    s
}

impl DenseTensor4 {
    fn check_dim(d: usize) -> Result<()> {
        if d > D_MAX_DENSE {
            return Err(Error::TooLargeForDense { d, max: D_MAX_DENSE });
        }
        if d == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        Ok(())
    }

    /// Builds the tensor from a function of sorted indices, so that every
    /// permutation of an index tuple reads the same value.
    fn from_canonical(d: usize, f: impl Fn([usize; 4]) -> f64) -> Result<Self> {
        Self::check_dim(d)?;
        let mut entries = vec![0.0; d.pow(4)];
        for l in 0..d {
            for k in 0..d {
                for j in 0..d {
                    for i in 0..d {
                        let s = sorted4(i, j, k, l);
                        if s == [i, j, k, l] {
                            entries[idx(d, i, j, k, l)] = f(s);
                        }
                    }
                }
            }
        }
        for l in 0..d {
            for k in 0..d {
                for j in 0..d {
                    for i in 0..d {
                        let [a, b, c, e] = sorted4(i, j, k, l);
                        entries[idx(d, i, j, k, l)] = entries[idx(d, a, b, c, e)];
                    }
                }
            }
        }
        Ok(Self { d, entries })
    }

    /// `(1/n) Σ Xᵢ⊗Xᵢ⊗Xᵢ⊗Xᵢ`.
    pub fn from_data(data: &DataMatrix) -> Result<Self> {
        let x = data.values();
        let n = data.n() as f64;
        Self::from_canonical(data.d(), |[i, j, k, l]| {
            (0..data.n()).map(|r| x[(r, i)] * x[(r, j)] * x[(r, k)] * x[(r, l)]).sum::<f64>() / n
        })
    }

    /// Gaussian baseline `δᵢⱼδₖₗ + δᵢₖδⱼₗ + δᵢₗδⱼₖ`.
    pub fn m0(d: usize) -> Result<Self> {
        Self::from_canonical(d, |[i, j, k, l]| {
            let delta = |a: usize, b: usize| f64::from(u8::from(a == b));
            delta(i, j) * delta(k, l) + delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k)
        })
    }

    /// `M₀ + Σₖ κₖ aₖ⊗aₖ⊗aₖ⊗aₖ`, the population moment of whitened ICA data.
    pub fn odeco(mixing: &DMatrix<f64>, kappa: &[f64]) -> Result<Self> {
        let d = mixing.nrows();
        if kappa.len() != mixing.ncols() {
            return Err(Error::DimensionMismatch { expected: mixing.ncols(), got: kappa.len() });
        }
        let base = Self::m0(d)?;
        let cum = Self::from_canonical(d, |[i, j, k, l]| {
            kappa
                .iter()
                .enumerate()
                .map(|(c, &kc)| {
                    kc * mixing[(i, c)] * mixing[(j, c)] * mixing[(k, c)] * mixing[(l, c)]
                })
                .sum()
        })?;
        Ok(base.add(&cum, 1.0))
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.entries[idx(self.d, i, j, k, l)]
    }

    /// `self + scale · other`.
    pub fn add(&self, other: &Self, scale: f64) -> Self {
        assert_eq!(self.d, other.d);
        Self {
            d: self.d,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + scale * b).collect(),
        }
    }

    /// Largest deviation over all 24 index permutations.
    pub fn symmetry_defect(&self) -> f64 {
        const PERMS: [[usize; 4]; 24] = [
            [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
            [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
            [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
            [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
        ];
        let d = self.d;
        let mut worst: f64 = 0.0;
        for l in 0..d {
            for k in 0..d {
                for j in 0..d {
                    for i in 0..d {
                        let t = [i, j, k, l];
                        let v = self.get(i, j, k, l);
                        for p in &PERMS {
                            let w = self.get(t[p[0]], t[p[1]], t[p[2]], t[p[3]]);
                            worst = worst.max((v - w).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    /// Contraction along the trailing modes, same convention as
    /// [`super::contract4`].
    pub fn contract(&self, directions: &[&DVector<f64>]) -> Contraction {
        let d = self.d;
        for u in directions {
            check_len(u, d).expect("direction length");
        }
        // Contract the last mode repeatedly.
        let mut current = self.entries.clone();
        let mut order = 4;
        for u in directions.iter().rev() {
            let stride = d.pow(order as u32 - 1);
            let mut next = vec![0.0; stride];
            for (m, um) in u.iter().enumerate() {
                for (t, slot) in next.iter_mut().enumerate() {
                    *slot += current[t + stride * m] * um;
                }
            }
            current = next;
            order -= 1;
        }
        match order {
            0 => Contraction::Scalar(current[0]),
            1 => Contraction::Vector(DVector::from_vec(current)),
            2 => Contraction::Matrix(DMatrix::from_column_slice(d, d, &current)),
            _ => Contraction::Tensor3(current),
        }
    }

    /// `T ×₃,₄ W`.
    pub fn slice(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.d;
        DMatrix::from_fn(d, d, |i, j| {
            let mut acc = 0.0;
            for l in 0..d {
                for k in 0..d {
                    acc += self.get(i, j, k, l) * w[(k, l)];
                }
            }
            acc
        })
    }

    /// `d² × d²` matricization fusing modes (1,2) and (3,4), with
    /// `vec` in column-major order.
    pub fn matricize(&self) -> DMatrix<f64> {
        let d = self.d;
        DMatrix::from_fn(d * d, d * d, |r, c| self.get(r % d, r / d, c % d, c / d))
    }
}
