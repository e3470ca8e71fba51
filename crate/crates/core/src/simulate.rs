//! Synthetic ICA data with unit-variance sources of known moments.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{MomentSource, SourceMoments};
use crate::rng::{substream, Rng};
use crate::tensorops::DataMatrix;

/// Laplace scale giving unit variance.
const LAPLACE_B: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SourceFamily {
    LaplaceUnit,
    UniformUnit,
    Rademacher,
    /// `α Z + √(1 − α²) R`, Gaussian `Z` and Rademacher `R`.
    GaussRademacher { alpha: f64 },
    /// Student t with `df` degrees of freedom rescaled to unit variance.
    StudentT { df: f64 },
}

impl SourceFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceFamily::GaussRademacher { alpha } if !(0.0..1.0).contains(&alpha) => {
                Err(Error::InvalidInput(format!("alpha must lie in [0,1), got {alpha}")))
            }
            SourceFamily::StudentT { df } if !(df >= 9.0) => Err(Error::InvalidInput(format!(
                "student_t needs df ≥ 9 for a finite eighth moment, got {df}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            SourceFamily::LaplaceUnit => "laplace".into(),
            SourceFamily::UniformUnit => "uniform".into(),
            SourceFamily::Rademacher => "rademacher".into(),
            SourceFamily::GaussRademacher { alpha } => format!("gauss_rademacher:{alpha}"),
            SourceFamily::StudentT { df } => format!("student_t:{df}"),
        }
    }

    /// `(E S³, E S⁴, E S⁶)`.
    pub fn raw_moments(&self) -> (f64, f64, f64) {
        match *self {
            SourceFamily::LaplaceUnit => (0.0, 24.0 * LAPLACE_B.powi(4), 720.0 * LAPLACE_B.powi(6)),
            SourceFamily::UniformUnit => (0.0, 1.8, 27.0 / 7.0),
            SourceFamily::Rademacher => (0.0, 1.0, 1.0),
            SourceFamily::GaussRademacher { alpha } => {
                let (a2, b2) = (alpha * alpha, 1.0 - alpha * alpha);
                let es4 = 3.0 * a2 * a2 + 6.0 * a2 * b2 + b2 * b2;
                let es6 = 15.0 * a2.powi(3) + 45.0 * a2 * a2 * b2 + 15.0 * a2 * b2 * b2 + b2.powi(3);
                (0.0, es4, es6)
            }
            SourceFamily::StudentT { df } => {
                let es4 = 3.0 * (df - 2.0) / (df - 4.0);
                let es6 = 15.0 * (df - 2.0).powi(2) / ((df - 4.0) * (df - 6.0));
                (0.0, es4, es6)
            }
        }
    }

    pub fn moments(&self) -> SourceMoments {
        let (es3, es4, es6) = self.raw_moments();
        SourceMoments::new(es3, es4, es6, MomentSource::Analytic(self.name()))
    }

    pub fn kappa4(&self) -> f64 {
        self.raw_moments().1 - 3.0
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            SourceFamily::LaplaceUnit => {
                let u: f64 = rng.gen_range(-0.5..0.5);
                -LAPLACE_B * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            SourceFamily::UniformUnit => rng.gen_range(-1.0..1.0) * 3f64.sqrt(),
            SourceFamily::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            SourceFamily::GaussRademacher { alpha } => {
                let z: f64 = StandardNormal.sample(rng);
                let r = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                alpha * z + (1.0 - alpha * alpha).sqrt() * r
            }
            SourceFamily::StudentT { df } => {
                let t: f64 = StudentT::new(df).expect("validated df").sample(rng);
                t * ((df - 2.0) / df).sqrt()
            }
        }
    }
}

impl std::str::FromStr for SourceFamily {
    type Err = Error;

    /// `laplace`, `uniform`, `rademacher`, `gauss_rademacher:<alpha>` or
    /// `student_t:<df>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let param = |what: &str| -> Result<f64> {
            arg.ok_or_else(|| Error::InvalidInput(format!("{name} needs a parameter ({what})")))?
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("bad {what} for {name}: {e}")))
        };
        let family = match name {
            "laplace" => SourceFamily::LaplaceUnit,
            "uniform" => SourceFamily::UniformUnit,
            "rademacher" => SourceFamily::Rademacher,
            "gauss_rademacher" => SourceFamily::GaussRademacher { alpha: param("alpha")? },
            "student_t" => SourceFamily::StudentT { df: param("df")? },
            other => return Err(Error::InvalidInput(format!("unknown source family '{other}'"))),
        };
        family.validate()?;
        Ok(family)
    }
}

/// Bounds of the moment class `M₁⁻¹ ≤ |κ₄| ≤ M₁`, `E S⁸ ≤ M₂`. They are
/// validation thresholds only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentClass {
    pub m1: f64,
}

impl MomentClass {
    pub fn admits(&self, family: &SourceFamily) -> bool {
        let k = family.kappa4().abs();
        k >= 1.0 / self.m1 && k <= self.m1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mixing {
    Identity,
    HaarOrthogonal,
    Explicit { matrix: Vec<Vec<f64>> },
    /// `U diag(σ) V⊤` with Haar `U`, `V` and singular values spaced
    /// geometrically from 1 to `condition`.
    Conditioned { condition: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub d: usize,
    pub n: usize,
    /// One family for all components, or one per component.
    pub sources: Vec<SourceFamily>,
    pub mixing: Mixing,
    pub seed: u64,
}

impl Scenario {
    pub fn new(d: usize, n: usize, source: SourceFamily, mixing: Mixing, seed: u64) -> Self {
        Self { d, n, sources: vec![source], mixing, seed }
    }

    pub fn source(&self, k: usize) -> &SourceFamily {
        if self.sources.len() == 1 {
            &self.sources[0]
        } else {
            &self.sources[k]
        }
    }

    pub fn moments(&self) -> Vec<SourceMoments> {
        (0..self.d).map(|k| self.source(k).moments()).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(Error::InvalidInput("d and n must be positive".into()));
        }
        if self.sources.len() != 1 && self.sources.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: self.sources.len() });
        }
        for s in &self.sources {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub data: DataMatrix,
    pub mixing: DMatrix<f64>,
    pub sources: DMatrix<f64>,
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs fixed so that `R` has a positive diagonal.
pub fn sample_haar_orthogonal(d: usize, rng: &mut Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut *rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

fn mixing_matrix(scn: &Scenario) -> Result<DMatrix<f64>> {
    let d = scn.d;
    Ok(match &scn.mixing {
        Mixing::Identity => DMatrix::identity(d, d),
        Mixing::HaarOrthogonal => sample_haar_orthogonal(d, &mut substream(scn.seed, &[0])),
        Mixing::Explicit { matrix } => {
            if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, got: matrix.len() });
            }
            DMatrix::from_fn(d, d, |i, j| matrix[i][j])
        }
        Mixing::Conditioned { condition } => {
            if !(*condition >= 1.0) {
                return Err(Error::InvalidInput(format!("condition number must be ≥ 1, got {condition}")));
            }
            let u = sample_haar_orthogonal(d, &mut substream(scn.seed, &[0]));
            let v = sample_haar_orthogonal(d, &mut substream(scn.seed, &[0, 1]));
            let sv = DVector::from_fn(d, |k, _| {
                if d == 1 { 1.0 } else { condition.powf(k as f64 / (d - 1) as f64) }
            });
            u * DMatrix::from_diagonal(&sv) * v.transpose()
        }
    })
}

/// Draws `S` (`n × d`) and returns `X = S A⊤` along with `A` and `S`.
/// Component `k` comes from the substream `(seed, 1, k)`.
pub fn generate(scn: &Scenario) -> Result<Dataset> {
    scn.validate()?;
    let a = mixing_matrix(scn)?;
    let mut s = DMatrix::zeros(scn.n, scn.d);
    for k in 0..scn.d {
        let family = scn.source(k);
        let mut rng = substream(scn.seed, &[1, k as u64]);
        for i in 0..scn.n {
            s[(i, k)] = family.sample(&mut rng);
        }
    }
    let x = if matches!(scn.mixing, Mixing::Identity) { s.clone() } else { &s * a.transpose() };
    Ok(Dataset { data: DataMatrix::new(x)?, mixing: a, sources: s })
}
