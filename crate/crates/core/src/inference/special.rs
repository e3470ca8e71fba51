//! Special functions for the inference formulas.
//!
//! The regularized incomplete gamma uses the series for `x < a + 1` and the
//! Lentz continued fraction otherwise, both to about 1e-15 relative. The
//! normal quantile starts from Acklam's rational approximation (relative
//! error 1.2e-9) and takes one Halley step, which brings it to near machine
//! precision.

use std::f64::consts::{PI, SQRT_2};

const EPS: f64 = 1e-16;
const MAX_TERMS: usize = 10_000;

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..MAX_TERMS {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 − P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_continued_fraction(a, x)
    }
}

pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        2.0 - gamma_q(0.5, x * x)
    }
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of the standard normal CDF on `(0, 1)`.
pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let low = 0.02425;
    let x = if p < low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley refinement.
    let e = norm_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// CDF of the chi-square law with `dof` degrees of freedom.
pub fn chi2_cdf(x: f64, dof: f64) -> f64 {
    gamma_p(0.5 * dof, 0.5 * x)
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `sample` and
/// `cdf`.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |worst: f64, (i, &x)| {
        let f = cdf(x);
        worst.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Shapiro-Francia normality test with Royston's normal approximation of
/// `ln(1 − W')`, valid for `5 ≤ n ≤ 5000`. Returns `(W', p-value)`.
pub fn shapiro_francia(sample: &[f64]) -> (f64, f64) {
    let n = sample.len();
    assert!((5..=5000).contains(&n), "Shapiro-Francia needs 5 ≤ n ≤ 5000");
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let m: Vec<f64> = (1..=n).map(|i| norm_ppf((i as f64 - 0.375) / (nf + 0.25))).collect();
    let mean = xs.iter().sum::<f64>() / nf;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let mm: f64 = m.iter().map(|v| v * v).sum();
    let mx: f64 = m.iter().zip(&xs).map(|(a, b)| a * b).sum();
    let w = mx * mx / (mm * ss);
    let u = nf.ln();
    let v = u.ln();
    let mu = -1.2725 + 1.0521 * (v - u);
    let sigma = 1.0308 - 0.26758 * (v + 2.0 / u);
    let z = ((1.0 - w).ln() - mu) / sigma;
    (w, 1.0 - norm_cdf(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand_distr::{Distribution, Exp1, StandardNormal};

    fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> f64 {
        let h = (hi - lo) / steps as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..steps {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn gamma_function_values() {
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn erfc_against_quadrature() {
        for &x in &[0.0, 0.3, 1.0, 2.2, 4.0] {
            let integral = simpson(|t| (-t * t).exp(), 0.0, x, 4000) * 2.0 / PI.sqrt();
            assert!((erfc(x) - (1.0 - integral)).abs() < 1e-12, "x = {x}");
            assert!((erfc(-x) - (1.0 + integral)).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_quantile() {
        assert!((norm_ppf(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
        // Bisection on the CDF as an independent oracle.
        for &p in &[1e-6, 0.01, 0.3, 0.5, 0.77, 0.999] {
            let (mut lo, mut hi) = (-10.0, 10.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if norm_cdf(mid) < p { lo = mid } else { hi = mid }
            }
            assert!((norm_ppf(p) - 0.5 * (lo + hi)).abs() < 1e-8, "p = {p}");
        }
    }

    #[test]
    fn chi2_median_and_quadrature() {
        // Median of χ²₂ is 2 ln 2.
        assert!((chi2_cdf(2.0 * 2f64.ln(), 2.0) - 0.5).abs() < 1e-12);
        for &k in &[1.0, 3.0, 10.0, 25.0] {
            let (mut lo, mut hi): (f64, f64) = (0.0, 200.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                // Substituting t = s² removes the singularity at 0 for k = 1.
                let f = simpson(
                    |s| {
                        if s <= 0.0 && k < 2.0 { return 2.0 / (2f64.sqrt() * ln_gamma(0.5).exp()); }
                        if s <= 0.0 { return 0.0; }
                        2.0 * ((k - 1.0) * s.ln() - s * s / 2.0 - (k / 2.0) * 2f64.ln() - ln_gamma(k / 2.0)).exp()
                    },
                    0.0,
                    mid.sqrt(),
                    20_000,
                );
                if f < 0.5 { lo = mid } else { hi = mid }
            }
            let median = 0.5 * (lo + hi);
            assert!((chi2_cdf(median, k) - 0.5).abs() < 1e-6, "k = {k}");
        }
        assert_eq!(chi2_cdf(0.0, 10.0), 0.0);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let sample: Vec<f64> = (0..1000).map(|i| norm_ppf((i as f64 + 0.5) / 1000.0)).collect();
        assert!(ks_distance(&sample, norm_cdf) <= 0.5 / 1000.0 + 1e-12);
    }

    #[test]
    fn shapiro_francia_separates_normal_from_exponential() {
        let mut rng = substream(1, &[]);
        let normal: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
        let expo: Vec<f64> = (0..200).map(|_| Exp1.sample(&mut rng)).collect();
        assert!(shapiro_francia(&normal).1 > 0.01);
        assert!(shapiro_francia(&expo).1 < 1e-4);
    }

    #[test]
    fn shapiro_francia_is_calibrated() {
        let rejections = (0..400)
            .filter(|&r| {
                let mut rng = substream(2, &[r]);
                let x: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut rng)).collect();
                shapiro_francia(&x).1 < 0.05
            })
            .count();
        // Binomial(400, 0.05): mean 20, sd ≈ 4.4.
        assert!((5..=36).contains(&rejections), "{rejections}");
    }
}
