//! Random variate generation: the seedable chain RNG, normal CDF and
//! quantile, truncated normals by CDF inversion, gamma and Wishart draws.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use libm::erfc;

use crate::error::{McrError, Result};
use crate::linalg::cholesky;

pub type ChainRng = ChaCha8Rng;

/// RNG for chain `stream` of a run seeded with `seed`. Streams are
/// independent ChaCha substreams.
pub fn chain_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const TAIL_SWITCH: f64 = -6.0;

#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x == f64::INFINITY {
        1.0
    } else {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }
}

/// `log Φ(x)`, accurate far into the lower tail.
pub fn log_std_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        return std_normal_cdf(x).ln();
    }
    // asymptotic series of the Mills ratio
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) / x2;
        sum += term;
    }
    -0.5 * x2 - LN_SQRT_2PI - (-x).ln() + sum.ln()
}

/// `Φ⁻¹(p)` by rational approximation followed by one Halley step.
pub fn std_normal_quantile(p: f64) -> f64 {
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
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = std_normal_cdf(x) - p;
    let u = e * (0.5 * x * x + LN_SQRT_2PI).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Solves `log Φ(x) = target` for `x` deep in the lower tail.
fn log_cdf_inverse(target: f64) -> f64 {
    // leading-order guess from -x²/2 - ln(-x) - ln√(2π) = target
    let mut x = -(-2.0 * target).sqrt();
    for _ in 0..3 {
        x = -(-2.0 * (target + (-x).ln() + LN_SQRT_2PI)).sqrt();
    }
    for _ in 0..50 {
        let f = log_std_normal_cdf(x) - target;
        let slope = (-0.5 * x * x - LN_SQRT_2PI - log_std_normal_cdf(x)).exp();
        let step = f / slope;
        x -= step;
        if step.abs() < 1e-14 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Draws from `N(0, 1)` truncated to `[a, b]`, `a ≤ b`, with `b ≤ -a`.
fn lower_truncated_std<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if b < TAIL_SWITCH {
        let log_hi = log_std_normal_cdf(b);
        let log_lo = log_std_normal_cdf(a);
        let ratio = (log_lo - log_hi).exp();
        let target = log_hi + (ratio + u * (1.0 - ratio)).ln();
        return log_cdf_inverse(target).clamp(a, b);
    }
    let lo = std_normal_cdf(a);
    let hi = std_normal_cdf(b);
    let x = std_normal_quantile(lo + u * (hi - lo));
    x.clamp(a, b)
}

/// Draws from `N(mean, sd²)` truncated to `[lower, upper]` by inverting the
/// CDF. Either bound may be infinite. Intervals are reflected so that the
/// inversion always works on the lower half-line, where `Φ` keeps full
/// relative precision; intervals lying entirely beyond six standard
/// deviations are inverted in log space.
pub fn truncated_normal<R: Rng + ?Sized>(
    mean: f64,
    sd: f64,
    lower: f64,
    upper: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(lower <= upper) || !(sd > 0.0) || !mean.is_finite() {
        return Err(McrError::Consistency(format!(
            "truncated normal with mean {mean}, sd {sd} on [{lower}, {upper}]"
        )));
    }
    if lower == upper {
        return Ok(lower);
    }
    if lower == f64::NEG_INFINITY && upper == f64::INFINITY {
        let z: f64 = rng.sample(StandardNormal);
        return Ok(mean + sd * z);
    }
    let a = (lower - mean) / sd;
    let b = (upper - mean) / sd;
    let z = if a + b > 0.0 {
        -lower_truncated_std(-b, -a, rng)
    } else {
        lower_truncated_std(a, b, rng)
    };
    Ok((mean + sd * z).clamp(lower, upper))
}

/// Mean and variance of `N(0, 1)` truncated to `[a, b]`, computed in the
/// lower half-line and in log space so that far-tail intervals keep
/// their precision.
pub fn truncated_std_moments(a: f64, b: f64) -> (f64, f64) {
    if a + b > 0.0 {
        let (mean, var) = truncated_std_moments(-b, -a);
        return (-mean, var);
    }
    let log_hi = log_std_normal_cdf(b);
    let log_lo = log_std_normal_cdf(a);
    let log_z = log_hi + (-(log_lo - log_hi).exp()).ln_1p();
    let ratio = |x: f64| {
        if x.is_finite() {
            (-0.5 * x * x - LN_SQRT_2PI - log_z).exp()
        } else {
            0.0
        }
    };
    let (ra, rb) = (ratio(a), ratio(b));
    let ta = if a.is_finite() { a * ra } else { 0.0 };
    let tb = if b.is_finite() { b * rb } else { 0.0 };
    let mean = ra - rb;
    let var = 1.0 + ta - tb - mean * mean;
    (mean, var.max(0.0))
}

/// Gamma draw with the given shape and rate.
pub fn gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let dist = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| McrError::Numerical(format!("gamma(shape {shape}, rate {rate}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Wishart draw with scale matrix `scale` and `df` degrees of freedom
/// (mean `df · scale`), by the Bartlett decomposition.
pub fn wishart<R: Rng + ?Sized>(scale: &DMatrix<f64>, df: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if df <= p as f64 - 1.0 {
        return Err(McrError::Numerical(format!(
            "Wishart needs df > p - 1, got df = {df}, p = {p}"
        )));
    }
    let l = cholesky(scale, "Wishart scale")?.l();
    let mut bartlett = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64)
            .map_err(|e| McrError::Numerical(format!("chi-squared: {e}")))?;
        bartlett[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            bartlett[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let la = l * bartlett;
    let w = &la * la.transpose();
    Ok((&w + w.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-300, 1e-20, 1e-8, 0.001, 0.02, 0.3, 0.5, 0.77, 0.975, 0.999_999] {
            let x = std_normal_quantile(p);
            let back = std_normal_cdf(x);
            assert!(((back - p) / p).abs() < 1e-10, "p = {p}, x = {x}, back = {back}");
        }
        assert!((std_normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn log_cdf_is_continuous_at_switch() {
        let a = std_normal_cdf(-29.999_999).ln();
        let b = log_std_normal_cdf(-30.000_001);
        assert!((a - b).abs() < 1e-4);
        let x = log_cdf_inverse(log_std_normal_cdf(-45.0));
        assert!((x + 45.0).abs() < 1e-9);
    }

    #[test]
    fn truncated_draws_stay_inside() {
        let mut rng = chain_rng(3, 0);
        for &(lo, hi) in &[(0.0, f64::INFINITY), (-1.0, 1.0), (2.0, 3.0), (8.0, 8.5), (-40.0, -39.0), (f64::NEG_INFINITY, -12.0), (50.0, f64::INFINITY)] {
            for _ in 0..2000 {
                let v = truncated_normal(0.0, 1.0, lo, hi, &mut rng).unwrap();
                assert!(v >= lo && v <= hi, "{v} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn deep_tail_mean_is_sensible() {
        // E[Z | Z > 10] ≈ 10.098
        let mut rng = chain_rng(4, 0);
        let n = 20_000;
        let mean = (0..n)
            .map(|_| truncated_normal(0.0, 1.0, 10.0, f64::INFINITY, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        let (analytic, _) = truncated_std_moments(10.0, f64::INFINITY);
        assert!((mean - analytic).abs() < 0.005, "{mean} vs {analytic}");
    }

    #[test]
    fn invalid_interval_is_an_error() {
        let mut rng = chain_rng(1, 0);
        assert!(truncated_normal(0.0, 1.0, 1.0, 0.0, &mut rng).is_err());
        assert_eq!(truncated_normal(0.0, 1.0, 0.5, 0.5, &mut rng).unwrap(), 0.5);
    }

    #[test]
    fn wishart_mean() {
        let scale = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]);
        let df = 7.0;
        let mut rng = chain_rng(9, 0);
        let n = 100_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..n {
            acc += wishart(&scale, df, &mut rng).unwrap();
        }
        let mean = acc / n as f64;
        let expected = &scale * df;
        for k in 0..4 {
            let rel = (mean[k] - expected[k]).abs() / expected[k].abs();
            assert!(rel < 0.01, "entry {k}: {} vs {}", mean[k], expected[k]);
        }
    }

    #[test]
    fn streams_differ() {
        let a: u64 = chain_rng(5, 0).random();
        let b: u64 = chain_rng(5, 1).random();
        let c: u64 = chain_rng(5, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
