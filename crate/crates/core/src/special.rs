//! Log-space helpers for the Gaussian density and distribution function.

use std::f64::consts::{LN_2, SQRT_2};

/// `0.5 * ln(2π)`
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(a + b)` given `ln a` and `ln b`. Handles `-inf` operands.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(e^a - e^b)` for `a >= b`. Returns `-inf` when the difference vanishes.
#[inline]
pub fn log_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if b >= a {
        return f64::NEG_INFINITY;
    }
    let d = b - a;
    // ln(1 - e^d), choosing the branch with the better conditioning
    let tail = if d > -LN_2 { (-d.exp_m1()).ln() } else { (-d.exp()).ln_1p() };
    a + tail
}

/// Numerically stable `ln Σ exp(v)`; `-inf` for an empty or all-`-inf` slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    let s: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

/// Log of the standard normal density.
#[inline]
pub fn log_norm_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Mills ratio `(1 - Φ(t)) / φ(t)` for `t >= 5`, by backward evaluation of
/// the continued fraction `1/(t + 1/(t + 2/(t + 3/(t + ...))))`.
fn mills_ratio_large(t: f64) -> f64 {
    let mut f = t;
    for k in (1..=120).rev() {
        f = t + k as f64 / f;
    }
    1.0 / f
}

/// `ln Φ(z)`, accurate in relative terms across the whole real line.
pub fn log_ndtr(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z > 0.0 {
        // Φ(z) = 1 - Φ(-z), complement below one half
        (-0.5 * libm::erfc(z / SQRT_2)).ln_1p()
    } else if z > -5.0 {
        (0.5 * libm::erfc(-z / SQRT_2)).ln()
    } else if z == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        log_norm_pdf(z) + mills_ratio_large(-z).ln()
    }
}

/// `ln(Φ(u) - Φ(v))` for `u > v`, without cancellation in either tail.
pub fn log_ndtr_diff(u: f64, v: f64) -> f64 {
    if u <= v {
        return f64::NEG_INFINITY;
    }
    if u <= 0.0 {
        log_sub_exp(log_ndtr(u), log_ndtr(v))
    } else if v >= 0.0 {
        log_sub_exp(log_ndtr(-v), log_ndtr(-u))
    } else {
        // straddles zero: both pieces are at least of moderate size
        (norm_cdf(u) - norm_cdf(v)).ln()
    }
}

/// Standard normal quantile by Newton iteration on `norm_cdf`, used by the
/// Kolmogorov-style checks. Accurate to about 1e-13 on `(1e-300, 1)`.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    // bisection on the log scale for a safe start, then Newton
    let target = p.ln();
    let (mut lo, mut hi) = (-40.0_f64, 10.0_f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if log_ndtr(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..3 {
        let step = (log_ndtr(z) - target) * (log_ndtr(z) - log_norm_pdf(z)).exp();
        if !step.is_finite() {
            break;
        }
        z -= step;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    // reference values: log(ncdf(z)) at 40 digits
    const LOG_NDTR_REF: &[(f64, f64)] = &[
        (-1000.0, -500_007.826_694_812_2),
        (-40.0, -804.608_442_013_754_6),
        (-10.0, -53.231_285_150_512_47),
        (-5.0, -15.064_998_393_988_725),
        (-1.0, -1.841_021_645_009_263_5),
        (0.0, -std::f64::consts::LN_2),
        (2.0, -0.023_012_909_328_963_49),
        (8.0, -6.220_960_574_271_786e-16),
    ];

    #[test]
    fn log_ndtr_matches_reference() {
        for &(z, want) in LOG_NDTR_REF {
            let got = log_ndtr(z);
            assert!(((got - want) / want).abs() < 1e-13, "z={z}: got {got}, want {want}");
        }
    }

    #[test]
    fn log_ndtr_is_continuous_at_branch_points() {
        for &z in &[-5.0_f64, 0.0] {
            let l = log_ndtr(z - 1e-12);
            let r = log_ndtr(z + 1e-12);
            assert!(((l - r) / l).abs() < 1e-10, "jump at {z}: {l} vs {r}");
        }
    }

    #[test]
    fn log_add_and_sub_round_trip() {
        let a = -3.0;
        let b = -5.5;
        let s = log_add_exp(a, b);
        assert!((log_sub_exp(s, b) - a).abs() < 1e-14);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 2.0), 2.0);
        assert_eq!(log_sub_exp(1.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn ndtr_diff_both_tails() {
        // Φ(-30) - Φ(-31) ≈ Φ(-30)
        let d = log_ndtr_diff(-30.0, -31.0);
        assert!((d - log_ndtr(-30.0)).abs() < 1e-10);
        let d = log_ndtr_diff(31.0, 30.0);
        assert!((d - log_ndtr(-30.0)).abs() < 1e-10);
        let mid = log_ndtr_diff(1.0, -1.0);
        assert!((mid.exp() - 0.682_689_492_137_085_9).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.9, 0.999] {
            let z = norm_quantile(p);
            assert!((norm_cdf(z) - p).abs() < 1e-12 * p.max(1e-3));
        }
    }
}
