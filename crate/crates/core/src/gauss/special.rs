//! Standard normal density, distribution function and quantiles.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function `Φ(x)`.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)`, accurate in relative terms for large `x`.
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Inverse of the upper tail: the `x` with `1 - Φ(x) = q`, for `q` in `(0, 1)`.
pub fn isf(q: f64) -> f64 {
    assert!(q > 0.0 && q < 1.0, "isf argument {q} outside (0, 1)");
    if q > 0.5 {
        return -isf(1.0 - q);
    }
    if q == 0.5 {
        return 0.0;
    }
    // sf is decreasing on [0, 40] and sf(40) underflows every positive double
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sf(mid) > q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let d = pdf(x);
    if d > 0.0 {
        let step = (sf(x) - q) / d;
        if step.abs() < (hi - lo).max(f64::EPSILON * x) * 4.0 {
            return x + step;
        }
    }
    x
}

/// Standard normal quantile `Φ^{-1}(p)`, for `p` in `(0, 1)`.
pub fn quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument {p} outside (0, 1)");
    if p < 0.5 {
        -isf(p)
    } else {
        isf(1.0 - p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_k 2^k x^(2k+1) / (1*3*...*(2k+1)),
    // a series with positive terms only, so no cancellation for moderate x.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        while term.abs() > 1e-18 * sum.abs() {
            k += 1.0;
            term *= 2.0 * x * x / (2.0 * k + 1.0);
            sum += term;
        }
        2.0 / PI.sqrt() * (-x * x).exp() * sum
    }

    fn tail_lower(r: f64) -> f64 {
        pdf(r) * (1.0 / r - 1.0 / r.powi(3))
    }

    fn tail_upper(r: f64) -> f64 {
        pdf(r) * (1.0 / r - 1.0 / r.powi(3) + 3.0 / r.powi(5))
    }

    #[test]
    fn cdf_matches_series_oracle() {
        for i in -500..=500 {
            let x = i as f64 / 100.0;
            let oracle = 0.5 * (1.0 + erf_series(x * FRAC_1_SQRT_2));
            assert!((cdf(x) - oracle).abs() < 1e-14, "x = {x}");
        }
    }

    #[test]
    fn upper_tail_within_asymptotic_bracket() {
        for i in 0..=270 {
            let r = 3.0 + i as f64 / 10.0;
            let s = sf(r);
            assert!(s >= tail_lower(r) * (1.0 - 1e-12), "r = {r}");
            assert!(s <= tail_upper(r) * (1.0 + 1e-12), "r = {r}");
        }
    }

    #[test]
    fn sf_and_cdf_are_complementary() {
        for i in -80..=80 {
            let x = i as f64 / 10.0;
            assert!((cdf(x) + sf(x) - 1.0).abs() < 1e-15);
            assert!((sf(x) - cdf(-x)).abs() < 1e-16);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in -500..=500 {
            let x = i as f64 / 100.0;
            assert!((quantile(cdf(x)) - x).abs() < 1e-9, "x = {x}");
        }
        for k in 0..=1200 {
            // log-spaced probabilities in [1e-12, 1 - 1e-12]
            let lo = 10f64.powf(-12.0 + k as f64 * 0.01);
            for p in [lo.min(0.5), 1.0 - lo.min(0.5)] {
                let back = cdf(quantile(p));
                assert!((back - p).abs() <= 1e-9 * p.min(1.0 - p).max(1e-12), "p = {p}");
            }
        }
        assert!((quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert_eq!(quantile(0.5), 0.0);
    }

    #[test]
    fn isf_reaches_deep_tail() {
        for &q in &[1e-5, 1e-10, 1e-30, 1e-100, 1e-300] {
            let x = isf(q);
            assert!(((sf(x) - q) / q).abs() < 1e-10, "q = {q}");
        }
    }
}
