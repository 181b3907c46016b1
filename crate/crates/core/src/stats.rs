//! Small estimators shared by the experiments.

use std::collections::BTreeMap;

/// One-sided 99% normal quantile.
pub const Z99_ONE_SIDED: f64 = 2.326_347_874_040_840_8;
/// Two-sided 99% normal quantile.
pub const Z99_TWO_SIDED: f64 = 2.575_829_303_548_900_4;

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Standard error used by "observed <= bound + 3 sigma" checks.
///
/// The variance is evaluated at `max(observed, bound)` clamped into `[1/trials, 1/2]`
/// so that a zero observation against a small bound does not produce a zero slack.
pub fn binomial_sigma(observed: f64, bound: f64, trials: u64) -> f64 {
    if trials == 0 {
        return f64::INFINITY;
    }
    let t = trials as f64;
    let p = observed.max(bound).clamp(1.0 / t, 0.5);
    (p * (1.0 - p) / t).sqrt()
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Sample standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let (_, se) = mean_se(xs);
    se * (xs.len() as f64).sqrt()
}

/// Total variation distance between two empirical histograms.
pub fn tv_distance<K: Ord>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> f64 {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    if na == 0 || nb == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (k, &ca) in a {
        let pb = b.get(k).copied().unwrap_or(0) as f64 / nb as f64;
        sum += (ca as f64 / na as f64 - pb).abs();
    }
    for (k, &cb) in b {
        if !a.contains_key(k) {
            sum += cb as f64 / nb as f64;
        }
    }
    0.5 * sum
}

/// Expected TV between two empirical histograms of the same law, bounded via
/// `E|p̂ - q̂| <= sqrt(Var)` per bin on the pooled frequencies.
pub fn tv_noise_bound<K: Ord>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> f64 {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    if na == 0 || nb == 0 {
        return 0.0;
    }
    let mut pooled: BTreeMap<&K, u64> = BTreeMap::new();
    for (k, c) in a.iter().chain(b.iter()) {
        *pooled.entry(k).or_default() += c;
    }
    let tot = (na + nb) as f64;
    let inv = 1.0 / na as f64 + 1.0 / nb as f64;
    0.5 * pooled
        .values()
        .map(|&c| {
            let p = c as f64 / tot;
            (p * (1.0 - p) * inv).sqrt()
        })
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_point_estimate() {
        let (lo, hi) = wilson_interval(30, 100, Z99_TWO_SIDED);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo0, hi0) = wilson_interval(0, 100, Z99_TWO_SIDED);
        assert_eq!(lo0, 0.0);
        assert!(hi0 > 0.0 && hi0 < 0.1);
    }

    #[test]
    fn tv_of_identical_histograms_is_zero() {
        let a: BTreeMap<u32, u64> = [(0, 5), (1, 7)].into_iter().collect();
        assert_eq!(tv_distance(&a, &a), 0.0);
        let b: BTreeMap<u32, u64> = [(2, 3)].into_iter().collect();
        assert!((tv_distance(&a, &b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mean_se_basic() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-15);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
