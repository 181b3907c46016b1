//! Monte Carlo check of the concentration inequalities used throughout:
//! the spherical cap bound, the Laurent-Massart chi-square tails and
//! Johnstone's two-sided chi-square bound.

use super::rng::{fill_normals, par_blocks, RngStream};
use super::special::{pdf, sf};
use crate::error::{LabError, Result};
use crate::report::{BoundSource, ExperimentReport};
use crate::stats::binomial_sigma;

const CAP_EPS: [f64; 5] = [0.05, 0.1, 0.2, 0.3, 0.5];
const LM_T: [f64; 5] = [0.5, 1.0, 2.0, 5.0, 25.0];
const JOHNSTONE_T: [f64; 5] = [0.0, 0.1, 0.2, 0.3, 0.45];

#[derive(Default, Clone)]
struct TailCounts {
    cap: [u64; 5],
    upper: [u64; 5],
    lower: [u64; 5],
    two_sided: [u64; 5],
    sum_sq: f64,
    sum_sq2: f64,
}

/// Sample `trials` vectors `g ~ N(0, I_n)` and compare tail frequencies of
/// `g_1/|g|` and `|g|^2` against their analytic bounds.
pub fn verify_tail_bounds(n: usize, trials: usize, stream: RngStream) -> Result<ExperimentReport> {
    if n < 2 {
        return Err(LabError::param("n", "must be at least 2"));
    }
    if trials < 10_000 {
        return Err(LabError::param("trials", "must be at least 10^4"));
    }
    let nf = n as f64;
    let blocks = par_blocks(stream, trials, 4096, |s, _, len| {
        let mut rng = s.rng();
        let mut g = vec![0.0; n];
        let mut c = TailCounts::default();
        for _ in 0..len {
            fill_normals(&mut rng, &mut g);
            let y: f64 = g.iter().map(|v| v * v).sum();
            let u1 = g[0] / y.sqrt();
            for (k, &eps) in CAP_EPS.iter().enumerate() {
                c.cap[k] += (u1 >= eps) as u64;
            }
            for (k, &t) in LM_T.iter().enumerate() {
                c.upper[k] += (y >= nf + 2.0 * (nf * t).sqrt() + 2.0 * t) as u64;
                c.lower[k] += (y <= nf - 2.0 * (nf * t).sqrt()) as u64;
            }
            for (k, &t) in JOHNSTONE_T.iter().enumerate() {
                c.two_sided[k] += ((y - nf).abs() >= t * nf) as u64;
            }
            c.sum_sq += y;
            c.sum_sq2 += y * y;
        }
        c
    });
    let mut tot = TailCounts::default();
    for b in blocks {
        for k in 0..5 {
            tot.cap[k] += b.cap[k];
            tot.upper[k] += b.upper[k];
            tot.lower[k] += b.lower[k];
            tot.two_sided[k] += b.two_sided[k];
        }
        tot.sum_sq += b.sum_sq;
        tot.sum_sq2 += b.sum_sq2;
    }

    let t = trials as u64;
    let tf = trials as f64;
    let mut report = ExperimentReport::new("tail-bounds", stream.seed);
    report.param("n", n).param("trials", trials);

    let bounded = |label: String, count: u64, bound: f64, report: &mut ExperimentReport| {
        let p = count as f64 / tf;
        let sigma = binomial_sigma(p, bound, t);
        report.estimate(label.clone(), p, 3.0 * sigma, t);
        report.check_le(format!("{label} <= bound + 3 sigma"), BoundSource::Analytic, p, bound + 3.0 * sigma);
    };
    for (k, &eps) in CAP_EPS.iter().enumerate() {
        let bound = (-nf * eps * eps / 2.0).exp();
        bounded(format!("cap u1>={eps}"), tot.cap[k], bound, &mut report);
    }
    for (k, &tt) in LM_T.iter().enumerate() {
        let bound = (-tt).exp();
        bounded(format!("chi2 upper t={tt}"), tot.upper[k], bound, &mut report);
        bounded(format!("chi2 lower t={tt}"), tot.lower[k], bound, &mut report);
    }
    for (k, &tt) in JOHNSTONE_T.iter().enumerate() {
        let bound = (-(3.0 / 16.0) * nf * tt * tt).exp();
        bounded(format!("chi2 two-sided t={tt}"), tot.two_sided[k], bound, &mut report);
    }

    let mean = tot.sum_sq / tf;
    let var = (tot.sum_sq2 / tf - mean * mean).max(0.0);
    let se = (var / tf).sqrt();
    report.estimate("chi2 mean", mean, 3.0 * se, t);
    report.check_le("|mean |g|^2 - n| <= 3 se", BoundSource::Exact, (mean - nf).abs(), 3.0 * se);

    let mut worst = 0.0f64;
    for i in 0..=270 {
        let r = 3.0 + i as f64 / 10.0;
        let s = sf(r);
        let lo = pdf(r) * (1.0 / r - r.powi(-3));
        let hi = pdf(r) * (1.0 / r - r.powi(-3) + 3.0 * r.powi(-5));
        worst = worst.max((lo - s) / s).max((s - hi) / s);
    }
    report.check_le(
        "Gaussian tail bracket violation (relative) on r in [3, 30]",
        BoundSource::Analytic,
        worst,
        1e-12,
    );
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_hold_at_desk_scale() {
        let r = verify_tail_bounds(100, 20_000, RngStream::new(1, 0)).unwrap();
        for line in r.summary_lines() {
            assert!(line.starts_with("[PASS]"), "{line}");
        }
        // eps = 0.3 at n = 100: bound e^{-4.5}
        let cap = r.get("cap u1>=0.3").unwrap();
        assert!(cap <= (-4.5f64).exp() + 0.01);
        assert_eq!(r.get("chi2 upper t=25").unwrap(), 0.0);
    }

    #[test]
    fn johnstone_bound_is_trivial_at_zero() {
        let r = verify_tail_bounds(10, 10_000, RngStream::new(2, 0)).unwrap();
        let a = r
            .assertions
            .iter()
            .find(|a| a.description.starts_with("chi2 two-sided t=0 "))
            .unwrap();
        assert!(a.bound >= 1.0 && a.passed);
    }

    #[test]
    fn parameter_validation() {
        assert!(verify_tail_bounds(1, 20_000, RngStream::new(0, 0)).is_err());
        assert!(verify_tail_bounds(10, 100, RngStream::new(0, 0)).is_err());
    }
}
