//! Nazarov bodies: the intersection of `Ball(sqrt(n))` with `N` random
//! halfspaces `{x : <x, g^i> <= r}`, `g^i ~ N(0, I_n)`.
//!
//! A point of the ball that violates halfspace `i` lies in the flap `F_i`;
//! if it violates no other halfspace it lies in `U_i`. The experiments here
//! check how `r`, the flap volumes and the multi-flap ("dog-ear") volumes
//! behave.
//!
//! Several experiments need only the law of the `N` inner products
//! `<x, g^i>` for one point `x`: those are iid `N(0, |x|^2)`, so a fresh body
//! per point costs `N` scalar normals instead of `N * n`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{check_dim, LabError, Result};
use crate::gauss::frame::{dot, norm, Frame};
use crate::gauss::rng::{fill_normals, par_blocks, RngStream, StreamRng};
use crate::gauss::special::{isf, sf};
use crate::report::{BoundSource, ExperimentReport};
use crate::stats::{binomial_sigma, mean_se, std_dev, wilson_interval, Z99_ONE_SIDED};

/// Largest `N * n` a body may hold (1 GiB of normals).
pub const MAX_BODY_ENTRIES: usize = 1 << 27;
/// Default facet counts are capped at `2^MAX_DEFAULT_LOG2_N`.
pub const MAX_DEFAULT_LOG2_N: u32 = 20;
/// Stream id used when a body is regenerated from a seed alone.
pub const BODY_STREAM: u64 = 0x6e61_7a61;

/// `2^ceil(sqrt(n))`, capped at `2^20`.
pub fn default_facet_count(n: usize) -> usize {
    let k = (n as f64).sqrt().ceil() as u32;
    if k > MAX_DEFAULT_LOG2_N {
        log::warn!("N = 2^{k} is infeasible at n = {n}; capping at 2^{MAX_DEFAULT_LOG2_N}");
        1 << MAX_DEFAULT_LOG2_N
    } else {
        1 << k
    }
}

/// The `r` with `Φ(r / sqrt(n)) = 1 - c1/N`.
pub fn solve_r(n: usize, big_n: f64, c1: f64) -> Result<f64> {
    if n == 0 {
        return Err(LabError::param("n", "must be positive"));
    }
    if !(big_n >= 1.0) {
        return Err(LabError::param("N", "must be at least 1"));
    }
    let q = c1 / big_n;
    if !(c1 > 0.0) || q >= 0.5 {
        return Err(LabError::param("c1", format!("c1/N = {q} must lie in (0, 1/2)")));
    }
    Ok((n as f64).sqrt() * isf(q))
}

/// The `c1` for which `(1 - c1/N)^N = 1/2`, so a point on the sphere of
/// radius `sqrt(n)` lies in the body with probability exactly 1/2.
pub fn half_c1(big_n: f64) -> f64 {
    -big_n * (-std::f64::consts::LN_2 / big_n).exp_m1()
}

/// `r` for the probability-1/2 convention.
pub fn solve_r_half(n: usize, big_n: f64) -> Result<f64> {
    solve_r(n, big_n, half_c1(big_n))
}

/// `sqrt(2 n ln((N/c1) sqrt(n / 2π)))`, the leading-order value of `r`.
pub fn r_leading_order(n: usize, big_n: f64, c1: f64) -> f64 {
    let nf = n as f64;
    (2.0 * nf * ((big_n / c1).ln() + 0.5 * (nf / (2.0 * PI)).ln())).sqrt()
}

/// Probability over the body that a point of norm `norm` violates a given halfspace.
pub fn violation_prob(r: f64, norm: f64) -> f64 {
    if norm <= 0.0 {
        0.0
    } else {
        sf(r / norm)
    }
}

/// Probability over the body that a fixed point of norm `norm` lies in it:
/// `1{norm <= sqrt(n)} Φ(r/norm)^N`.
pub fn membership_prob(n: usize, big_n: f64, r: f64, norm: f64) -> f64 {
    if norm > (n as f64).sqrt() {
        return 0.0;
    }
    if norm == 0.0 {
        return 1.0;
    }
    (big_n * (-violation_prob(r, norm)).ln_1p()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Outside,
    InBody,
    InFlaps,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointClass {
    pub kind: PointKind,
    /// Violated halfspaces, ascending; nonempty iff `kind == InFlaps`.
    pub violated: Vec<usize>,
}

impl PointClass {
    /// Index `i` when the point lies in `U_i`.
    pub fn unique(&self) -> Option<usize> {
        (self.violated.len() == 1).then(|| self.violated[0])
    }
}

/// Per-point summary from batched classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchClass {
    pub outside: bool,
    /// Number of violated halfspaces (0 when outside).
    pub count: u32,
    /// Smallest violated index, valid when `count > 0`.
    pub first: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RegionCounts {
    pub outside: u64,
    pub body: u64,
    pub unique: u64,
    pub multi: u64,
}

impl RegionCounts {
    pub fn total(&self) -> u64 {
        self.outside + self.body + self.unique + self.multi
    }

    pub fn add(&mut self, o: &RegionCounts) {
        self.outside += o.outside;
        self.body += o.body;
        self.unique += o.unique;
        self.multi += o.multi;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NazarovBody {
    n: usize,
    count: usize,
    r: f64,
    /// Row-major `count x n`.
    normals: Vec<f64>,
    frame: Option<Frame>,
}

impl NazarovBody {
    /// Draw `count` normals from `rng`.
    pub fn sample<R: Rng + ?Sized>(n: usize, count: usize, r: f64, rng: &mut R) -> Result<Self> {
        validate(n, count, r)?;
        let mut normals = vec![0.0; n * count];
        fill_normals(rng, &mut normals);
        Ok(NazarovBody {
            n,
            count,
            r,
            normals,
            frame: None,
        })
    }

    /// Regenerate the body belonging to `seed`.
    pub fn from_seed(n: usize, count: usize, r: f64, seed: u64) -> Result<Self> {
        Self::sample(n, count, r, &mut RngStream::new(seed, BODY_STREAM).rng())
    }

    pub fn from_normals(n: usize, r: f64, normals: Vec<f64>) -> Result<Self> {
        if n == 0 || normals.is_empty() || normals.len() % n != 0 {
            return Err(LabError::param("normals", "length must be a positive multiple of n"));
        }
        let count = normals.len() / n;
        validate(n, count, r)?;
        Ok(NazarovBody {
            n,
            count,
            r,
            normals,
            frame: None,
        })
    }

    /// Embed the body in a larger space; `frame` must have `n` vectors.
    pub fn with_frame(mut self, frame: Frame) -> Result<Self> {
        check_dim(self.n, frame.count())?;
        self.frame = Some(frame);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn normal(&self, i: usize) -> &[f64] {
        &self.normals[i * self.n..(i + 1) * self.n]
    }

    pub fn normals(&self) -> &[f64] {
        &self.normals
    }

    pub fn frame(&self) -> Option<&Frame> {
        self.frame.as_ref()
    }

    /// Classify a point given in intrinsic coordinates.
    pub fn classify(&self, x: &[f64]) -> Result<PointClass> {
        check_dim(self.n, x.len())?;
        Ok(self.classify_unchecked(x))
    }

    pub(crate) fn classify_unchecked(&self, x: &[f64]) -> PointClass {
        if dot(x, x) > self.n as f64 {
            return PointClass {
                kind: PointKind::Outside,
                violated: Vec::new(),
            };
        }
        let violated: Vec<usize> = (0..self.count).filter(|&i| dot(self.normal(i), x) > self.r).collect();
        let kind = if violated.is_empty() {
            PointKind::InBody
        } else {
            PointKind::InFlaps
        };
        PointClass { kind, violated }
    }

    /// Classify a point of the ambient space through the embedding frame.
    pub fn classify_ambient(&self, x: &[f64]) -> Result<PointClass> {
        match &self.frame {
            None => self.classify(x),
            Some(f) => Ok(self.classify_unchecked(&f.coords(x)?)),
        }
    }

    /// Classify row-major intrinsic points `m x n` with one matrix product per chunk.
    pub fn classify_batch(&self, points: &[f64]) -> Result<Vec<BatchClass>> {
        let n = self.n;
        if points.len() % n != 0 {
            return Err(LabError::DimensionMismatch {
                expected: n,
                got: points.len() % n,
            });
        }
        let m = points.len() / n;
        let big_n = self.count;
        let chunk = (1usize << 18) / big_n.max(1);
        let chunk = chunk.clamp(1, 512);
        let mut out = Vec::with_capacity(m);
        let mut prod = vec![0.0; chunk * big_n];
        let nf = n as f64;
        for start in (0..m).step_by(chunk) {
            let rows = chunk.min(m - start);
            let block = &points[start * n..(start + rows) * n];
            // prod (rows x N) = block (rows x n) * G^T (n x N)
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    n,
                    big_n,
                    1.0,
                    block.as_ptr(),
                    n as isize,
                    1,
                    self.normals.as_ptr(),
                    1,
                    n as isize,
                    0.0,
                    prod.as_mut_ptr(),
                    big_n as isize,
                    1,
                );
            }
            for j in 0..rows {
                let x = &block[j * n..(j + 1) * n];
                if dot(x, x) > nf {
                    out.push(BatchClass {
                        outside: true,
                        count: 0,
                        first: 0,
                    });
                    continue;
                }
                let row = &prod[j * big_n..(j + 1) * big_n];
                let mut count = 0u32;
                let mut first = 0u32;
                for (i, &v) in row.iter().enumerate() {
                    if v > self.r {
                        if count == 0 {
                            first = i as u32;
                        }
                        count += 1;
                    }
                }
                out.push(BatchClass {
                    outside: false,
                    count,
                    first,
                });
            }
        }
        Ok(out)
    }

    pub fn region_counts(&self, points: &[f64]) -> Result<RegionCounts> {
        let mut c = RegionCounts::default();
        for b in self.classify_batch(points)? {
            match (b.outside, b.count) {
                (true, _) => c.outside += 1,
                (false, 0) => c.body += 1,
                (false, 1) => c.unique += 1,
                _ => c.multi += 1,
            }
        }
        Ok(c)
    }
}

fn validate(n: usize, count: usize, r: f64) -> Result<()> {
    if n == 0 {
        return Err(LabError::param("n", "must be positive"));
    }
    if count == 0 {
        return Err(LabError::param("N", "must be at least 1"));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(LabError::param("r", "must be positive and finite"));
    }
    if n.saturating_mul(count) > MAX_BODY_ENTRIES {
        return Err(LabError::ResourceLimit(format!(
            "N * n = {} exceeds the cap of {MAX_BODY_ENTRIES} stored coordinates",
            n as u128 * count as u128
        )));
    }
    Ok(())
}

/// Number of halfspaces a point of norm `norm` violates in a fresh body:
/// the inner products are iid `N(0, norm^2)`.
pub fn fresh_violation_count<R: Rng + ?Sized>(big_n: usize, r: f64, norm: f64, rng: &mut R) -> usize {
    if norm <= 0.0 {
        return 0;
    }
    let t = r / norm;
    (0..big_n)
        .filter(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z > t
        })
        .count()
}

/// Norm of `x ~ N(0, I_n)` conditioned on `|x| <= sqrt(n)`.
fn ball_conditioned_norm(chi: &ChiSquared<f64>, n: usize, rng: &mut StreamRng) -> f64 {
    loop {
        let y = chi.sample(rng);
        if y <= n as f64 {
            return y.sqrt();
        }
    }
}

fn chi_squared(n: usize) -> ChiSquared<f64> {
    ChiSquared::new(n as f64).expect("positive degrees of freedom")
}

/// Compare `r` against its leading-order value and upper bound.
pub fn check_r_estimate(n: usize, big_n: f64, c1: f64) -> Result<ExperimentReport> {
    let r = solve_r(n, big_n, c1)?;
    let lead = r_leading_order(n, big_n, c1);
    let mut report = ExperimentReport::new("r-estimate", 0);
    report.param("n", n).param_f("N", big_n).param_f("c1", c1);
    report.estimate("r", r, 0.0, 0).estimate("leading order", lead, 0.0, 0);
    let ratio = r / lead;
    report.estimate("ratio", ratio, 0.0, 0);
    report.check_le("r <= leading-order value", BoundSource::Analytic, r, lead);
    report.check_ge("ratio >= 0.8", BoundSource::Calibrated, ratio, 0.8);
    report.check_le("ratio <= 1", BoundSource::Analytic, ratio, 1.0);
    Ok(report.finish())
}

/// Frequency with which a random point on the sphere of radius `sqrt(n)`
/// lies in a freshly sampled body, against the closed form.
pub fn shell_membership(n: usize, big_n: usize, r: f64, bodies: usize, stream: RngStream) -> Result<ExperimentReport> {
    validate(n, big_n, r)?;
    if bodies == 0 {
        return Err(LabError::param("bodies", "must be positive"));
    }
    let blocks = par_blocks(stream, bodies, 16, |s, _, len| -> Result<u64> {
        let mut rng = s.rng();
        let mut x = vec![0.0; n];
        let mut hits = 0;
        for _ in 0..len {
            let body = NazarovBody::sample(n, big_n, r, &mut rng)?;
            fill_normals(&mut rng, &mut x);
            let s = (n as f64).sqrt() / norm(&x);
            x.iter_mut().for_each(|v| *v *= s);
            // rounding may push |x| a hair above sqrt(n)
            x.iter_mut().for_each(|v| *v *= 1.0 - 1e-15);
            hits += (body.classify_unchecked(&x).kind == PointKind::InBody) as u64;
        }
        Ok(hits)
    });
    let hits: u64 = blocks.into_iter().sum::<Result<u64>>()?;
    let p_hat = hits as f64 / bodies as f64;
    let exact = membership_prob(n, big_n as f64, r, (n as f64).sqrt());
    let sigma = (exact * (1.0 - exact) / bodies as f64).sqrt();
    let mut report = ExperimentReport::new("shell-membership", stream.seed);
    report.param("n", n).param("N", big_n).param_f("r", r).param("bodies", bodies);
    report.estimate("P[in body] (MC)", p_hat, 3.0 * sigma, bodies as u64);
    report.estimate("P[in body] (closed form)", exact, 0.0, 0);
    report.check_le("|MC - closed form| <= 3 sigma", BoundSource::Exact, (p_hat - exact).abs(), 3.0 * sigma);
    Ok(report.finish())
}

fn factorial(q: usize) -> f64 {
    (1..=q).map(|k| k as f64).product()
}

/// Frequency of points lying in at least `q` flaps, against `c1^q / q!`.
///
/// Two point laws: the sphere `|x| = sqrt(n)` (the worst case) and
/// `N(0, I_n)` conditioned on the ball.
pub fn verify_high_degree_bound(
    n: usize,
    big_n: usize,
    r: f64,
    c1: f64,
    qs: &[usize],
    trials: usize,
    stream: RngStream,
) -> Result<ExperimentReport> {
    validate(n, big_n, r)?;
    if let Some(&q) = qs.iter().find(|&&q| q > big_n) {
        return Err(LabError::param("q", format!("{q} exceeds N = {big_n}")));
    }
    if trials == 0 {
        return Err(LabError::param("trials", "must be positive"));
    }
    let chi = chi_squared(n);
    let root_n = (n as f64).sqrt();
    let blocks = par_blocks(stream, trials, 2048, |s, _, len| {
        let mut rng = s.rng();
        let mut shell = vec![0u64; qs.len()];
        let mut ball = vec![0u64; qs.len()];
        for _ in 0..len {
            let k_shell = fresh_violation_count(big_n, r, root_n, &mut rng);
            let rho = ball_conditioned_norm(&chi, n, &mut rng);
            let k_ball = fresh_violation_count(big_n, r, rho, &mut rng);
            for (j, &q) in qs.iter().enumerate() {
                shell[j] += (k_shell >= q) as u64;
                ball[j] += (k_ball >= q) as u64;
            }
        }
        (shell, ball)
    });
    let mut shell = vec![0u64; qs.len()];
    let mut ball = vec![0u64; qs.len()];
    for (s, b) in blocks {
        for j in 0..qs.len() {
            shell[j] += s[j];
            ball[j] += b[j];
        }
    }
    let t = trials as u64;
    let mut report = ExperimentReport::new("high-degree-bound", stream.seed);
    report
        .param("n", n)
        .param("N", big_n)
        .param_f("r", r)
        .param_f("c1", c1)
        .param("trials", trials);
    for (j, &q) in qs.iter().enumerate() {
        let bound = c1.powi(q as i32) / factorial(q);
        for (label, count) in [("shell", shell[j]), ("ball", ball[j])] {
            let p = count as f64 / trials as f64;
            let sigma = binomial_sigma(p, bound, t);
            report.estimate(format!("P[>= {q} flaps] ({label})"), p, 3.0 * sigma, t);
            report.check_le(
                format!("{label}: P[>= {q} flaps] <= c1^{q}/{q}! + 3 sigma"),
                BoundSource::Analytic,
                p,
                bound + 3.0 * sigma,
            );
        }
    }
    Ok(report.finish())
}

/// Per-body unique-violation volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct UniqueVolume {
    pub per_body: Vec<f64>,
    pub mean: f64,
    pub se: f64,
}

/// Mean and spread over bodies of `Vol(⊔ U_i)`, each body estimated from
/// `points_per_body` Gaussian points.
///
/// With `check_concentration`, also asserts that at least 90% of bodies
/// reach `0.9 x` the run mean.
#[allow(clippy::too_many_arguments)]
pub fn estimate_unique_volume(
    n: usize,
    big_n: usize,
    r: f64,
    c1: f64,
    bodies: usize,
    points_per_body: usize,
    check_concentration: bool,
    stream: RngStream,
) -> Result<(ExperimentReport, UniqueVolume)> {
    validate(n, big_n, r)?;
    if bodies < 100 {
        return Err(LabError::param("bodies", "must be at least 100"));
    }
    if points_per_body < 1000 {
        return Err(LabError::param("points_per_body", "must be at least 10^3"));
    }
    let blocks = par_blocks(stream, bodies, 4, |s, _, len| -> Result<Vec<f64>> {
        let mut rng = s.rng();
        let mut pts = vec![0.0; points_per_body * n];
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let body = NazarovBody::sample(n, big_n, r, &mut rng)?;
            fill_normals(&mut rng, &mut pts);
            let c = body.region_counts(&pts)?;
            out.push(c.unique as f64 / points_per_body as f64);
        }
        Ok(out)
    });
    let mut per_body = Vec::with_capacity(bodies);
    for b in blocks {
        per_body.extend(b?);
    }
    let (mean, se) = mean_se(&per_body);
    let spread = std_dev(&per_body);
    let mut report = ExperimentReport::new("unique-volume", stream.seed);
    report
        .param("n", n)
        .param("N", big_n)
        .param_f("r", r)
        .param_f("c1", c1)
        .param("bodies", bodies)
        .param("points_per_body", points_per_body);
    report.estimate("mean Vol(unique)", mean, Z99_ONE_SIDED * se, (bodies * points_per_body) as u64);
    report.estimate("per-body std", spread, 0.0, bodies as u64);
    report.estimate("mean / c1", mean / c1, Z99_ONE_SIDED * se / c1, bodies as u64);
    report.check_ge(
        "mean - z99 se >= 0.01 c1",
        BoundSource::Calibrated,
        mean - Z99_ONE_SIDED * se,
        0.01 * c1,
    );
    let frac = per_body.iter().filter(|&&v| v >= 0.9 * mean).count() as f64 / bodies as f64;
    report.estimate("fraction of bodies >= 0.9 mean", frac, 0.0, bodies as u64);
    if check_concentration {
        report.check_ge(
            "fraction of bodies with Vol(unique) >= 0.9 mean",
            BoundSource::Analytic,
            frac,
            0.9,
        );
    }
    Ok((report.finish(), UniqueVolume { per_body, mean, se }))
}

/// `N Φ(r/ρ)^{N-1} (1 - Φ(r/ρ)) / ((N^2/2)(1 - Φ(r/ρ))^2)`: the ratio of the
/// probability that a point of norm `ρ` is in exactly one flap to the union
/// bound on its being in two or more.
pub fn pointwise_flap_dogear_ratio(big_n: f64, r: f64, rho: f64) -> f64 {
    let p = violation_prob(r, rho);
    let unique = big_n * p * ((big_n - 1.0) * (-p).ln_1p()).exp();
    let dogear_ub = 0.5 * big_n * big_n * p * p;
    unique / dogear_ub
}

/// `E[Vol(⊔ U_i)] / E[Vol(∪_{|T|>=2} F_T)]` against `2/c1 - 2`.
pub fn verify_flap_dogear_ratio(
    n: usize,
    big_n: usize,
    r: f64,
    c1: f64,
    trials: usize,
    stream: RngStream,
) -> Result<ExperimentReport> {
    validate(n, big_n, r)?;
    if trials < 100_000 {
        return Err(LabError::param("trials", "must be at least 10^5"));
    }
    let chi = chi_squared(n);
    let nf = n as f64;
    let nn = big_n as f64;
    let blocks = par_blocks(stream, trials, 4096, |s, _, len| {
        let mut rng = s.rng();
        let (mut u, mut d) = (0u64, 0u64);
        let (mut eu, mut ed) = (0.0, 0.0);
        for _ in 0..len {
            let y: f64 = chi.sample(&mut rng);
            if y > nf {
                continue;
            }
            let rho = y.sqrt();
            let k = fresh_violation_count(big_n, r, rho, &mut rng);
            u += (k == 1) as u64;
            d += (k >= 2) as u64;
            let p = violation_prob(r, rho);
            let p0 = (nn * (-p).ln_1p()).exp();
            let p1 = nn * p * ((nn - 1.0) * (-p).ln_1p()).exp();
            eu += p1;
            ed += (1.0 - p0 - p1).max(0.0);
        }
        (u, d, eu, ed)
    });
    let (mut u, mut d, mut eu, mut ed) = (0u64, 0u64, 0.0, 0.0);
    for (a, b, c, e) in blocks {
        u += a;
        d += b;
        eu += c;
        ed += e;
    }
    let tf = trials as f64;
    let threshold = 2.0 / c1 - 2.0;
    let mut report = ExperimentReport::new("flap-dogear-ratio", stream.seed);
    report
        .param("n", n)
        .param("N", big_n)
        .param_f("r", r)
        .param_f("c1", c1)
        .param("trials", trials);
    let pu = u as f64 / tf;
    let pd = d as f64 / tf;
    report.estimate("Vol(unique)", pu, 3.0 * (pu * (1.0 - pu) / tf).sqrt(), trials as u64);
    report.estimate("Vol(dog-ears)", pd, 3.0 * (pd * (1.0 - pd) / tf).sqrt(), trials as u64);
    report.estimate("ratio (conditional expectations)", eu / ed.max(f64::MIN_POSITIVE), 0.0, trials as u64);
    if d == 0 {
        let (_, hi) = wilson_interval(0, trials as u64, Z99_ONE_SIDED);
        report.note(format!(
            "no dog-ear hits in {trials} pairs: bound vacuously satisfied; dog-ear volume <= {hi:.3e} at 99%"
        ));
        report.check_ge("dog-ear count is zero", BoundSource::Analytic, 0.0, 0.0);
    } else {
        let ratio = pu / pd;
        // delta method with multinomial covariance -pu pd / t
        let rel2 = ((1.0 - pu) / pu + (1.0 - pd) / pd + 2.0) / tf;
        let sigma = ratio * rel2.max(0.0).sqrt();
        report.estimate("ratio", ratio, 3.0 * sigma, trials as u64);
        report.check_ge(
            format!("ratio + 3 sigma >= 2/c1 - 2 = {threshold:.4}"),
            BoundSource::Analytic,
            ratio + 3.0 * sigma,
            threshold,
        );
    }
    for frac in [0.9, 1.0] {
        let rho = frac * nf.sqrt();
        let pr = pointwise_flap_dogear_ratio(nn, r, rho);
        report.estimate(format!("pointwise ratio at |x| = {frac} sqrt(n)"), pr, 0.0, 0);
        report.check_ge(
            format!("pointwise ratio at |x| = {frac} sqrt(n) >= 2/c1 - 2"),
            BoundSource::Analytic,
            pr,
            threshold,
        );
    }
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::special::cdf;

    #[test]
    fn solve_r_roundtrip() {
        for &(n, big_n, c1) in &[(100usize, 1024.0, 0.01), (10, 2.0, 0.5), (1000, 1e6, 0.3)] {
            let r = solve_r(n, big_n, c1).unwrap();
            let target = 1.0 - c1 / big_n;
            assert!((cdf(r / (n as f64).sqrt()) - target).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_r_examples() {
        let r = solve_r(100, 1024.0, 0.01).unwrap();
        assert!((r - 42.70).abs() < 0.01, "r = {r}");
        let r_half = solve_r_half(100, 1024.0).unwrap();
        // 10 * Φ^{-1}(2^{-1/1024})
        let oracle = 10.0 * crate::gauss::special::quantile(2f64.powf(-1.0 / 1024.0));
        assert!((r_half - oracle).abs() < 1e-6, "{r_half} vs {oracle}");
        assert!((r_half - 32.04).abs() < 0.02);
        assert!(solve_r(100, 1024.0, 2048.0).is_err());
        assert!(solve_r(100, 1024.0, 0.0).is_err());
    }

    #[test]
    fn half_convention_gives_probability_half() {
        for big_n in [2.0, 64.0, 1024.0, 1e6] {
            let r = solve_r_half(100, big_n).unwrap();
            let p = membership_prob(100, big_n, r, 10.0);
            assert!((p - 0.5).abs() < 1e-10, "N = {big_n}: {p}");
        }
    }

    #[test]
    fn membership_prob_shape() {
        let r = solve_r(100, 1024.0, 0.01).unwrap();
        assert_eq!(membership_prob(100, 1024.0, r, 10.0001), 0.0);
        assert_eq!(membership_prob(100, 1024.0, r, 0.0), 1.0);
        let p = membership_prob(100, 1024.0, r, 10.0);
        assert!((p - (1.0 - 0.01 / 1024.0f64).powi(1024)).abs() < 1e-12);
        assert!((p - 0.990_05).abs() < 1e-5);
        let mut prev = 1.0;
        for i in 1..=100 {
            let v = membership_prob(100, 1024.0, r, i as f64 / 10.0);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn classify_basics() {
        let mut rng = RngStream::new(1, 0).rng();
        let body = NazarovBody::sample(2, 1, 10.0, &mut rng).unwrap();
        let c = body.classify(&[0.0, 0.0]).unwrap();
        assert_eq!(c.kind, PointKind::InBody);
        assert!(c.violated.is_empty());
        let body = NazarovBody::sample(100, 64, 20.0, &mut rng).unwrap();
        let mut x = vec![0.0; 100];
        x[0] = 1.01 * 10.0;
        assert_eq!(body.classify(&x).unwrap().kind, PointKind::Outside);
        assert!(body.classify(&[1.0]).is_err());
    }

    #[test]
    fn tie_counts_as_inside() {
        let body = NazarovBody::from_normals(2, 1.0, vec![1.0, 0.0]).unwrap();
        assert_eq!(body.classify(&[1.0, 0.0]).unwrap().kind, PointKind::InBody);
        assert_eq!(body.classify(&[1.0 + 1e-12, 0.0]).unwrap().violated, vec![0]);
    }

    #[test]
    fn batch_matches_pointwise() {
        let mut rng = RngStream::new(2, 0).rng();
        let n = 30;
        let r = solve_r_half(n, 256.0).unwrap();
        let body = NazarovBody::sample(n, 256, r * 0.6, &mut rng).unwrap();
        let mut pts = vec![0.0; 700 * n];
        fill_normals(&mut rng, &mut pts);
        let batch = body.classify_batch(&pts).unwrap();
        let mut counts = RegionCounts::default();
        for (j, b) in batch.iter().enumerate() {
            let c = body.classify(&pts[j * n..(j + 1) * n]).unwrap();
            assert_eq!(b.outside, c.kind == PointKind::Outside);
            assert_eq!(b.count as usize, c.violated.len());
            if b.count > 0 {
                assert_eq!(b.first as usize, c.violated[0]);
            }
            match c.kind {
                PointKind::Outside => counts.outside += 1,
                PointKind::InBody => counts.body += 1,
                PointKind::InFlaps if c.violated.len() == 1 => counts.unique += 1,
                PointKind::InFlaps => counts.multi += 1,
            }
        }
        let batch_counts = body.region_counts(&pts).unwrap();
        assert_eq!(batch_counts, counts);
        assert_eq!(batch_counts.total(), 700);
        assert!(counts.unique > 0 && counts.multi > 0);
    }

    #[test]
    fn resource_cap() {
        let mut rng = RngStream::new(0, 0).rng();
        let err = NazarovBody::sample(1 << 14, 1 << 14, 1.0, &mut rng).unwrap_err();
        assert!(matches!(err, LabError::ResourceLimit(_)));
    }

    #[test]
    fn r_leading_order_ratios() {
        let a = check_r_estimate(100, 1024.0, 0.01).unwrap();
        assert!(a.all_passed(), "{:?}", a.summary_lines());
        let b = check_r_estimate(10_000, 2f64.powi(100), 0.01).unwrap();
        assert!(b.get("ratio").unwrap() > a.get("ratio").unwrap());
    }

    #[test]
    fn pointwise_ratio_exceeds_threshold() {
        for &c1 in &[0.01, std::f64::consts::LN_2] {
            let r = solve_r(100, 1024.0, c1).unwrap();
            for rho in [9.0, 10.0] {
                assert!(pointwise_flap_dogear_ratio(1024.0, r, rho) > 2.0 / c1 - 2.0);
            }
        }
    }

    #[test]
    fn default_facet_count_caps() {
        assert_eq!(default_facet_count(100), 1024);
        assert_eq!(default_facet_count(99), 1024);
        assert_eq!(default_facet_count(10_000), 1 << 20);
    }
}
