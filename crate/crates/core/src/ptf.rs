//! Degree-2 polynomial threshold functions with moment-matched coefficients.
//!
//! A yes instance is `{x : sum_i u_i (a_i . x)^2 <= mu, |x| <= sqrt(n) + C}`
//! with `u_i >= 0` drawn from a finitely supported law whose first `l` raw
//! moments agree with `N(mu, 1)`, so every yes set is convex. A no instance
//! draws the coefficients from a law `v` with the same moments and a
//! negative atom. The `a_i` are a Haar basis scaled by `1/sqrt(n)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, LabError, Result};
use crate::gauss::frame::{norm, sample_haar_frame, Frame};
use crate::gauss::rng::{fill_normals, par_blocks, RngStream};
use crate::report::{BoundSource, ExperimentReport};
use crate::stats::{binomial_sigma, tv_distance, tv_noise_bound, wilson_interval, Z99_ONE_SIDED};

/// Radius slack of the clip `|x| <= sqrt(n) + C`.
pub const DEFAULT_CLIP: f64 = 10.0;
pub const DEFAULT_NEG_ATOM: f64 = -1.0;
pub const DEFAULT_NEG_PROB: f64 = 0.01;
pub const PTF_STREAM: u64 = 0x7074_66;
pub const MAX_RESPONSE_QUERIES: usize = 20;
/// Moment agreement required of every produced law, relative to `max(1, |m_k|)`.
pub const MOMENT_TOL: f64 = 1e-9;

/// Finitely many atoms with probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Atoms must be strictly increasing, probabilities nonnegative and summing to 1.
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(LabError::InvalidMoments("atoms and probs must be nonempty and equally long".into()));
        }
        if atoms.windows(2).any(|w| !(w[0] < w[1])) || atoms.iter().any(|a| !a.is_finite()) {
            return Err(LabError::InvalidMoments("atoms must be finite and strictly increasing".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(LabError::InvalidMoments("probabilities must be nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(LabError::InvalidMoments(format!("probabilities sum to {total}")));
        }
        Ok(DiscreteDistribution { atoms, probs })
    }

    pub fn point(a: f64) -> Self {
        DiscreteDistribution {
            atoms: vec![a],
            probs: vec![1.0],
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `E[X^k]` by direct summation.
    pub fn moment(&self, k: u32) -> f64 {
        self.atoms.iter().zip(&self.probs).map(|(a, p)| p * a.powi(k as i32)).sum()
    }

    pub fn prob_negative(&self) -> f64 {
        self.atoms.iter().zip(&self.probs).filter(|(a, _)| **a < 0.0).map(|(_, p)| p).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in self.atoms.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return *a;
            }
        }
        *self.atoms.last().expect("nonempty")
    }
}

/// `E[g^k]` for `g ~ N(mu, 1)`.
pub fn gaussian_raw_moment(mu: f64, k: u32) -> f64 {
    let (mut prev, mut cur) = (1.0, mu);
    if k == 0 {
        return 1.0;
    }
    for j in 2..=k {
        let next = mu * cur + (j - 1) as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Largest `k` with `|E[X^k] - m_k| <= MOMENT_TOL * max(1, |m_k|)` failing, if any.
fn moment_mismatch(d: &DiscreteDistribution, mu: f64, l: u32) -> Option<(u32, f64, f64)> {
    (1..=l).find_map(|k| {
        let got = d.moment(k);
        let want = gaussian_raw_moment(mu, k);
        ((got - want).abs() > MOMENT_TOL * want.abs().max(1.0)).then_some((k, got, want))
    })
}

/// Nodes and weights of the Jacobi matrix with diagonal `alpha` and squared
/// off-diagonal `beta[1..]`, total mass `beta[0]`.
fn gauss_rule(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = alpha.len();
    let j = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            alpha[r]
        } else if r.abs_diff(c) == 1 {
            beta[r.max(c)].sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| (eig.eigenvalues[i], beta[0] * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Nodes and weights of the `m`-point rule for `N(0, 1)`, symmetrized.
pub fn hermite_rule(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let alpha = vec![0.0; m];
    let beta: Vec<f64> = (0..m).map(|k| if k == 0 { 1.0 } else { k as f64 }).collect();
    let (x, w) = gauss_rule(&alpha, &beta);
    let xs: Vec<f64> = (0..m).map(|i| 0.5 * (x[i] - x[m - 1 - i])).collect();
    let ws: Vec<f64> = (0..m).map(|i| 0.5 * (w[i] + w[m - 1 - i])).collect();
    let total: f64 = ws.iter().sum();
    (xs, ws.into_iter().map(|v| v / total).collect())
}

/// Nonnegative law matching the first `l` moments of `N(mu, 1)` for the smallest such `mu`.
///
/// For `l >= 3` this is the `(l+1)/2`-point Gaussian rule shifted so that its
/// smallest node is exactly 0. For `l = 1` it is the point mass at `mu = 1`.
pub fn match_moments_nonneg(l: u32) -> Result<(f64, DiscreteDistribution)> {
    if l == 0 || l % 2 == 0 {
        return Err(LabError::param("l", "must be an odd positive integer"));
    }
    if l == 1 {
        return Ok((1.0, DiscreteDistribution::point(1.0)));
    }
    let m = (l as usize).div_ceil(2);
    let (x, w) = hermite_rule(m);
    let mu = x[m - 1];
    let atoms: Vec<f64> = x.iter().map(|v| (mu + v).max(0.0)).collect();
    let d = DiscreteDistribution::new(atoms, w)?;
    if let Some((k, got, want)) = moment_mismatch(&d, mu, l) {
        return Err(LabError::InvalidMoments(format!(
            "quadrature lost accuracy at moment {k}: {got} vs {want}; l = {l} is too large"
        )));
    }
    Ok((mu, d))
}

/// Recurrence coefficients of the measure with moments `mom[0..2m]` (Chebyshev algorithm).
fn recurrence_from_moments(mom: &[f64], m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    debug_assert!(mom.len() >= 2 * m);
    let len = 2 * m;
    let mut alpha = vec![0.0; m];
    let mut beta = vec![0.0; m];
    let mut prev = vec![0.0; len];
    let mut cur = mom[..len].to_vec();
    if !(cur[0] > 0.0) {
        return Err(LabError::InvalidMoments("total mass must be positive".into()));
    }
    alpha[0] = cur[1] / cur[0];
    beta[0] = cur[0];
    for k in 1..m {
        let mut next = vec![0.0; len];
        for l in k..(len - k) {
            next[l] = cur[l + 1] - alpha[k - 1] * cur[l] - beta[k - 1] * prev[l];
        }
        if !(next[k] > 0.0) {
            return Err(LabError::InvalidMoments(format!(
                "moment sequence is not positive definite at order {k}"
            )));
        }
        alpha[k] = next[k + 1] / next[k] - cur[k] / cur[k - 1];
        beta[k] = next[k] / cur[k - 1];
        prev = cur;
        cur = next;
    }
    Ok((alpha, beta))
}

/// Law with an atom `neg_atom` of mass `neg_prob` whose first `l` moments match `N(mu, 1)`.
///
/// The remaining mass is the Gaussian rule of the adjusted moments
/// `(m_k - neg_prob * neg_atom^k) / (1 - neg_prob)`.
pub fn match_moments_with_negative(mu: f64, l: u32, neg_atom: f64, neg_prob: f64) -> Result<DiscreteDistribution> {
    if l == 0 {
        return Err(LabError::param("l", "must be positive"));
    }
    if !(neg_atom < 0.0 && neg_atom.is_finite()) {
        return Err(LabError::param("neg_atom", "must be negative"));
    }
    if !(neg_prob > 0.0 && neg_prob < 1.0) {
        return Err(LabError::param("neg_prob", "must lie in (0, 1)"));
    }
    let m = (l as usize + 1).div_ceil(2);
    let adjusted: Vec<f64> = (0..2 * m as u32)
        .map(|k| (gaussian_raw_moment(mu, k) - neg_prob * neg_atom.powi(k as i32)) / (1.0 - neg_prob))
        .collect();
    let shrink = |e: LabError| {
        LabError::InvalidMoments(format!("{e}; adjusted moments are not a valid sequence, shrink neg_prob"))
    };
    let (alpha, beta) = recurrence_from_moments(&adjusted, m).map_err(shrink)?;
    let (x, w) = gauss_rule(&alpha, &beta);
    if x[0] <= neg_atom {
        return Err(LabError::InvalidMoments(format!(
            "rule node {} falls at or below neg_atom {neg_atom}; shrink neg_prob",
            x[0]
        )));
    }
    let mut atoms = vec![neg_atom];
    let mut probs = vec![neg_prob];
    let total: f64 = w.iter().sum();
    for (a, p) in x.into_iter().zip(w) {
        atoms.push(a);
        probs.push((1.0 - neg_prob) * p / total);
    }
    let d = DiscreteDistribution::new(atoms, probs)?;
    if let Some((k, got, want)) = moment_mismatch(&d, mu, l) {
        return Err(LabError::InvalidMoments(format!(
            "moment {k} off: {got} vs {want}; shrink neg_prob or l"
        )));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Yes,
    No,
}

impl std::str::FromStr for Flavor {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "yes" => Ok(Flavor::Yes),
            "no" => Ok(Flavor::No),
            _ => Err(LabError::param("flavor", format!("expected yes or no, got {s}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PtfInstance {
    n: usize,
    l: u32,
    basis: Frame,
    coeffs: Vec<f64>,
    mu: f64,
    clip_c: f64,
    flavor: Flavor,
    stream: RngStream,
    neg_atom: f64,
    neg_prob: f64,
}

/// Laws `(mu, u)` and `v` for degree `l` with the given negative atom.
pub fn coefficient_laws(l: u32, neg_atom: f64, neg_prob: f64) -> Result<(f64, DiscreteDistribution, DiscreteDistribution)> {
    let (mu, u) = match_moments_nonneg(l)?;
    let v = match_moments_with_negative(mu, l, neg_atom, neg_prob)?;
    Ok((mu, u, v))
}

pub fn sample_ptf_instance(n: usize, l: u32, clip_c: f64, flavor: Flavor, stream: RngStream) -> Result<PtfInstance> {
    sample_ptf_instance_with(n, l, clip_c, flavor, DEFAULT_NEG_ATOM, DEFAULT_NEG_PROB, stream)
}

pub fn sample_ptf_instance_with(
    n: usize,
    l: u32,
    clip_c: f64,
    flavor: Flavor,
    neg_atom: f64,
    neg_prob: f64,
    stream: RngStream,
) -> Result<PtfInstance> {
    if n == 0 {
        return Err(LabError::param("n", "must be positive"));
    }
    if !(clip_c > 0.0) {
        return Err(LabError::param("clip_c", "must be positive"));
    }
    let (mu, u, v) = coefficient_laws(l, neg_atom, neg_prob)?;
    let mut rng = stream.rng();
    let basis = sample_haar_frame(n, n, &mut rng)?.with_scale(1.0 / (n as f64).sqrt());
    let law = match flavor {
        Flavor::Yes => &u,
        Flavor::No => &v,
    };
    let coeffs = (0..n).map(|_| law.sample(&mut rng)).collect();
    Ok(PtfInstance {
        n,
        l,
        basis,
        coeffs,
        mu,
        clip_c,
        flavor,
        stream,
        neg_atom,
        neg_prob,
    })
}

impl PtfInstance {
    /// Assemble an instance from explicit parts; the basis must be a full
    /// orthonormal frame, and it is rescaled to `1/sqrt(n)`.
    pub fn from_parts(basis: Frame, coeffs: Vec<f64>, mu: f64, clip_c: f64, flavor: Flavor) -> Result<Self> {
        let n = basis.ambient_dim();
        if basis.count() != n {
            return Err(LabError::param("basis", "must have n vectors"));
        }
        check_dim(n, coeffs.len())?;
        if flavor == Flavor::Yes && coeffs.iter().any(|&c| c < 0.0) {
            return Err(LabError::param("coeffs", "yes instances need nonnegative coefficients"));
        }
        if !(clip_c > 0.0) {
            return Err(LabError::param("clip_c", "must be positive"));
        }
        Ok(PtfInstance {
            n,
            l: 0,
            basis: basis.with_scale(1.0 / (n as f64).sqrt()),
            coeffs,
            mu,
            clip_c,
            flavor,
            stream: RngStream::new(0, PTF_STREAM),
            neg_atom: DEFAULT_NEG_ATOM,
            neg_prob: DEFAULT_NEG_PROB,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn basis(&self) -> &Frame {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn clip_c(&self) -> f64 {
        self.clip_c
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn stream(&self) -> RngStream {
        self.stream
    }

    pub fn neg_atom(&self) -> f64 {
        self.neg_atom
    }

    pub fn neg_prob(&self) -> f64 {
        self.neg_prob
    }

    fn clip_ok(&self, x: &[f64]) -> bool {
        norm(x) <= (self.n as f64).sqrt() + self.clip_c
    }

    /// `sum_i c_i z_i^2 <= n mu` for coordinates `z` in the unit basis.
    fn quad_canonical(&self, z: &[f64]) -> bool {
        let s: f64 = self.coeffs.iter().zip(z).map(|(c, v)| c * v * v).sum();
        s <= self.n as f64 * self.mu
    }

    /// `1` iff `sum_i c_i (a_i . x)^2 <= mu` and `|x| <= sqrt(n) + C`.
    pub fn eval(&self, x: &[f64]) -> Result<bool> {
        let z = self.basis.coords(x)?;
        Ok(self.clip_ok(x) && self.quad_canonical(&z))
    }

    /// Same predicate evaluated on the scaled vectors `a_i = u_i / sqrt(n)`.
    pub fn eval_scaled(&self, x: &[f64]) -> Result<bool> {
        let a = self.basis.scaled_coords(x)?;
        let s: f64 = self.coeffs.iter().zip(&a).map(|(c, v)| c * v * v).sum();
        Ok(self.clip_ok(x) && s <= self.mu)
    }

    /// Predicate on basis coordinates `z`; the clip uses `|z| = |x|`.
    pub fn eval_in_basis(&self, z: &[f64]) -> Result<bool> {
        check_dim(self.n, z.len())?;
        Ok(self.clip_ok(z) && self.quad_canonical(z))
    }

    /// Indices with negative coefficients.
    pub fn negative_coords(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.coeffs[i] < 0.0).collect()
    }
}

pub fn eval_ptf(inst: &PtfInstance, x: &[f64]) -> Result<bool> {
    inst.eval(x)
}

/// Line-by-line non-convexity of a no instance.
///
/// Works in basis coordinates. Each line fixes a Gaussian point, zeroes its
/// negative-coefficient coordinates `S1`, and runs through the result along a
/// random unit direction supported on `S1`. On each line, triples of
/// independent `N(0, 1)` positions are sorted and the label pattern `(1, 0, 1)`
/// is counted: such a triple is a collinear witness that the set is not
/// convex.
pub fn estimate_no_distance(inst: &PtfInstance, lines: usize, triples_per_line: usize, stream: RngStream) -> Result<ExperimentReport> {
    if inst.flavor != Flavor::No {
        return Err(LabError::param("inst", "estimate_no_distance needs a no-flavor instance"));
    }
    if lines == 0 || triples_per_line == 0 {
        return Err(LabError::param("lines", "need at least one line and one triple"));
    }
    let s1 = inst.negative_coords();
    let mut report = ExperimentReport::new("ptf-no-distance", stream.seed);
    report
        .param("n", inst.n)
        .param("l", inst.l)
        .param_f("mu", inst.mu)
        .param_f("clip_c", inst.clip_c)
        .param("negative coefficients", s1.len())
        .param("lines", lines)
        .param("triples_per_line", triples_per_line);
    if s1.is_empty() {
        report.note("no negative coefficient in this draw: the set is convex and no witness exists");
        report.estimate("pattern (1,0,1) frequency", 0.0, 0.0, 0);
        return Ok(report.finish());
    }
    let n = inst.n;
    let per_line = par_blocks(stream, lines, 64, |s, _, len| {
        let mut rng = s.rng();
        let mut z = vec![0.0; n];
        let mut d = vec![0.0; s1.len()];
        let mut out = Vec::with_capacity(len);
        let mut p = vec![0.0; n];
        for _ in 0..len {
            fill_normals(&mut rng, &mut z);
            for &i in &s1 {
                z[i] = 0.0;
            }
            fill_normals(&mut rng, &mut d);
            let nd = norm(&d);
            d.iter_mut().for_each(|v| *v /= nd);
            let mut hits = 0u64;
            let label = |t: f64, p: &mut [f64]| {
                p.copy_from_slice(&z);
                for (k, &i) in s1.iter().enumerate() {
                    p[i] = t * d[k];
                }
                inst.eval_in_basis(p).expect("dimension fixed")
            };
            for _ in 0..triples_per_line {
                let mut t = [0.0f64; 3];
                fill_normals(&mut rng, &mut t);
                t.sort_by(f64::total_cmp);
                if label(t[0], &mut p) && !label(t[1], &mut p) && label(t[2], &mut p) {
                    hits += 1;
                }
            }
            out.push(hits);
        }
        out
    });
    let hits: Vec<u64> = per_line.into_iter().flatten().collect();
    let total: u64 = hits.iter().sum();
    let trials = (lines * triples_per_line) as u64;
    let freq = total as f64 / trials as f64;
    let (lo, hi) = wilson_interval(total, trials, Z99_ONE_SIDED);
    let witness_lines = hits.iter().filter(|&&h| h > 0).count();
    report.estimate("pattern (1,0,1) frequency", freq, 0.5 * (hi - lo), trials);
    report.estimate("lines with a witness", witness_lines as f64 / lines as f64, 0.0, lines as u64);
    report.check_ge(
        "99% lower confidence bound on pattern frequency > 0",
        BoundSource::Exact,
        lo,
        f64::MIN_POSITIVE,
    );
    Ok(report.finish())
}

/// `S` (r x q) in a factorization `X^T = U S` with orthonormal `U`.
fn query_factor(queries: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    let q = queries.len();
    DMatrix::from_fn(n, q, |i, t| queries[t][i]).qr().r()
}

/// Empirical TV between the yes and no response vectors on fixed queries.
///
/// Both sides share one Haar basis per trial and draw coefficients from `u`
/// and `v` respectively. Only the `n x q` matrix of products `a_j . X_t`
/// enters, and for a Haar rotation `O` it equals `(O U) S` where
/// `X^T = U S`; `O U` is a uniformly random orthonormal `n x r` frame, which
/// is sampled directly.
pub fn response_tv_experiment(queries: &[Vec<f64>], n: usize, l: u32, trials: usize, stream: RngStream) -> Result<ExperimentReport> {
    response_tv_experiment_with(queries, n, l, DEFAULT_CLIP, trials, stream)
}

pub fn response_tv_experiment_with(
    queries: &[Vec<f64>],
    n: usize,
    l: u32,
    clip_c: f64,
    trials: usize,
    stream: RngStream,
) -> Result<ExperimentReport> {
    let q = queries.len();
    if q == 0 || q > MAX_RESPONSE_QUERIES {
        return Err(LabError::TooManyQueries {
            got: q,
            max: MAX_RESPONSE_QUERIES,
        });
    }
    if trials == 0 {
        return Err(LabError::param("trials", "must be positive"));
    }
    let radius = (n as f64).sqrt() + clip_c;
    for x in queries {
        check_dim(n, x.len())?;
        if norm(x) > radius {
            return Err(LabError::param("queries", "every query must satisfy the clip"));
        }
    }
    let (mu, u, v) = coefficient_laws(l, DEFAULT_NEG_ATOM, DEFAULT_NEG_PROB)?;
    let smat = query_factor(queries, n);
    let rank = smat.nrows();
    let nf = n as f64;
    let bad_threshold = 10.0 * nf.ln() / nf;
    #[derive(Default)]
    struct Acc {
        yes: BTreeMap<u32, u64>,
        no: BTreeMap<u32, u64>,
        yes_all: BTreeMap<u32, u64>,
        no_all: BTreeMap<u32, u64>,
        bad: u64,
    }
    let blocks = par_blocks(stream, trials, 256, |s, _, len| -> Result<Acc> {
        let mut rng = s.rng();
        let mut acc = Acc::default();
        let mut g = vec![0.0; n * rank];
        for _ in 0..len {
            fill_normals(&mut rng, &mut g);
            let w = stiefel(&g, n, rank);
            // products a_j . X_t = (W S)[j, t] / sqrt(n)
            let p = (&w * &smat) / nf.sqrt();
            let bad = p.iter().any(|&v| v * v >= bad_threshold);
            let cu: Vec<f64> = (0..n).map(|_| u.sample(&mut rng)).collect();
            let cv: Vec<f64> = (0..n).map(|_| v.sample(&mut rng)).collect();
            let (mut ry, mut rn) = (0u32, 0u32);
            for t in 0..q {
                let col = p.column(t);
                let sy: f64 = cu.iter().zip(col.iter()).map(|(c, a)| c * a * a).sum();
                let sn: f64 = cv.iter().zip(col.iter()).map(|(c, a)| c * a * a).sum();
                ry |= ((sy <= mu) as u32) << t;
                rn |= ((sn <= mu) as u32) << t;
            }
            *acc.yes_all.entry(ry).or_default() += 1;
            *acc.no_all.entry(rn).or_default() += 1;
            if bad {
                acc.bad += 1;
            } else {
                *acc.yes.entry(ry).or_default() += 1;
                *acc.no.entry(rn).or_default() += 1;
            }
        }
        Ok(acc)
    });
    let mut tot = Acc::default();
    for b in blocks {
        let b = b?;
        for (dst, src) in [
            (&mut tot.yes, b.yes),
            (&mut tot.no, b.no),
            (&mut tot.yes_all, b.yes_all),
            (&mut tot.no_all, b.no_all),
        ] {
            for (k, c) in src {
                *dst.entry(k).or_default() += c;
            }
        }
        tot.bad += b.bad;
    }
    let t = trials as u64;
    let bad_freq = tot.bad as f64 / trials as f64;
    let bound = (q as f64) * nf * nf.powf(-4.5);
    let sigma = binomial_sigma(bad_freq, bound, t);
    let mut report = ExperimentReport::new("ptf-response-tv", stream.seed);
    report
        .param("n", n)
        .param("l", l)
        .param("q", q)
        .param_f("clip_c", clip_c)
        .param("trials", trials);
    report.estimate("TV", tv_distance(&tot.yes_all, &tot.no_all), tv_noise_bound(&tot.yes_all, &tot.no_all), t);
    report.estimate("TV | not bad", tv_distance(&tot.yes, &tot.no), tv_noise_bound(&tot.yes, &tot.no), t - tot.bad);
    report.estimate("bad basis frequency", bad_freq, 3.0 * sigma, t);
    report.check_le(
        "bad basis frequency <= q n n^(-9/2) + 3 sigma",
        BoundSource::Analytic,
        bad_freq,
        bound + 3.0 * sigma,
    );
    Ok(report.finish())
}

/// Orthonormalize the columns of a column-major `n x k` Gaussian matrix (two MGS passes).
fn stiefel(g: &[f64], n: usize, k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_column_slice(n, k, g);
    for _ in 0..2 {
        for j in 0..k {
            for i in 0..j {
                let d = m.column(i).dot(&m.column(j));
                let ci = m.column(i).clone_owned();
                m.column_mut(j).axpy(-d, &ci, 1.0);
            }
            let nj = m.column(j).norm();
            m.column_mut(j).unscale_mut(nj);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::special::{cdf, pdf};

    #[test]
    fn raw_moment_recurrence() {
        assert_eq!(gaussian_raw_moment(0.7, 0), 1.0);
        assert_eq!(gaussian_raw_moment(0.7, 1), 0.7);
        assert_eq!(gaussian_raw_moment(1.0, 3), 4.0);
        for mu in [-1.5f64, 0.0, 0.3, 2.0] {
            assert!((gaussian_raw_moment(mu, 3) - (mu.powi(3) + 3.0 * mu)).abs() < 1e-12);
            assert!((gaussian_raw_moment(mu, 4) - (mu.powi(4) + 6.0 * mu * mu + 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn nonneg_examples() {
        let (mu, u) = match_moments_nonneg(1).unwrap();
        assert_eq!((mu, u.atoms(), u.probs()), (1.0, &[1.0][..], &[1.0][..]));
        let (mu, u) = match_moments_nonneg(3).unwrap();
        assert!((mu - 1.0).abs() < 1e-14);
        assert_eq!(u.atoms()[0], 0.0);
        assert!((u.atoms()[1] - 2.0).abs() < 1e-14);
        assert!((u.probs()[0] - 0.5).abs() < 1e-14);
        let (mu, u) = match_moments_nonneg(5).unwrap();
        let r3 = 3f64.sqrt();
        assert!((mu - r3).abs() < 1e-13);
        for (a, want) in u.atoms().iter().zip([0.0, r3, 2.0 * r3]) {
            assert!((a - want).abs() < 1e-13);
        }
        for (p, want) in u.probs().iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
            assert!((p - want).abs() < 1e-13);
        }
        assert!(match_moments_nonneg(4).is_err());
    }

    #[test]
    fn negative_examples() {
        let v = match_moments_with_negative(1.0, 1, -1.0, 0.5).unwrap();
        assert_eq!(v.atoms().len(), 2);
        assert!((v.atoms()[1] - 3.0).abs() < 1e-12);
        assert!((v.probs()[0] - 0.5).abs() < 1e-15);
        let v = match_moments_with_negative(1.0, 3, -1.0, 0.01).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.atoms()[0], -1.0);
        assert_eq!(v.probs()[0], 0.01);
        assert!((v.prob_negative() - 0.01).abs() < 1e-15);
        for k in 1..=3 {
            assert!((v.moment(k) - gaussian_raw_moment(1.0, k)).abs() < 1e-9 * gaussian_raw_moment(1.0, k).max(1.0));
        }
    }

    #[test]
    fn oversized_negative_mass_is_rejected() {
        // a point mass at -1 of weight 0.9 leaves adjusted moments with negative variance
        let err = match_moments_with_negative(1.0, 3, -1.0, 0.9).unwrap_err();
        assert!(err.to_string().contains("shrink neg_prob"), "{err}");
    }

    #[test]
    fn eval_examples() {
        let inst = sample_ptf_instance(20, 3, DEFAULT_CLIP, Flavor::Yes, RngStream::new(1, 0)).unwrap();
        assert!(inst.eval(&[0.0; 20]).unwrap());
        let mut x = vec![0.0; 20];
        x[3] = 20f64.sqrt() + DEFAULT_CLIP + 1.0;
        assert!(!inst.eval(&x).unwrap());
        assert!(inst.eval(&[0.0; 3]).is_err());
        assert!(inst.coeffs().iter().all(|&c| c >= 0.0));
        assert!((inst.basis().scale() - 1.0 / 20f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn evaluation_paths_agree() {
        let inst = sample_ptf_instance(30, 5, DEFAULT_CLIP, Flavor::No, RngStream::new(5, 0)).unwrap();
        let mut rng = RngStream::new(6, 0).rng();
        let mut x = vec![0.0; 30];
        for _ in 0..10_000 {
            fill_normals(&mut rng, &mut x);
            let z = inst.basis().coords(&x).unwrap();
            let a = inst.eval(&x).unwrap();
            assert_eq!(a, inst.eval_in_basis(&z).unwrap());
            let s: f64 = inst.coeffs().iter().zip(&z).map(|(c, v)| c * v * v).sum();
            if (s - 30.0 * inst.mu()).abs() > 1e-9 * s.abs().max(1.0) {
                assert_eq!(a, inst.eval_scaled(&x).unwrap());
            }
        }
    }

    #[test]
    fn yes_instances_are_midpoint_convex() {
        let inst = sample_ptf_instance(10, 3, DEFAULT_CLIP, Flavor::Yes, RngStream::new(2, 0)).unwrap();
        let mut rng = RngStream::new(3, 0).rng();
        let (mut x, mut y) = (vec![0.0; 10], vec![0.0; 10]);
        let mut checked = 0;
        for _ in 0..10_000 {
            fill_normals(&mut rng, &mut x);
            fill_normals(&mut rng, &mut y);
            if inst.eval(&x).unwrap() && inst.eval(&y).unwrap() {
                let m: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
                assert!(inst.eval(&m).unwrap());
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn negative_fraction_matches_neg_prob() {
        let (_, _, v) = coefficient_laws(3, -1.0, 0.01).unwrap();
        let mut rng = RngStream::new(11, 0).rng();
        let m = 100_000;
        let neg = (0..m).filter(|_| v.sample(&mut rng) < 0.0).count() as f64 / m as f64;
        assert!((neg - 0.01).abs() < 4.0 * (0.01 * 0.99 / m as f64).sqrt());
    }

    #[test]
    fn seeded_instances_repeat() {
        let a = sample_ptf_instance(12, 3, 5.0, Flavor::No, RngStream::new(9, 1)).unwrap();
        let b = sample_ptf_instance(12, 3, 5.0, Flavor::No, RngStream::new(9, 1)).unwrap();
        assert_eq!(a.coeffs(), b.coeffs());
        assert_eq!(a.basis(), b.basis());
    }

    /// Two-dimensional toy: coefficients (-1, +1) in the standard basis, so
    /// the set is `x1^2 >= x2^2 - 2 mu` and every line along `e1` has label 1
    /// outside `|t| < T(x2)` with `T = sqrt(max(0, x2^2 - 2 mu))`. Three sorted
    /// standard normals show `(1, 0, 1)` with probability
    /// `6 Phi(-T)^2 (1 - 2 Phi(-T))`.
    #[test]
    fn toy_no_distance_matches_line_formula() {
        let mu = 0.5;
        let inst = PtfInstance::from_parts(Frame::identity(2), vec![-1.0, 1.0], mu, 1e6, Flavor::No).unwrap();
        let steps = 40_000;
        let (lo, hi) = (-12.0, 12.0);
        let h = (hi - lo) / steps as f64;
        let mut want = 0.0;
        for i in 0..=steps {
            let x2: f64 = lo + i as f64 * h;
            let tail = cdf(-(x2 * x2 - 2.0 * mu).max(0.0).sqrt());
            let f = pdf(x2) * 6.0 * tail * tail * (1.0 - 2.0 * tail);
            want += if i == 0 || i == steps { 0.5 * f } else { f };
        }
        want *= h;
        let rep = estimate_no_distance(&inst, 20_000, 20, RngStream::new(4, 0)).unwrap();
        let got = rep.get("pattern (1,0,1) frequency").unwrap();
        // per-line frequencies lie in [0, 1], so their variance is at most the mean
        let se = (want / 20_000.0).sqrt();
        assert!((got - want).abs() < 5.0 * se, "got {got}, want {want}");
        assert!(rep.all_passed());
    }

    #[test]
    fn no_distance_rejects_yes() {
        let inst = sample_ptf_instance(8, 3, DEFAULT_CLIP, Flavor::Yes, RngStream::new(1, 0)).unwrap();
        assert!(estimate_no_distance(&inst, 10, 10, RngStream::new(1, 1)).is_err());
    }

    #[test]
    fn origin_query_gives_zero_tv() {
        let rep = response_tv_experiment(&[vec![0.0; 16]], 16, 3, 2000, RngStream::new(1, 2)).unwrap();
        assert_eq!(rep.get("TV").unwrap(), 0.0);
        assert!(rep.all_passed());
    }

    #[test]
    fn too_many_queries() {
        let qs = vec![vec![0.0; 4]; 21];
        assert!(matches!(
            response_tv_experiment(&qs, 4, 3, 10, RngStream::new(0, 0)),
            Err(LabError::TooManyQueries { .. })
        ));
    }

    #[test]
    fn stiefel_columns_are_orthonormal() {
        let mut rng = RngStream::new(8, 0).rng();
        let mut g = vec![0.0; 50 * 6];
        fill_normals(&mut rng, &mut g);
        let w = stiefel(&g, 50, 6);
        let e = (w.transpose() * &w - DMatrix::<f64>::identity(6, 6)).abs().max();
        assert!(e < 1e-13);
    }
}
