//! The adaptive "no" distribution over `R^{2n}`.
//!
//! A Haar orthonormal basis of `R^{2n}` is split into a control frame `C`
//! and an action frame `A`, each of `n` vectors. A Nazarov body `B` lives in
//! control coordinates, and every halfspace `i` gets an action direction
//! `v^i ~ N(0, I_n)` in action coordinates. The function is 1 on
//! `B ∩ Ball(sqrt(2n))`. On the flaps it keeps only the points that lie
//! outside every strip `|<v^j, x_A>| <= sqrt(n)/2` of their violated
//! halfspaces, which makes it far from convex. Violating triples witness
//! that distance, and the event detectors track what a `q`-query tester
//! can observe.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, LabError, Result};
use crate::gauss::frame::{axpy, dot, norm, sample_haar_frame, Frame};
use crate::gauss::rng::{fill_normals, par_blocks, RngStream};
use crate::nazarov::{default_facet_count, solve_r_half, NazarovBody, PointKind};
use crate::report::{BoundSource, ExperimentReport};
use crate::stats::{mean_se, wilson_interval, Z99_ONE_SIDED};
use crate::testers::QueryTranscript;

/// Stream id used when an instance is regenerated from a seed alone.
pub const ADAPTIVE_STREAM: u64 = 0x6164_6170;

/// Asserted ceiling on `P[strip crossing] / (sqrt(q) log2(n) / n^{1/4})`.
pub const STRIP_CROSSING_CONSTANT: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct AdaptiveInstance {
    n: usize,
    big_n: usize,
    r: f64,
    stream: RngStream,
    control: Frame,
    action: Frame,
    body: NazarovBody,
    /// Row-major `N x n`, coordinates in the action frame.
    action_dirs: Vec<f64>,
    dir_norms: Vec<f64>,
    strip_half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolatingTriple {
    pub x: Vec<f64>,
    pub x_plus: Vec<f64>,
    pub x_minus: Vec<f64>,
    pub flap_index: usize,
}

/// Sample an instance; `N` defaults to `2^ceil(sqrt(n))` (capped).
pub fn sample_adaptive_instance(n: usize, big_n: Option<usize>, stream: RngStream) -> Result<AdaptiveInstance> {
    if n < 4 {
        return Err(LabError::param("n", "must be at least 4"));
    }
    let big_n = big_n.unwrap_or_else(|| default_facet_count(n));
    let r = solve_r_half(n, big_n as f64)?;
    let mut rng = stream.rng();
    let basis = sample_haar_frame(2 * n, 2 * n, &mut rng)?;
    let rows = basis.as_rows();
    let split = n * 2 * n;
    let control = Frame::new(2 * n, rows[..split].to_vec(), 1.0)?;
    let action = Frame::new(2 * n, rows[split..].to_vec(), 1.0)?;
    let body = NazarovBody::sample(n, big_n, r, &mut rng)?.with_frame(control.clone())?;
    let mut action_dirs = vec![0.0; big_n * n];
    fill_normals(&mut rng, &mut action_dirs);
    let dir_norms = action_dirs.chunks_exact(n).map(norm).collect();
    Ok(AdaptiveInstance {
        n,
        big_n,
        r,
        stream,
        control,
        action,
        body,
        action_dirs,
        dir_norms,
        strip_half_width: (n as f64).sqrt() / 2.0,
    })
}

impl AdaptiveInstance {
    /// Regenerate the instance belonging to `seed`.
    pub fn from_seed(n: usize, big_n: Option<usize>, seed: u64) -> Result<Self> {
        sample_adaptive_instance(n, big_n, RngStream::new(seed, ADAPTIVE_STREAM))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn big_n(&self) -> usize {
        self.big_n
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn stream(&self) -> RngStream {
        self.stream
    }

    pub fn control(&self) -> &Frame {
        &self.control
    }

    pub fn action(&self) -> &Frame {
        &self.action
    }

    pub fn body(&self) -> &NazarovBody {
        &self.body
    }

    pub fn strip_half_width(&self) -> f64 {
        self.strip_half_width
    }

    /// Action direction `i` in action coordinates.
    pub fn action_dir(&self, i: usize) -> &[f64] {
        &self.action_dirs[i * self.n..(i + 1) * self.n]
    }

    /// Action direction `i` as a unit vector of `R^{2n}`.
    pub fn action_dir_ambient(&self, i: usize) -> Vec<f64> {
        let mut v = self.action.lift(self.action_dir(i)).expect("dimensions agree");
        let s = 1.0 / self.dir_norms[i];
        v.iter_mut().for_each(|c| *c *= s);
        v
    }

    /// The same instance with zero strip width: every flap point outside a
    /// measure-zero set is labelled 1, so the function is the indicator of
    /// the convex set `{|x| <= sqrt(2n), |x_C| <= sqrt(n)}` almost everywhere.
    pub fn convexified(&self) -> Self {
        let mut c = self.clone();
        c.strip_half_width = 0.0;
        c
    }

    /// `1[<v^j, x_A> ∉ [-w, w]]` for action coordinates `xa`.
    pub fn strip_indicator(&self, j: usize, xa: &[f64]) -> bool {
        dot(self.action_dir(j), xa).abs() > self.strip_half_width
    }

    pub fn eval(&self, x: &[f64]) -> Result<bool> {
        check_dim(self.dim(), x.len())?;
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> bool {
        let nf = self.n as f64;
        if dot(x, x) > 2.0 * nf {
            return false;
        }
        let mut xc = vec![0.0; self.n];
        self.control.coords_into(x, &mut xc);
        let class = self.body.classify_unchecked(&xc);
        match class.kind {
            PointKind::Outside => false,
            PointKind::InBody => true,
            PointKind::InFlaps => {
                let mut xa = vec![0.0; self.n];
                self.action.coords_into(x, &mut xa);
                class.violated.iter().all(|&j| self.strip_indicator(j, &xa))
            }
        }
    }
}

/// Label of `x` under the instance.
pub fn eval_adaptive(inst: &AdaptiveInstance, x: &[f64]) -> Result<bool> {
    inst.eval(x)
}

fn try_triple(inst: &AdaptiveInstance, x: &[f64], a_const: f64) -> Option<ViolatingTriple> {
    let n = inst.n as f64;
    let outer = (2.0 * n).sqrt();
    let nx = norm(x);
    if nx < outer - 2.0 || nx > outer - 1.0 {
        return None;
    }
    let xc = inst.control.coords(x).ok()?;
    let nxc = norm(&xc);
    if nxc < n.sqrt() - a_const || nxc > n.sqrt() {
        return None;
    }
    let i = inst.body.classify_unchecked(&xc).unique()?;
    let v = inst.action_dir_ambient(i);
    let mut x_plus = x.to_vec();
    axpy(1.0, &v, &mut x_plus);
    let mut x_minus = x.to_vec();
    axpy(-1.0, &v, &mut x_minus);
    if !inst.eval_unchecked(x) && inst.eval_unchecked(&x_plus) && inst.eval_unchecked(&x_minus) {
        Some(ViolatingTriple {
            x: x.to_vec(),
            x_plus,
            x_minus,
            flap_index: i,
        })
    } else {
        None
    }
}

/// Draw `x ~ N(0, I_{2n})` until it seeds a violating triple.
pub fn sample_violating_triple<R: Rng + ?Sized>(
    inst: &AdaptiveInstance,
    max_attempts: usize,
    a_const: f64,
    rng: &mut R,
) -> Option<ViolatingTriple> {
    let mut x = vec![0.0; inst.dim()];
    for _ in 0..max_attempts {
        fill_normals(rng, &mut x);
        if let Some(t) = try_triple(inst, &x, a_const) {
            return Some(t);
        }
    }
    None
}

/// Lower bound on `-ln` of the Gaussian density ratio between two points of
/// `Ball(sqrt(2n))` whose radii differ by at most 2, one of them in ThinShell.
fn worst_log_density_ratio(n: usize) -> f64 {
    let outer = (2.0 * n as f64).sqrt();
    let inner = outer - 2.0;
    0.5 * (outer * outer - inner * inner)
}

/// Mass of violating-triple seeds and the distance proxy derived from it.
pub fn estimate_distance_lb(inst: &AdaptiveInstance, trials: usize, a_const: f64, stream: RngStream) -> Result<ExperimentReport> {
    if trials < 100_000 {
        return Err(LabError::param("trials", "must be at least 10^5"));
    }
    let blocks = par_blocks(stream, trials, 8192, |s, _, len| {
        let mut rng = s.rng();
        let mut x = vec![0.0; inst.dim()];
        let mut hits = 0u64;
        let mut ratio_sum = 0.0;
        for _ in 0..len {
            fill_normals(&mut rng, &mut x);
            if let Some(t) = try_triple(inst, &x, a_const) {
                hits += 1;
                let q = dot(&t.x, &t.x);
                let worst = dot(&t.x_plus, &t.x_plus).max(dot(&t.x_minus, &t.x_minus));
                ratio_sum += (-(worst - q) / 2.0).exp().min(1.0);
            }
        }
        (hits, ratio_sum)
    });
    let (hits, ratio_sum) = blocks.into_iter().fold((0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let t = trials as u64;
    let p = hits as f64 / trials as f64;
    let (lo, hi) = wilson_interval(hits, t, Z99_ONE_SIDED);
    let density = (-worst_log_density_ratio(inst.n)).exp();
    let mut report = ExperimentReport::new("adaptive-distance", stream.seed);
    report
        .param("n", inst.n)
        .param("N", inst.big_n)
        .param_f("r", inst.r)
        .param_f("a", a_const)
        .param("instance_seed", inst.stream.seed)
        .param("trials", trials);
    report.estimate("p_hat", p, (hi - lo) / 2.0, t);
    report.estimate("p_hat wilson low (99%)", lo, 0.0, t);
    report.estimate("worst-case density ratio", density, 0.0, 0);
    report.estimate("distance proxy p_hat/3 * density ratio", p / 3.0 * density, 0.0, t);
    if hits > 0 {
        report.estimate("mean observed density ratio", ratio_sum / hits as f64, 0.0, hits);
    }
    report.check_ge("p_hat > 0 at 99% confidence (Wilson lower bound)", BoundSource::Analytic, lo, f64::MIN_POSITIVE);
    Ok(report.finish())
}

/// Which of the observation events hold for a transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventFlags {
    pub e1: bool,
    pub e2: bool,
    pub e11: bool,
    pub e12: bool,
    pub e13: bool,
    pub e14: bool,
    pub e15: bool,
}

struct QueryGeom {
    x: Vec<f64>,
    xc: Vec<f64>,
    xa: Vec<f64>,
    xc_norm: f64,
    violated: Vec<usize>,
    max_ip: f64,
}

/// Evaluate the event flags on the queries of `transcript`.
///
/// Restricted to `Q~ = {x : |x_C| <= sqrt(n)}` except for the distortion
/// event E15, which ranges over all pairs of queries.
pub fn detect_events(inst: &AdaptiveInstance, transcript: &QueryTranscript, q: usize) -> Result<EventFlags> {
    let n = inst.n;
    let nf = n as f64;
    let qf = q as f64;
    let mut all = Vec::with_capacity(transcript.len());
    for e in transcript.entries() {
        check_dim(inst.dim(), e.point.len())?;
        let xc = inst.control.coords(&e.point)?;
        let xa = inst.action.coords(&e.point)?;
        let xc_norm = norm(&xc);
        let mut max_ip = f64::NEG_INFINITY;
        let mut violated = Vec::new();
        for i in 0..inst.big_n {
            let ip = dot(inst.body.normal(i), &xc);
            max_ip = max_ip.max(ip);
            if ip > inst.r && xc_norm <= nf.sqrt() {
                violated.push(i);
            }
        }
        all.push(QueryGeom {
            x: e.point.clone(),
            xc,
            xa,
            xc_norm,
            violated,
            max_ip,
        });
    }
    let tilde: Vec<&QueryGeom> = all.iter().filter(|g| g.xc_norm <= nf.sqrt()).collect();

    let quarter = nf.powf(0.25);
    let diam = 1000.0 * qf.sqrt() * quarter;

    // points of Q~ per flap
    let mut flaps: std::collections::BTreeMap<usize, Vec<&QueryGeom>> = Default::default();
    for g in &tilde {
        for &i in &g.violated {
            flaps.entry(i).or_default().push(g);
        }
    }

    let few_flaps = tilde.iter().all(|g| g.violated.len() <= q);
    let close = flaps.values().all(|pts| {
        pts.iter()
            .enumerate()
            .all(|(a, x)| pts[a + 1..].iter().all(|y| dist(&x.x, &y.x) <= diam))
    });
    let e1 = few_flaps && close;

    let e2 = flaps.iter().all(|(&i, pts)| {
        let first = inst.strip_indicator(i, &pts[0].xa);
        pts.iter().all(|g| inst.strip_indicator(i, &g.xa) == first)
    });

    let e11 = tilde.iter().all(|g| g.violated.len() < q.max(1));
    let e12 = tilde
        .iter()
        .all(|g| !(g.xc_norm < nf.sqrt() - 100.0 * qf && !g.violated.is_empty()));
    let e13 = tilde.iter().all(|g| g.max_ip < inst.r + 100.0 * qf * quarter);

    let mut e14 = true;
    'outer: for x in &tilde {
        if x.violated.is_empty() {
            continue;
        }
        let xx = dot(&x.xc, &x.xc);
        for z in &tilde {
            if std::ptr::eq(*x, *z) || xx == 0.0 {
                continue;
            }
            let coef = dot(&z.xc, &x.xc) / xx;
            let mut w = z.xc.clone();
            axpy(-coef, &x.xc, &mut w);
            let b = norm(&w);
            if b <= 1e-12 * norm(&z.xc).max(1.0) {
                continue;
            }
            for &i in &x.violated {
                if (dot(&w, inst.body.normal(i)) / b).abs() >= 100.0 * qf.sqrt() {
                    e14 = false;
                    break 'outer;
                }
            }
        }
    }

    let mut e15 = true;
    'pairs: for (a, x) in all.iter().enumerate() {
        for y in &all[a + 1..] {
            let d = dist(&x.x, &y.x);
            let dc = dist(&x.xc, &y.xc);
            if d > 2.0 * dc {
                e15 = false;
                break 'pairs;
            }
        }
    }

    Ok(EventFlags {
        e1,
        e2,
        e11,
        e12,
        e13,
        e14,
        e15,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn uniform_in_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R, out: &mut [f64]) {
    fill_normals(rng, out);
    let nv = norm(out);
    let u: f64 = rng.random();
    let s = if nv > 0.0 { radius * u.powf(1.0 / dim as f64) / nv } else { 0.0 };
    out.iter_mut().for_each(|v| *v *= s);
}

fn project_to_ball(x: &mut [f64], radius: f64) {
    let nx = norm(x);
    if nx > radius {
        let s = radius / nx;
        x.iter_mut().for_each(|v| *v *= s);
    }
}

/// Probability that a point `y` near a cluster `X` whose strip indicators
/// agree lands on the other side of the strip boundary.
///
/// Works in action coordinates: `x*` is the action part of a Gaussian query,
/// cluster points and `y` are `x*` plus uniform perturbations of norm at most
/// `cluster_radius / 2` (then projected into `Ball(sqrt(2n))`), and the
/// direction `v ~ N(0, I_n)` is fresh per trial.
pub fn strip_crossing_experiment(
    n: usize,
    q: usize,
    cluster_radius: Option<f64>,
    trials: usize,
    stream: RngStream,
) -> Result<ExperimentReport> {
    if n < 4 || q == 0 || trials == 0 {
        return Err(LabError::param("n/q/trials", "need n >= 4, q >= 1, trials >= 1"));
    }
    let nf = n as f64;
    let qf = q as f64;
    let quarter = nf.powf(0.25);
    let radius = cluster_radius.unwrap_or(1000.0 * qf.sqrt() * quarter);
    if !(radius >= 0.0) {
        return Err(LabError::param("cluster_radius", "must be non-negative"));
    }
    let ln = nf.log2();
    let gamma = 50_000.0 * qf.sqrt() * quarter * ln;
    let shift = 1000.0 * qf.sqrt() * quarter * ln;
    let w = nf.sqrt() / 2.0;
    let outer = (2.0 * nf).sqrt();
    let blocks = par_blocks(stream, trials, 2048, |s, _, len| {
        let mut rng = s.rng();
        let mut centre = vec![0.0; n];
        let mut pts = vec![vec![0.0; n]; q];
        let mut y = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut delta = vec![0.0; n];
        let (mut agree, mut cross, mut anti, mut far) = (0u64, 0u64, 0u64, 0u64);
        for _ in 0..len {
            fill_normals(&mut rng, &mut centre);
            project_to_ball(&mut centre, outer);
            for p in pts.iter_mut().chain(std::iter::once(&mut y)) {
                uniform_in_ball(n, radius / 2.0, &mut rng, &mut delta);
                for k in 0..n {
                    p[k] = centre[k] + delta[k];
                }
                project_to_ball(p, outer);
            }
            for vk in v.iter_mut() {
                *vk = rng.sample(StandardNormal);
            }
            let side = |p: &[f64]| dot(&v, p).abs() > w;
            let b = side(&pts[0]);
            let centre_ip = dot(&v, &centre);
            anti += ((centre_ip.abs() - w).abs() <= gamma) as u64;
            far += ((dot(&v, &y) - centre_ip).abs() >= shift) as u64;
            if pts.iter().all(|p| side(p) == b) {
                agree += 1;
                cross += (side(&y) != b) as u64;
            }
        }
        (agree, cross, anti, far)
    });
    let (agree, cross, anti, far) = blocks
        .into_iter()
        .fold((0, 0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3));
    let p = if agree > 0 { cross as f64 / agree as f64 } else { 0.0 };
    let (lo, hi) = wilson_interval(cross, agree, Z99_ONE_SIDED);
    let scale = qf.sqrt() * ln / quarter;
    let mut report = ExperimentReport::new("strip-crossing", stream.seed);
    report
        .param("n", n)
        .param("q", q)
        .param_f("cluster_radius", radius)
        .param("trials", trials);
    report.estimate("P[cross | cluster agrees]", p, (hi - lo) / 2.0, agree);
    report.estimate("ratio to sqrt(q) log2(n) / n^(1/4)", p / scale, (hi - lo) / 2.0 / scale, agree);
    report.estimate("P[|<v,x*>| within gamma of sqrt(n)/2]", anti as f64 / trials as f64, 0.0, trials as u64);
    report.estimate("P[|<v,y-x*>| >= 1000 sqrt(q) n^(1/4) log2 n]", far as f64 / trials as f64, 0.0, trials as u64);
    report.check_le(
        "P[cross] / (sqrt(q) log2(n) / n^(1/4)) <= recorded constant",
        BoundSource::Calibrated,
        p / scale,
        STRIP_CROSSING_CONSTANT,
    );
    Ok(report.finish())
}

/// Coefficient of variation of `p_hat` across instance seeds.
pub fn distance_stability(n: usize, seeds: &[u64], trials: usize, stream: RngStream) -> Result<(Vec<f64>, f64)> {
    let mut ps = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let inst = AdaptiveInstance::from_seed(n, None, seed)?;
        let r = estimate_distance_lb(&inst, trials, 1.0, stream.substream(seed))?;
        ps.push(r.get("p_hat").unwrap_or(0.0));
    }
    let (mean, se) = mean_se(&ps);
    let cv = se * (ps.len() as f64).sqrt() / mean;
    Ok((ps, cv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::special::cdf;

    fn inst(n: usize, seed: u64) -> AdaptiveInstance {
        AdaptiveInstance::from_seed(n, None, seed).unwrap()
    }

    #[test]
    fn defaults_and_orthogonality() {
        let a = inst(16, 1);
        assert_eq!(a.big_n(), 16);
        for i in 0..16 {
            for j in 0..16 {
                assert!(dot(a.control().vector(i), a.action().vector(j)).abs() < 1e-8);
            }
        }
        let p = cdf(a.r() / 4.0).powi(16);
        assert!((p - 0.5).abs() < 1e-9);
    }

    #[test]
    fn r_at_n100() {
        let a = inst(100, 2);
        assert_eq!(a.big_n(), 1024);
        assert!((a.r() - 32.04).abs() < 0.02, "r = {}", a.r());
    }

    #[test]
    fn eval_examples() {
        let a = inst(16, 3);
        let d = a.dim();
        assert!(a.eval(&vec![0.0; d]).unwrap());
        let mut far = vec![0.0; d];
        far[0] = 1.1 * (d as f64).sqrt();
        assert!(!a.eval(&far).unwrap());
        assert!(a.eval(&[0.0]).is_err());
    }

    #[test]
    fn zero_strip_coordinate_is_labelled_zero() {
        let a = inst(16, 4);
        // put x_C just inside the ball along g^0, which violates halfspace 0 only if
        // r < sqrt(n) |g^0|; search for such a facet with a unique violation
        let n = a.n();
        for i in 0..a.big_n() {
            let g = a.body().normal(i);
            let s = 0.999 * (n as f64).sqrt() / norm(g);
            let xc: Vec<f64> = g.iter().map(|v| v * s).collect();
            let c = a.body().classify(&xc).unwrap();
            if c.violated.contains(&i) {
                let x = a.control().lift(&xc).unwrap();
                assert!(!a.eval(&x).unwrap());
                return;
            }
        }
        panic!("no facet reachable inside the ball");
    }

    #[test]
    fn regeneration_is_bit_exact() {
        let a = inst(16, 9);
        let b = inst(16, 9);
        assert_eq!(a.control(), b.control());
        assert_eq!(a.body().normals(), b.body().normals());
        assert_eq!(a.action_dirs, b.action_dirs);
    }

    #[test]
    fn triples_have_expected_labels() {
        let a = inst(100, 5);
        let mut rng = RngStream::new(5, 1).rng();
        let t = sample_violating_triple(&a, 1_000_000, 1.0, &mut rng).expect("hit");
        assert!(!a.eval(&t.x).unwrap());
        assert!(a.eval(&t.x_plus).unwrap());
        assert!(a.eval(&t.x_minus).unwrap());
        for k in 0..a.dim() {
            assert!((0.5 * (t.x_plus[k] + t.x_minus[k]) - t.x[k]).abs() < 1e-12);
        }
        let c = |p: &[f64]| a.body().classify_ambient(p).unwrap();
        assert_eq!(c(&t.x).violated, c(&t.x_plus).violated);
        assert_eq!(c(&t.x).violated, c(&t.x_minus).violated);
    }

    #[test]
    fn empty_transcript_satisfies_all_events() {
        let a = inst(16, 6);
        let f = detect_events(&a, &QueryTranscript::new(32), 3).unwrap();
        assert!(f.e1 && f.e2 && f.e11 && f.e12 && f.e13 && f.e14 && f.e15);
    }

    #[test]
    fn strip_crossing_zero_radius() {
        let r = strip_crossing_experiment(64, 2, Some(0.0), 2000, RngStream::new(1, 1)).unwrap();
        assert_eq!(r.get("P[cross | cluster agrees]").unwrap(), 0.0);
    }
}
