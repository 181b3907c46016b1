//! One-sided testers.
//!
//! A tester is a query strategy. It sees the labelled history and proposes
//! the next point or stops. [`run_one_sided`] rejects exactly when some
//! 0-labelled point lies in the convex hull of the 1-labelled points, so it
//! never rejects the indicator of a convex set. Hull membership is an LP
//! solved by a dense two-phase simplex with Bland's rule.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adaptive::{sample_adaptive_instance, sample_violating_triple, AdaptiveInstance, ViolatingTriple};
use crate::error::{check_dim, LabError, Result};
use crate::gauss::frame::{axpy, dot, norm, sample_haar_frame, Frame};
use crate::gauss::rng::{fill_normals, par_blocks, RngStream, StreamRng};
use crate::ptf::{sample_ptf_instance, Flavor, PtfInstance, DEFAULT_CLIP};
use crate::report::{BoundSource, ExperimentReport};
use crate::stats::{wilson_interval, Z99_TWO_SIDED};
use crate::tolerant::{Calibration, TolerantInstance};

/// Default `∞`-norm residual tolerance for hull membership.
pub const HULL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub point: Vec<f64>,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueryTranscript {
    dim: usize,
    entries: Vec<LabeledQuery>,
}

impl QueryTranscript {
    pub fn new(dim: usize) -> Self {
        QueryTranscript {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LabeledQuery] {
        &self.entries
    }

    pub fn push(&mut self, point: Vec<f64>, label: bool) -> Result<()> {
        check_dim(self.dim, point.len())?;
        self.entries.push(LabeledQuery { point, label });
        Ok(())
    }

    /// First `k` entries.
    pub fn prefix(&self, k: usize) -> QueryTranscript {
        QueryTranscript {
            dim: self.dim,
            entries: self.entries[..k.min(self.entries.len())].to_vec(),
        }
    }

    /// One JSON object per query with the verdict reached after it.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        let mut q0 = Vec::new();
        let mut q1 = Vec::new();
        let mut rejected = false;
        for (k, e) in self.entries.iter().enumerate() {
            if !rejected {
                rejected = check_new_entry(&self.entries, &mut q0, &mut q1, k, HULL_TOL)
                    .ok()
                    .flatten()
                    .is_some();
            }
            let line = serde_json::json!({
                "point": e.point,
                "label": e.label as u8,
                "verdict": if rejected { "reject" } else { "accept" },
            });
            out += &line.to_string();
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Transcript index of the 0-labelled point.
    pub zero_index: usize,
    pub y: Vec<f64>,
    /// Transcript indices of the 1-labelled support points.
    pub support: Vec<usize>,
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TesterVerdict {
    Accept,
    Reject(Certificate),
}

impl TesterVerdict {
    pub fn is_reject(&self) -> bool {
        matches!(self, TesterVerdict::Reject(_))
    }
}

/// A membership oracle `R^d -> {0, 1}`.
pub trait MembershipOracle: Sync {
    fn dim(&self) -> usize;
    fn label(&self, x: &[f64]) -> bool;
}

/// Oracle from a closure.
pub struct FnOracle<F: Fn(&[f64]) -> bool + Sync> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> bool + Sync> MembershipOracle for FnOracle<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn label(&self, x: &[f64]) -> bool {
        (self.f)(x)
    }
}

impl MembershipOracle for AdaptiveInstance {
    fn dim(&self) -> usize {
        AdaptiveInstance::dim(self)
    }
    fn label(&self, x: &[f64]) -> bool {
        self.eval(x).expect("dimension checked by the runner")
    }
}

impl MembershipOracle for PtfInstance {
    fn dim(&self) -> usize {
        self.n()
    }
    fn label(&self, x: &[f64]) -> bool {
        self.eval(x).expect("dimension checked by the runner")
    }
}

/// Yes or no realization of a tolerant instance.
pub struct TolerantOracle<'a> {
    pub inst: &'a TolerantInstance,
    pub yes: bool,
}

impl MembershipOracle for TolerantOracle<'_> {
    fn dim(&self) -> usize {
        self.inst.dim()
    }
    fn label(&self, x: &[f64]) -> bool {
        let v = if self.yes { self.inst.eval_yes(x) } else { self.inst.eval_no(x) };
        v.expect("dimension checked by the runner")
    }
}

/// A query strategy: given the labelled history, the next point or `None` to stop.
pub trait Tester {
    fn next_query(&mut self, history: &[LabeledQuery]) -> Option<Vec<f64>>;
}

impl<F: FnMut(&[LabeledQuery]) -> Option<Vec<f64>>> Tester for F {
    fn next_query(&mut self, history: &[LabeledQuery]) -> Option<Vec<f64>> {
        self(history)
    }
}

/// Query `x, y ~ N(0, I_d)` and their midpoint, `pairs` times.
pub struct LineSegmentTester {
    dim: usize,
    remaining: usize,
    rng: StreamRng,
    pending: VecDeque<Vec<f64>>,
}

pub fn line_segment_tester(dim: usize, pairs: usize, stream: RngStream) -> LineSegmentTester {
    LineSegmentTester {
        dim,
        remaining: pairs,
        rng: stream.rng(),
        pending: VecDeque::new(),
    }
}

impl Tester for LineSegmentTester {
    fn next_query(&mut self, _history: &[LabeledQuery]) -> Option<Vec<f64>> {
        if self.pending.is_empty() && self.remaining > 0 {
            self.remaining -= 1;
            let mut x = vec![0.0; self.dim];
            let mut y = vec![0.0; self.dim];
            fill_normals(&mut self.rng, &mut x);
            fill_normals(&mut self.rng, &mut y);
            let mid = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            self.pending.extend([x, y, mid]);
        }
        self.pending.pop_front()
    }
}

/// Query `samples` iid `N(0, I_d)` points.
pub struct HullSamplingTester {
    dim: usize,
    remaining: usize,
    rng: StreamRng,
}

pub fn hull_sampling_tester(dim: usize, samples: usize, stream: RngStream) -> HullSamplingTester {
    HullSamplingTester {
        dim,
        remaining: samples,
        rng: stream.rng(),
    }
}

impl Tester for HullSamplingTester {
    fn next_query(&mut self, _history: &[LabeledQuery]) -> Option<Vec<f64>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let mut x = vec![0.0; self.dim];
        fill_normals(&mut self.rng, &mut x);
        Some(x)
    }
}

/// Replays a fixed list of points.
pub struct ScriptedTester {
    queue: VecDeque<Vec<f64>>,
}

impl ScriptedTester {
    pub fn new(points: Vec<Vec<f64>>) -> Self {
        ScriptedTester { queue: points.into() }
    }

    /// Queries a known violating triple: both endpoints, then the midpoint.
    pub fn from_triple(t: &ViolatingTriple) -> Self {
        Self::new(vec![t.x_minus.clone(), t.x_plus.clone(), t.x.clone()])
    }
}

impl Tester for ScriptedTester {
    fn next_query(&mut self, _history: &[LabeledQuery]) -> Option<Vec<f64>> {
        self.queue.pop_front()
    }
}

/// A tester run as a child process speaking JSON lines.
///
/// The lab first writes `{"dim": d}`, then after every query
/// `{"point": [...], "label": 0|1}`. The child answers each line with a JSON
/// array (the next query) or `null` (stop).
pub struct ExternalTester {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    dim: usize,
    started: bool,
    failed: Option<String>,
}

impl ExternalTester {
    pub fn spawn(command: &str, dim: usize) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ExternalTester {
            child,
            stdin,
            stdout,
            dim,
            started: false,
            failed: None,
        })
    }

    /// Protocol error seen during the run, if any.
    pub fn failure(&self) -> Option<&str> {
        self.failed.as_deref()
    }

    fn exchange(&mut self, line: String) -> std::result::Result<Option<Vec<f64>>, String> {
        writeln!(self.stdin, "{line}").map_err(|e| e.to_string())?;
        self.stdin.flush().map_err(|e| e.to_string())?;
        let mut reply = String::new();
        self.stdout.read_line(&mut reply).map_err(|e| e.to_string())?;
        if reply.trim().is_empty() {
            return Ok(None);
        }
        serde_json::from_str::<Option<Vec<f64>>>(reply.trim()).map_err(|e| e.to_string())
    }
}

impl Tester for ExternalTester {
    fn next_query(&mut self, history: &[LabeledQuery]) -> Option<Vec<f64>> {
        let line = if !self.started {
            self.started = true;
            serde_json::json!({ "dim": self.dim }).to_string()
        } else {
            let last = history.last()?;
            serde_json::json!({ "point": last.point, "label": last.label as u8 }).to_string()
        };
        match self.exchange(line) {
            Ok(next) => next,
            Err(e) => {
                self.failed = Some(e);
                None
            }
        }
    }
}

impl Drop for ExternalTester {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Hull membership: `λ` with `λ >= 0`, `Σλ = 1` and `|Σ λ_i p_i - y|_∞ <= tol`, if any.
pub fn in_convex_hull(y: &[f64], points: &[&[f64]], tol: f64) -> Result<Option<Vec<f64>>> {
    if points.is_empty() {
        return Err(LabError::param("points", "need at least one point"));
    }
    if !(tol > 0.0) {
        return Err(LabError::param("tol", "must be positive"));
    }
    let d = y.len();
    for p in points {
        check_dim(d, p.len())?;
    }
    // bounding-box prefilter
    for j in 0..d {
        let (lo, hi) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[j]), hi.max(p[j])));
        if y[j] < lo - tol || y[j] > hi + tol {
            return Ok(None);
        }
    }
    let Some((ry, rpoints)) = reduce_to_affine_hull(y, points, tol) else {
        return Ok(None);
    };
    let rrefs: Vec<&[f64]> = rpoints.iter().map(Vec::as_slice).collect();
    let (t, lambdas) = min_linf_residual(&ry, &rrefs)?;
    if t > tol {
        return Ok(None);
    }
    let lambdas = clean_lambdas(lambdas);
    Ok(verify_combination(y, points, &lambdas, tol).then_some(lambdas))
}

/// Coordinates of `y` and the points in an orthonormal basis of the affine
/// hull of the points, relative to the first point. `None` when `y` is
/// farther than `tol * sqrt(d)` from that hull, which forces some
/// coordinate of any residual above `tol`.
fn reduce_to_affine_hull(y: &[f64], points: &[&[f64]], tol: f64) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = y.len();
    let p0 = points[0];
    let diff = |v: &[f64]| -> Vec<f64> { v.iter().zip(p0).map(|(a, b)| a - b).collect() };
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for p in &points[1..] {
        let mut v = diff(p);
        let scale = norm(&v).max(1.0);
        for _ in 0..2 {
            for e in &basis {
                let c = dot(e, &v);
                axpy(-c, e, &mut v);
            }
        }
        let nv = norm(&v);
        if nv > 1e-10 * scale {
            v.iter_mut().for_each(|x| *x /= nv);
            basis.push(v);
        }
    }
    let mut z = diff(y);
    let coords = |v: &[f64]| -> Vec<f64> { basis.iter().map(|e| dot(e, v)).collect() };
    let zc = coords(&z);
    for (e, c) in basis.iter().zip(&zc) {
        axpy(-c, e, &mut z);
    }
    if norm(&z) > tol * (d as f64).sqrt() {
        return None;
    }
    let pts = points.iter().map(|p| coords(&diff(p))).collect();
    Some((zc, pts))
}

fn clean_lambdas(mut l: Vec<f64>) -> Vec<f64> {
    l.iter_mut().for_each(|v| *v = v.max(0.0));
    let s: f64 = l.iter().sum();
    if s > 0.0 {
        l.iter_mut().for_each(|v| *v /= s);
    }
    l
}

/// Independent check of a convex combination.
pub fn verify_combination(y: &[f64], points: &[&[f64]], lambdas: &[f64], tol: f64) -> bool {
    if lambdas.len() != points.len() || lambdas.iter().any(|&l| l < -tol) {
        return false;
    }
    if (lambdas.iter().sum::<f64>() - 1.0).abs() > tol {
        return false;
    }
    (0..y.len()).all(|j| {
        let s: f64 = points.iter().zip(lambdas).map(|(p, l)| l * p[j]).sum();
        (s - y[j]).abs() <= tol
    })
}

/// Minimize `t` subject to `-t <= (Σ λ_i p_i - y)_j <= t`, `λ >= 0`, `Σλ = 1`.
///
/// Simplex started from the vertex `λ = e_1`, `t = |p_1 - y|_∞`, so there is
/// no phase 1 and no artificial columns to drift.
fn min_linf_residual(y: &[f64], points: &[&[f64]]) -> Result<(f64, Vec<f64>)> {
    let d = y.len();
    let k = points.len();
    if d == 0 {
        let mut l = vec![0.0; k];
        l[0] = 1.0;
        return Ok((0.0, l));
    }
    // columns: λ (k), t, one slack per inequality row (2d), rhs
    let nv = k + 1 + 2 * d;
    let m = 2 * d + 1;
    let width = nv + 1;
    let mut t = vec![0.0; (m + 1) * width];
    let mut basis = vec![0usize; m];
    for j in 0..d {
        for (h, sign) in [1.0, -1.0].into_iter().enumerate() {
            let r = 2 * j + h;
            let row = &mut t[r * width..(r + 1) * width];
            for (i, p) in points.iter().enumerate() {
                row[i] = sign * p[j];
            }
            row[k] = -1.0;
            row[k + 1 + r] = 1.0;
            row[nv] = sign * y[j];
            basis[r] = k + 1 + r;
        }
    }
    let sum = 2 * d;
    t[sum * width..sum * width + k].iter_mut().for_each(|v| *v = 1.0);
    t[sum * width + nv] = 1.0;
    t[m * width + k] = 1.0;
    pivot(&mut t, &mut basis, m, width, sum, 0);
    // t enters on the most violated row; every other slack stays nonnegative
    let worst = (0..2 * d)
        .min_by(|&a, &b| t[a * width + nv].total_cmp(&t[b * width + nv]))
        .expect("d > 0");
    pivot(&mut t, &mut basis, m, width, worst, k);
    for i in 0..m {
        let v = &mut t[i * width + nv];
        *v = v.max(0.0);
    }
    run_simplex(&mut t, &mut basis, m, width, nv, 50 * (m + width))?;
    let mut x = vec![0.0; nv];
    for i in 0..m {
        x[basis[i]] = t[i * width + nv];
    }
    Ok((x[k], x[..k].to_vec()))
}

const PIVOT_EPS: f64 = 1e-9;

/// Bland's rule: smallest eligible entering column, smallest basic index on ratio ties.
fn run_simplex(t: &mut [f64], basis: &mut [usize], m: usize, width: usize, ncols: usize, max_iter: usize) -> Result<()> {
    let rhs_col = width - 1;
    for _ in 0..max_iter {
        let obj = &t[m * width..];
        let Some(enter) = (0..ncols).find(|&j| obj[j] < -PIVOT_EPS) else {
            return Ok(());
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[i * width + enter];
            if a > PIVOT_EPS {
                let ratio = t[i * width + rhs_col] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && basis[i] < basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = leave else {
            return Err(LabError::Solver("LP unbounded".into()));
        };
        pivot(t, basis, m, width, row, enter);
    }
    Err(LabError::Solver(format!("simplex did not converge in {max_iter} iterations")))
}

fn pivot(t: &mut [f64], basis: &mut [usize], m: usize, width: usize, row: usize, col: usize) {
    let p = t[row * width + col];
    for j in 0..width {
        t[row * width + j] /= p;
    }
    let pivot_row: Vec<f64> = t[row * width..(row + 1) * width].to_vec();
    for i in 0..=m {
        if i == row {
            continue;
        }
        let f = t[i * width + col];
        if f != 0.0 {
            let r = &mut t[i * width..(i + 1) * width];
            for (v, pr) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            r[col] = 0.0;
        }
    }
    basis[row] = col;
}

/// Check whether entry `k` (just appended) completes a certificate.
fn check_new_entry(
    entries: &[LabeledQuery],
    q0: &mut Vec<usize>,
    q1: &mut Vec<usize>,
    k: usize,
    tol: f64,
) -> Result<Option<Certificate>> {
    let e = &entries[k];
    let candidates: Vec<usize> = if e.label {
        q1.push(k);
        q0.clone()
    } else {
        q0.push(k);
        vec![k]
    };
    if q1.is_empty() {
        return Ok(None);
    }
    let support: Vec<&[f64]> = q1.iter().map(|&i| entries[i].point.as_slice()).collect();
    for z in candidates {
        if let Some(lambdas) = in_convex_hull(&entries[z].point, &support, tol)? {
            return Ok(Some(Certificate {
                zero_index: z,
                y: entries[z].point.clone(),
                support: q1.clone(),
                lambdas,
            }));
        }
    }
    Ok(None)
}

/// Run a tester against an oracle with a budget of `budget` queries.
pub fn run_one_sided(
    tester: &mut dyn Tester,
    oracle: &dyn MembershipOracle,
    budget: usize,
) -> Result<(TesterVerdict, QueryTranscript)> {
    let mut transcript = QueryTranscript::new(oracle.dim());
    let mut q0 = Vec::new();
    let mut q1 = Vec::new();
    while let Some(x) = tester.next_query(&transcript.entries) {
        if transcript.len() == budget {
            return Err(LabError::BudgetExceeded { budget });
        }
        check_dim(oracle.dim(), x.len())?;
        let label = oracle.label(&x);
        transcript.entries.push(LabeledQuery { point: x, label });
        let k = transcript.len() - 1;
        if let Some(cert) = check_new_entry(&transcript.entries, &mut q0, &mut q1, k, HULL_TOL)? {
            debug_assert!(validate_certificate(&transcript, &cert));
            return Ok((TesterVerdict::Reject(cert), transcript));
        }
    }
    Ok((TesterVerdict::Accept, transcript))
}

/// Independent check of a rejection: labels and convex combination.
pub fn validate_certificate(transcript: &QueryTranscript, cert: &Certificate) -> bool {
    let e = transcript.entries();
    if cert.zero_index >= e.len() || e[cert.zero_index].label || cert.support.iter().any(|&i| i >= e.len() || !e[i].label) {
        return false;
    }
    let pts: Vec<&[f64]> = cert.support.iter().map(|&i| e[i].point.as_slice()).collect();
    verify_combination(&e[cert.zero_index].point, &pts, &cert.lambdas, HULL_TOL)
}

/// Halfspace `{x : <u, x> <= b}`.
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl MembershipOracle for Halfspace {
    fn dim(&self) -> usize {
        self.normal.len()
    }
    fn label(&self, x: &[f64]) -> bool {
        dot(&self.normal, x) <= self.offset
    }
}

/// Euclidean ball.
pub struct BallOracle {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl MembershipOracle for BallOracle {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn label(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.center).map(|(a, c)| (a - c).powi(2)).sum::<f64>() <= self.radius * self.radius
    }
}

/// Ellipsoid `{x : Σ_i <u_i, x - c>^2 / a_i^2 <= 1}`.
pub struct EllipsoidOracle {
    pub center: Vec<f64>,
    pub axes: Frame,
    pub semi_axes: Vec<f64>,
}

impl MembershipOracle for EllipsoidOracle {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn label(&self, x: &[f64]) -> bool {
        let shifted: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let mut s = 0.0;
        for (i, a) in self.semi_axes.iter().enumerate() {
            s += (dot(self.axes.vector(i), &shifted) / a).powi(2);
        }
        s <= 1.0
    }
}

/// Random convex test bodies, roughly half the Gaussian mass inside.
pub fn random_halfspace<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Halfspace {
    let f = sample_haar_frame(d, 1, rng).expect("d >= 1");
    let offset = rng.sample(rand_distr::StandardNormal);
    Halfspace {
        normal: f.vector(0).to_vec(),
        offset,
    }
}

pub fn random_ball<R: Rng + ?Sized>(d: usize, rng: &mut R) -> BallOracle {
    let mut center = vec![0.0; d];
    fill_normals(rng, &mut center);
    center.iter_mut().for_each(|c| *c *= 0.3);
    let radius = (d as f64).sqrt() * rng.random_range(0.8..1.2);
    BallOracle { center, radius }
}

pub fn random_ellipsoid<R: Rng + ?Sized>(d: usize, rng: &mut R) -> EllipsoidOracle {
    let axes = sample_haar_frame(d, d, rng).expect("d >= 1");
    let mut center = vec![0.0; d];
    fill_normals(rng, &mut center);
    center.iter_mut().for_each(|c| *c *= 0.3);
    let semi_axes = (0..d).map(|_| (d as f64).sqrt() * rng.random_range(0.5..1.5)).collect();
    EllipsoidOracle { center, axes, semi_axes }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    LineSegment,
    HullSampling,
    /// Oracle-assisted: queries a violating triple of the instance.
    Cheater,
}

impl std::str::FromStr for Strategy {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line-segment" => Ok(Strategy::LineSegment),
            "hull-sampling" => Ok(Strategy::HullSampling),
            "cheater" => Ok(Strategy::Cheater),
            _ => Err(LabError::param("strategy", format!("unknown strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Adaptive,
    TolerantYes,
    TolerantNo,
    PtfYes,
    PtfNo,
    Halfspace,
    Ball,
    Ellipsoid,
}

impl std::str::FromStr for Family {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "adaptive" => Family::Adaptive,
            "tolerant-yes" => Family::TolerantYes,
            "tolerant-no" => Family::TolerantNo,
            "ptf-yes" => Family::PtfYes,
            "ptf-no" => Family::PtfNo,
            "halfspace" => Family::Halfspace,
            "ball" => Family::Ball,
            "ellipsoid" => Family::Ellipsoid,
            _ => return Err(LabError::param("family", format!("unknown family `{s}`"))),
        })
    }
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Adaptive => "adaptive",
            Family::TolerantYes => "tolerant-yes",
            Family::TolerantNo => "tolerant-no",
            Family::PtfYes => "ptf-yes",
            Family::PtfNo => "ptf-no",
            Family::Halfspace => "halfspace",
            Family::Ball => "ball",
            Family::Ellipsoid => "ellipsoid",
        }
    }

    /// Whether every member is the indicator of a convex set.
    pub fn is_convex(self) -> bool {
        matches!(self, Family::PtfYes | Family::Halfspace | Family::Ball | Family::Ellipsoid)
    }
}

/// Parameters of a rejection-rate run.
#[derive(Debug, Clone)]
pub struct RejectionSetup<'a> {
    pub strategy: Strategy,
    pub family: Family,
    pub n: usize,
    pub budget: usize,
    pub trials: usize,
    pub calibration: Option<&'a Calibration>,
    /// PTF degree parameter `ℓ`.
    pub ptf_degree: u32,
}

fn one_trial(setup: &RejectionSetup<'_>, s: RngStream) -> Result<bool> {
    let n = setup.n;
    let inst_stream = s.substream(1);
    let tester_stream = s.substream(2);
    let mut rng = inst_stream.rng();
    let adaptive = match setup.family {
        Family::Adaptive => Some(sample_adaptive_instance(n, None, inst_stream)?),
        _ => None,
    };
    let tolerant;
    let ptf;
    let toy: Box<dyn MembershipOracle>;
    let tol_oracle;
    let oracle: &dyn MembershipOracle = match setup.family {
        Family::Adaptive => adaptive.as_ref().expect("sampled above"),
        Family::TolerantYes | Family::TolerantNo => {
            let cal = setup.calibration.ok_or(LabError::MissingCalibration {
                path: "(none supplied)".into(),
            })?;
            tolerant = TolerantInstance::sample(n, None, cal, inst_stream)?;
            tol_oracle = TolerantOracle {
                inst: &tolerant,
                yes: setup.family == Family::TolerantYes,
            };
            &tol_oracle
        }
        Family::PtfYes | Family::PtfNo => {
            let flavor = if setup.family == Family::PtfYes { Flavor::Yes } else { Flavor::No };
            ptf = sample_ptf_instance(n, setup.ptf_degree, DEFAULT_CLIP, flavor, inst_stream)?;
            &ptf
        }
        Family::Halfspace => {
            toy = Box::new(random_halfspace(n, &mut rng));
            toy.as_ref()
        }
        Family::Ball => {
            toy = Box::new(random_ball(n, &mut rng));
            toy.as_ref()
        }
        Family::Ellipsoid => {
            toy = Box::new(random_ellipsoid(n, &mut rng));
            toy.as_ref()
        }
    };
    let d = oracle.dim();
    let mut tester: Box<dyn Tester> = match setup.strategy {
        Strategy::LineSegment => Box::new(line_segment_tester(d, setup.budget / 3, tester_stream)),
        Strategy::HullSampling => Box::new(hull_sampling_tester(d, setup.budget, tester_stream)),
        Strategy::Cheater => {
            let Some(inst) = adaptive.as_ref() else {
                return Err(LabError::param("strategy", "the cheater needs the adaptive family"));
            };
            let mut trng = tester_stream.rng();
            match sample_violating_triple(inst, 10_000_000, 1.0, &mut trng) {
                Some(t) => Box::new(ScriptedTester::from_triple(&t)),
                None => Box::new(ScriptedTester::new(Vec::new())),
            }
        }
    };
    let (verdict, transcript) = run_one_sided(tester.as_mut(), oracle, setup.budget)?;
    if let TesterVerdict::Reject(c) = &verdict {
        if !validate_certificate(&transcript, c) {
            return Err(LabError::Solver("certificate failed independent validation".into()));
        }
    }
    Ok(verdict.is_reject())
}

/// Rejection frequency of a strategy over fresh instances of a family.
pub fn rejection_rate(setup: &RejectionSetup<'_>, stream: RngStream) -> Result<ExperimentReport> {
    if setup.trials == 0 || setup.budget == 0 {
        return Err(LabError::param("trials/budget", "must be positive"));
    }
    let blocks = par_blocks(stream, setup.trials, 8, |s, start, len| -> Result<u64> {
        let mut rejects = 0;
        for k in 0..len {
            rejects += one_trial(setup, s.substream((start + k) as u64))? as u64;
        }
        Ok(rejects)
    });
    let rejects: u64 = blocks.into_iter().sum::<Result<u64>>()?;
    let t = setup.trials as u64;
    let rate = rejects as f64 / t as f64;
    let (lo, hi) = wilson_interval(rejects, t, Z99_TWO_SIDED);
    let mut report = ExperimentReport::new("rejection-rate", stream.seed);
    report
        .param("strategy", format!("{:?}", setup.strategy))
        .param("family", setup.family.name())
        .param("n", setup.n)
        .param("budget", setup.budget)
        .param("trials", setup.trials);
    report.estimate("rejection rate", rate, (hi - lo) / 2.0, t);
    report.estimate("wilson low", lo, 0.0, t);
    report.estimate("wilson high", hi, 0.0, t);
    if setup.family.is_convex() {
        report.check_le("no rejections on convex sets", BoundSource::Exact, rejects as f64, 0.0);
    }
    if setup.strategy == Strategy::Cheater {
        report.check_ge("cheater always rejects", BoundSource::Exact, rate, 1.0);
    }
    Ok(report.finish())
}
