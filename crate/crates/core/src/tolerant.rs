//! The tolerant yes/no pair over `R^{n+1}`.
//!
//! A Haar direction `a` spans the action line `A` and its complement is the
//! control space `C`. A Nazarov body with `c1 = 1/100` lives in `C`, and a
//! uniformly random subset `P` of its facets is drawn. The labelling
//! `g_{C,B,P}` yields `0`, `1`, or a starred label on points that are in a
//! single flap `U_i` and whose action coordinate avoids the `Curb`
//! intervals. The yes and no realizations read the starred labels
//! differently: the yes side is close to convex, while the no side
//! alternates across the `Left`/`Middle`/`Right` regions of the action line.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, LabError, Result};
use crate::gauss::frame::{dot, householder_complement, norm, Frame};
use crate::gauss::rng::{fill_normals, par_blocks, RngStream};
use crate::gauss::special::{cdf, quantile, sf};
use crate::nazarov::{default_facet_count, solve_r, NazarovBody};
use crate::report::{BoundSource, ExperimentReport};
use crate::stats::{binomial_sigma, mean_se, tv_distance, tv_noise_bound, Z99_ONE_SIDED};

/// Halfspace constant of the tolerant construction.
pub const TOLERANT_C1: f64 = 0.01;
/// Stream id used when an instance is regenerated from a seed alone.
pub const TOLERANT_STREAM: u64 = 0x746f_6c65;
/// Largest number of queries whose response vectors are enumerated.
pub const MAX_VIEW_QUERIES: usize = 20;
pub const CALIBRATION_VERSION: u32 = 1;

/// Measured unique-flap volume at the working `(n, N, c1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub format_version: u32,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub c1: f64,
    #[serde(rename = "V_U_mean")]
    pub v_u_mean: f64,
    #[serde(rename = "V_U_ci")]
    pub v_u_ci: f64,
    pub produced_by_seed: u64,
}

impl Calibration {
    /// `c0_hat = E[Vol(⊔ U_i)] / c1`.
    pub fn c0_hat(&self) -> f64 {
        self.v_u_mean / self.c1
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => LabError::MissingCalibration {
                path: path.display().to_string(),
            },
            _ => LabError::Io(e),
        })?;
        let cal: Calibration = serde_json::from_str(&text)?;
        if cal.format_version != CALIBRATION_VERSION {
            return Err(LabError::VersionMismatch {
                found: cal.format_version,
                expected: CALIBRATION_VERSION,
            });
        }
        Ok(cal)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Measure `E[Vol(⊔ U_i)]` at `c1 = 1/100` for the tolerant construction.
pub fn calibrate(
    n: usize,
    big_n: Option<usize>,
    bodies: usize,
    points_per_body: usize,
    stream: RngStream,
) -> Result<(ExperimentReport, Calibration)> {
    let big_n = big_n.unwrap_or_else(|| default_facet_count(n));
    let r = solve_r(n, big_n as f64, TOLERANT_C1)?;
    let (mut report, vol) = crate::nazarov::estimate_unique_volume(
        n,
        big_n,
        r,
        TOLERANT_C1,
        bodies,
        points_per_body,
        false,
        stream,
    )?;
    report.name = "calibrate-c0".into();
    let cal = Calibration {
        format_version: CALIBRATION_VERSION,
        n,
        big_n,
        c1: TOLERANT_C1,
        v_u_mean: vol.mean,
        v_u_ci: Z99_ONE_SIDED * vol.se,
        produced_by_seed: stream.seed,
    };
    report.estimate("c0_hat", cal.c0_hat(), cal.v_u_ci / TOLERANT_C1, bodies as u64);
    Ok((report, cal))
}

/// `c1`, `c2 = τ = c0 c1 / 100`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerantConstants {
    pub c0_hat: f64,
    pub c1: f64,
    pub c2: f64,
    pub tau: f64,
}

impl TolerantConstants {
    pub fn from_c0(c0_hat: f64) -> Result<Self> {
        if !(c0_hat > 0.0 && c0_hat.is_finite()) {
            return Err(LabError::param("c0_hat", "must be positive"));
        }
        let c2 = c0_hat * TOLERANT_C1 / 100.0;
        if c2 >= 0.5 {
            return Err(LabError::param("c0_hat", "gives c2 >= 1/2"));
        }
        Ok(TolerantConstants {
            c0_hat,
            c1: TOLERANT_C1,
            c2,
            tau: c2,
        })
    }

    /// Shell half-width `sqrt(2 ln(2/τ))`.
    pub fn shell_half_width(&self) -> f64 {
        (2.0 * (2.0 / self.tau).ln()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    Left,
    Middle,
    Right,
    Curb,
}

/// Endpoints `Φ^{-1}((1-2c2)/3) < Φ^{-1}((1+c2)/3) < Φ^{-1}((2-c2)/3) < Φ^{-1}((2+2c2)/3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regions {
    pub ends: [f64; 4],
}

impl Regions {
    pub fn new(c2: f64) -> Self {
        assert!(c2 > 0.0 && c2 < 0.5, "c2 = {c2} outside (0, 1/2)");
        Regions {
            ends: [
                quantile((1.0 - 2.0 * c2) / 3.0),
                quantile((1.0 + c2) / 3.0),
                quantile((2.0 - c2) / 3.0),
                quantile((2.0 + 2.0 * c2) / 3.0),
            ],
        }
    }

    /// Boundaries belong to `Curb`.
    pub fn classify(&self, a: f64) -> Region {
        let [e1, e2, e3, e4] = self.ends;
        if a < e1 {
            Region::Left
        } else if a <= e2 {
            Region::Curb
        } else if a < e3 {
            Region::Middle
        } else if a <= e4 {
            Region::Curb
        } else {
            Region::Right
        }
    }

    /// Common width `ρ(c2)` of the two Curb intervals.
    pub fn curb_width(&self) -> f64 {
        self.ends[1] - self.ends[0]
    }
}

pub fn region_of(a: f64, c2: f64) -> Region {
    Regions::new(c2).classify(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExtendedLabel {
    Zero,
    One,
    ZeroStar,
    OneStar,
}

#[derive(Debug, Clone)]
pub struct TolerantInstance {
    n: usize,
    big_n: usize,
    r: f64,
    stream: RngStream,
    constants: TolerantConstants,
    regions: Regions,
    shell: (f64, f64),
    action_dir: Vec<f64>,
    control: Frame,
    body: NazarovBody,
    in_p: Vec<bool>,
}

/// Everything the labelling reads off one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryFacts {
    pub in_shell: bool,
    pub xc_norm: f64,
    pub x_a: f64,
    pub region: Region,
    /// Violated facets of `x_C` (empty when `|x_C| > sqrt(n)`).
    pub violated: Vec<usize>,
}

impl QueryFacts {
    pub fn unique(&self) -> Option<usize> {
        (self.violated.len() == 1).then(|| self.violated[0])
    }
}

impl TolerantInstance {
    /// Sample with `c0_hat` taken from a calibration record for the same `(n, N)`.
    pub fn sample(n: usize, big_n: Option<usize>, calibration: &Calibration, stream: RngStream) -> Result<Self> {
        if n < 4 {
            return Err(LabError::param("n", "must be at least 4"));
        }
        let big_n = big_n.unwrap_or_else(|| default_facet_count(n));
        if calibration.n != n || calibration.big_n != big_n || calibration.c1 != TOLERANT_C1 {
            return Err(LabError::CalibrationMismatch(format!(
                "record is for n = {}, N = {}, c1 = {}; requested n = {n}, N = {big_n}, c1 = {TOLERANT_C1}",
                calibration.n, calibration.big_n, calibration.c1
            )));
        }
        let constants = TolerantConstants::from_c0(calibration.c0_hat())?;
        Self::sample_with_constants(n, big_n, constants, stream)
    }

    pub fn sample_with_constants(n: usize, big_n: usize, constants: TolerantConstants, stream: RngStream) -> Result<Self> {
        let r = solve_r(n, big_n as f64, constants.c1)?;
        let mut rng = stream.rng();
        let mut a = vec![0.0; n + 1];
        fill_normals(&mut rng, &mut a);
        let na = norm(&a);
        a.iter_mut().for_each(|v| *v /= na);
        let control = householder_complement(&a)?;
        let body = NazarovBody::sample(n, big_n, r, &mut rng)?;
        let in_p = (0..big_n).map(|_| rng.random::<bool>()).collect();
        let w = constants.shell_half_width();
        let centre = ((n + 1) as f64).sqrt();
        Ok(TolerantInstance {
            n,
            big_n,
            r,
            stream,
            constants,
            regions: Regions::new(constants.c2),
            shell: (centre - w, centre + w),
            action_dir: a,
            control,
            body,
            in_p,
        })
    }

    pub fn from_seed(n: usize, big_n: Option<usize>, calibration: &Calibration, seed: u64) -> Result<Self> {
        Self::sample(n, big_n, calibration, RngStream::new(seed, TOLERANT_STREAM))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n + 1
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

    pub fn constants(&self) -> &TolerantConstants {
        &self.constants
    }

    pub fn regions(&self) -> &Regions {
        &self.regions
    }

    pub fn action_dir(&self) -> &[f64] {
        &self.action_dir
    }

    pub fn control(&self) -> &Frame {
        &self.control
    }

    pub fn body(&self) -> &NazarovBody {
        &self.body
    }

    pub fn in_p(&self, i: usize) -> bool {
        self.in_p[i]
    }

    pub fn p_size(&self) -> usize {
        self.in_p.iter().filter(|&&b| b).count()
    }

    /// Copy with `P` replaced by a fresh uniform subset.
    pub fn with_fresh_p<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut c = self.clone();
        c.in_p.iter_mut().for_each(|b| *b = rng.random());
        c
    }

    pub fn in_shell(&self, x: &[f64]) -> bool {
        let nx = norm(x);
        self.shell.0 <= nx && nx <= self.shell.1
    }

    pub fn facts(&self, x: &[f64]) -> Result<QueryFacts> {
        check_dim(self.dim(), x.len())?;
        let xc = self.control.coords(x)?;
        let xc_norm = norm(&xc);
        let x_a = dot(&self.action_dir, x);
        let violated = if xc_norm <= (self.n as f64).sqrt() {
            self.body.classify_unchecked(&xc).violated
        } else {
            Vec::new()
        };
        Ok(QueryFacts {
            in_shell: self.in_shell(x),
            xc_norm,
            x_a,
            region: self.regions.classify(x_a),
            violated,
        })
    }

    fn label_from_facts(&self, f: &QueryFacts) -> ExtendedLabel {
        if f.xc_norm >= (self.n as f64).sqrt() || f.violated.len() >= 2 || !f.in_shell {
            return ExtendedLabel::Zero;
        }
        match f.unique() {
            None => ExtendedLabel::One,
            Some(_) if f.region == Region::Curb => ExtendedLabel::Zero,
            Some(i) if self.in_p[i] => ExtendedLabel::ZeroStar,
            Some(_) => ExtendedLabel::OneStar,
        }
    }

    pub fn eval_extended(&self, x: &[f64]) -> Result<ExtendedLabel> {
        Ok(self.label_from_facts(&self.facts(x)?))
    }

    pub fn eval_yes(&self, x: &[f64]) -> Result<bool> {
        Ok(yes_bit(self.eval_extended(x)?))
    }

    pub fn eval_no(&self, x: &[f64]) -> Result<bool> {
        let f = self.facts(x)?;
        Ok(no_bit(self.label_from_facts(&f), f.region))
    }
}

fn yes_bit(l: ExtendedLabel) -> bool {
    matches!(l, ExtendedLabel::One | ExtendedLabel::OneStar)
}

fn no_bit(l: ExtendedLabel, region: Region) -> bool {
    match l {
        ExtendedLabel::Zero => false,
        ExtendedLabel::One => true,
        ExtendedLabel::ZeroStar => region != Region::Middle,
        ExtendedLabel::OneStar => region == Region::Middle,
    }
}

pub fn eval_extended(inst: &TolerantInstance, x: &[f64]) -> Result<ExtendedLabel> {
    inst.eval_extended(x)
}

pub fn eval_yes(inst: &TolerantInstance, x: &[f64]) -> Result<bool> {
    inst.eval_yes(x)
}

pub fn eval_no(inst: &TolerantInstance, x: &[f64]) -> Result<bool> {
    inst.eval_no(x)
}

fn bad_pair(facts: &[QueryFacts]) -> Option<(usize, usize)> {
    for (a, x) in facts.iter().enumerate() {
        let (Some(lx), true) = (x.unique(), x.in_shell) else { continue };
        if x.region == Region::Curb {
            continue;
        }
        for (b, y) in facts.iter().enumerate().skip(a + 1) {
            if y.in_shell && y.unique() == Some(lx) && y.region != Region::Curb && y.region != x.region {
                return Some((a, b));
            }
        }
    }
    None
}

/// A witness pair for the `Bad` event: two shell queries in the same single
/// flap whose action coordinates fall in different regions among
/// Left/Middle/Right.
pub fn detect_bad(inst: &TolerantInstance, queries: &[Vec<f64>]) -> Result<Option<(usize, usize)>> {
    let facts = queries.iter().map(|q| inst.facts(q)).collect::<Result<Vec<_>>>()?;
    Ok(bad_pair(&facts))
}

/// Response vectors under the yes and no realizations over many instances.
///
/// Each trial draws `(C, B)` once and an independent `P` for each side, so
/// the two histograms are samples of the two views; `Bad` depends only on
/// `(C, B)` and the queries.
pub fn view_experiment(
    queries: &[Vec<f64>],
    n: usize,
    calibration: &Calibration,
    trials: usize,
    stream: RngStream,
) -> Result<ExperimentReport> {
    if queries.len() > MAX_VIEW_QUERIES {
        return Err(LabError::TooManyQueries {
            got: queries.len(),
            max: MAX_VIEW_QUERIES,
        });
    }
    if trials == 0 {
        return Err(LabError::param("trials", "must be positive"));
    }
    for q in queries {
        check_dim(n + 1, q.len())?;
    }
    #[derive(Default)]
    struct Acc {
        yes: BTreeMap<u32, u64>,
        no: BTreeMap<u32, u64>,
        yes_all: BTreeMap<u32, u64>,
        no_all: BTreeMap<u32, u64>,
        bad: u64,
        isolated: u64,
        isolated_ones: u64,
    }
    let blocks = par_blocks(stream, trials, 64, |s, _, len| -> Result<Acc> {
        let mut acc = Acc::default();
        let mut rng = s.rng();
        for k in 0..len {
            let inst = TolerantInstance::sample(n, Some(calibration.big_n), calibration, s.substream(k as u64))?;
            let other = inst.with_fresh_p(&mut rng);
            let facts = queries.iter().map(|q| inst.facts(q)).collect::<Result<Vec<_>>>()?;
            let mut vy = 0u32;
            let mut vn = 0u32;
            for (j, f) in facts.iter().enumerate() {
                if yes_bit(inst.label_from_facts(f)) {
                    vy |= 1 << j;
                }
                if no_bit(other.label_from_facts(f), f.region) {
                    vn |= 1 << j;
                }
                let l = inst.label_from_facts(f);
                if matches!(l, ExtendedLabel::ZeroStar | ExtendedLabel::OneStar) {
                    let i = f.unique().expect("starred labels have a unique flap");
                    let alone = facts.iter().enumerate().all(|(m, g)| m == j || g.unique() != Some(i));
                    if alone {
                        acc.isolated += 1;
                        acc.isolated_ones += yes_bit(l) as u64;
                    }
                }
            }
            *acc.yes_all.entry(vy).or_default() += 1;
            *acc.no_all.entry(vn).or_default() += 1;
            if bad_pair(&facts).is_some() {
                acc.bad += 1;
            } else {
                *acc.yes.entry(vy).or_default() += 1;
                *acc.no.entry(vn).or_default() += 1;
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
            for (k, v) in src {
                *dst.entry(k).or_default() += v;
            }
        }
        tot.bad += b.bad;
        tot.isolated += b.isolated;
        tot.isolated_ones += b.isolated_ones;
    }
    let t = trials as u64;
    let tv = tv_distance(&tot.yes, &tot.no);
    let noise = tv_noise_bound(&tot.yes, &tot.no);
    let mut report = ExperimentReport::new("tolerant-view", stream.seed);
    report
        .param("n", n)
        .param("N", calibration.big_n)
        .param("queries", queries.len())
        .param("trials", trials);
    report.estimate("P[Bad]", tot.bad as f64 / t as f64, 0.0, t);
    report.estimate("TV | not Bad", tv, noise, t - tot.bad);
    report.estimate("TV noise bound", noise, 0.0, t - tot.bad);
    report.estimate("TV unconditioned", tv_distance(&tot.yes_all, &tot.no_all), 0.0, t);
    report.estimate("distinct response vectors", tot.yes.len().max(tot.no.len()) as f64, 0.0, t);
    report.check_le("TV | not Bad <= 3 x noise bound", BoundSource::Analytic, tv, 3.0 * noise);
    if tot.isolated > 0 {
        let p = tot.isolated_ones as f64 / tot.isolated as f64;
        let sigma = (0.25 / tot.isolated as f64).sqrt();
        report.estimate("isolated starred response frequency", p, 3.0 * sigma, tot.isolated);
        report.check_le(
            "|isolated starred response frequency - 1/2| <= 3 sigma",
            BoundSource::Analytic,
            (p - 0.5).abs(),
            3.0 * sigma,
        );
    } else {
        report.note("no query landed alone in a flap; the 1/2-marginal check did not run");
    }
    Ok(report.finish())
}

/// `ε1 = 2c2 + τ + 2 V_D` and `ε2 = ((1 - 2c2)/3)(0.3 V_U - τ/2)`.
pub fn eps_formulas(c: &TolerantConstants, v_u: f64, v_d: f64) -> (f64, f64) {
    let eps1 = 2.0 * c.c2 + c.tau + 2.0 * v_d;
    let eps2 = ((1.0 - 2.0 * c.c2) / 3.0) * (0.3 * v_u - c.tau / 2.0);
    (eps1, eps2)
}

/// Monte Carlo `E[Vol(⊔ U_i)]`, `E[Vol(∪_{|T|>=2} F_T)]` and the gap `ε2 - ε1`.
pub fn estimate_eps_bounds(
    n: usize,
    calibration: &Calibration,
    instance_draws: usize,
    points_per_draw: usize,
    stream: RngStream,
) -> Result<ExperimentReport> {
    if instance_draws < 2 || points_per_draw == 0 {
        return Err(LabError::param("instance_draws", "need at least 2 draws and 1 point"));
    }
    let big_n = calibration.big_n;
    if calibration.n != n {
        return Err(LabError::CalibrationMismatch(format!("record is for n = {}", calibration.n)));
    }
    let c = TolerantConstants::from_c0(calibration.c0_hat())?;
    let r = solve_r(n, big_n as f64, c.c1)?;
    let blocks = par_blocks(stream, instance_draws, 4, |s, _, len| -> Result<Vec<(f64, f64)>> {
        let mut rng = s.rng();
        let mut pts = vec![0.0; points_per_draw * n];
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let body = NazarovBody::sample(n, big_n, r, &mut rng)?;
            fill_normals(&mut rng, &mut pts);
            let rc = body.region_counts(&pts)?;
            let m = points_per_draw as f64;
            out.push((rc.unique as f64 / m, rc.multi as f64 / m));
        }
        Ok(out)
    });
    let mut draws = Vec::with_capacity(instance_draws);
    for b in blocks {
        draws.extend(b?);
    }
    let us: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let ds: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let gaps: Vec<f64> = draws
        .iter()
        .map(|&(u, d)| {
            let (e1, e2) = eps_formulas(&c, u, d);
            e2 - e1
        })
        .collect();
    let (vu, vu_se) = mean_se(&us);
    let (vd, vd_se) = mean_se(&ds);
    let (gap, gap_se) = mean_se(&gaps);
    let (eps1, eps2) = eps_formulas(&c, vu, vd);
    let samples = (instance_draws * points_per_draw) as u64;
    let mut report = ExperimentReport::new("eps-bounds", stream.seed);
    report
        .param("n", n)
        .param("N", big_n)
        .param_f("c0_hat", c.c0_hat)
        .param_f("c2", c.c2)
        .param("instance_draws", instance_draws)
        .param("points_per_draw", points_per_draw);
    report.estimate("E[Vol(unique)]", vu, Z99_ONE_SIDED * vu_se, samples);
    report.estimate("E[Vol(dog-ears)]", vd, Z99_ONE_SIDED * vd_se, samples);
    report.estimate("eps1", eps1, 0.0, samples);
    report.estimate("eps2", eps2, 0.0, samples);
    report.estimate("eps2 - eps1", gap, Z99_ONE_SIDED * gap_se, samples);
    report.check_ge("eps2 - eps1 - z99 se > 0", BoundSource::Analytic, gap - Z99_ONE_SIDED * gap_se, f64::MIN_POSITIVE);
    Ok(report.finish())
}

/// Bound on `P[Z1 > h, Z2 > k]` for standard bivariate normals with correlation `ρ > 0`.
pub fn bivariate_tail_bound(rho: f64, h: f64, k: f64) -> f64 {
    let s = (1.0 - rho * rho).sqrt();
    sf(h) * (cdf((rho * h - k) / s) + rho * (0.5 * (h * h - k * k)).exp() * cdf((rho * k - h) / s))
}

/// Monte Carlo `P[Z1 > h, Z2 > k]` against [`bivariate_tail_bound`].
pub fn bivariate_tail_check(rho: f64, h: f64, k: f64, trials: usize, stream: RngStream) -> Result<ExperimentReport> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(LabError::param("rho", "must lie in (0, 1)"));
    }
    if !(h > 0.0 && k > 0.0) || trials == 0 {
        return Err(LabError::param("h/k/trials", "need h, k > 0 and trials > 0"));
    }
    let s = (1.0 - rho * rho).sqrt();
    let hits: u64 = par_blocks(stream, trials, 1 << 16, |st, _, len| {
        let mut rng = st.rng();
        let mut c = 0u64;
        for _ in 0..len {
            let z1: f64 = rng.sample(StandardNormal);
            let w: f64 = rng.sample(StandardNormal);
            let z2 = rho * z1 + s * w;
            c += (z1 > h && z2 > k) as u64;
        }
        c
    })
    .into_iter()
    .sum();
    let t = trials as u64;
    let p = hits as f64 / trials as f64;
    let bound = bivariate_tail_bound(rho, h, k);
    let sigma = binomial_sigma(p, bound, t);
    let mut report = ExperimentReport::new("bivariate-tail", stream.seed);
    report.param_f("rho", rho).param_f("h", h).param_f("k", k).param("trials", trials);
    report.estimate("P[Z1>h, Z2>k]", p, 3.0 * sigma, t);
    report.estimate("bound", bound, 0.0, 0);
    report.estimate("bound (roles swapped)", bivariate_tail_bound(rho, k, h), 0.0, 0);
    report.check_le("P[Z1>h, Z2>k] <= bound + 3 sigma", BoundSource::Analytic, p, bound + 3.0 * sigma);
    Ok(report.finish())
}

/// For a fixed pair of shell points: how often a random action line
/// separates them by more than the Curb width, and how often, conditioned
/// on `y_C` lying in exactly the flap `U_1`, `x_C` lies in exactly that
/// same flap.
///
/// The conditional draw fixes `C` first. `g^1` is drawn from its exact
/// conditional law (a truncated normal along `y_C`), since rejection at
/// rate `c1/N` is impractical. Each of `g^2..g^N` is drawn by rejection
/// until it avoids `hfsp(y_C)`. Only the projections of `g` onto
/// `span(x_C, y_C)` enter, so each normal is drawn as a bivariate pair.
pub fn xy_pair_experiment(
    n: usize,
    x: &[f64],
    y: &[f64],
    calibration: &Calibration,
    trials: usize,
    stream: RngStream,
) -> Result<ExperimentReport> {
    check_dim(n + 1, x.len())?;
    check_dim(n + 1, y.len())?;
    let c = TolerantConstants::from_c0(calibration.c0_hat())?;
    let w = c.shell_half_width();
    let centre = ((n + 1) as f64).sqrt();
    for (name, p) in [("x", x), ("y", y)] {
        let np = norm(p);
        if np < centre - w || np > centre + w {
            return Err(LabError::param(
                if name == "x" { "x" } else { "y" },
                format!("norm {np:.4} outside the shell [{:.4}, {:.4}]", centre - w, centre + w),
            ));
        }
    }
    if trials == 0 {
        return Err(LabError::param("trials", "must be positive"));
    }
    let big_n = calibration.big_n;
    let r = solve_r(n, big_n as f64, c.c1)?;
    let regions = Regions::new(c.c2);
    let width = regions.curb_width();
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let nx = norm(x);
    let ny = norm(y);

    // (i) random action line
    let (sep, proj_ok) = par_blocks(stream.substream(1), trials, 4096, |s, _, len| {
        let mut rng = s.rng();
        let mut a = vec![0.0; n + 1];
        let (mut sep, mut ok) = (0u64, 0u64);
        for _ in 0..len {
            fill_normals(&mut rng, &mut a);
            let na = norm(&a);
            let da = dot(&diff, &a) / na;
            sep += (da.abs() >= width) as u64;
            let xa = dot(x, &a) / na;
            let ya = dot(y, &a) / na;
            let xc = (nx * nx - xa * xa).max(0.0).sqrt();
            let yc = (ny * ny - ya * ya).max(0.0).sqrt();
            ok += (xc >= nx - 1.0 && yc >= ny - 1.0) as u64;
        }
        (sep, ok)
    })
    .into_iter()
    .fold((0u64, 0u64), |a, b| (a.0 + b.0, a.1 + b.1));

    // (ii) fixed control space, conditional body draws
    let mut rng = stream.substream(2).rng();
    let mut a = vec![0.0; n + 1];
    fill_normals(&mut rng, &mut a);
    let na = norm(&a);
    a.iter_mut().for_each(|v| *v /= na);
    let control = householder_complement(&a)?;
    let xc = control.coords(x)?;
    let yc = control.coords(y)?;
    let (nxc, nyc) = (norm(&xc), norm(&yc));
    let root_n = (n as f64).sqrt();
    let rho = dot(&xc, &yc) / (nxc * nyc);
    let h = r / nxc;
    let k = r / nyc;
    let mut report = ExperimentReport::new("xy-pair", stream.seed);
    report
        .param("n", n)
        .param_f("|x-y|", norm(&diff))
        .param_f("curb width", width)
        .param("trials", trials);
    let t = trials as u64;
    report.estimate("P[|x_A - y_A| >= curb width]", sep as f64 / trials as f64, 0.0, t);
    let pj = proj_ok as f64 / trials as f64;
    let claim = 1.0 - 2f64.powf(-0.5 * (n as f64).powf(0.25));
    let sigma = binomial_sigma(1.0 - pj, 1.0 - claim, t);
    report.estimate("P[|x_C| >= |x| - 1 and |y_C| >= |y| - 1]", pj, 3.0 * sigma, t);
    report.check_ge(
        "projection norms frequency >= 1 - 2^(-n^(1/4)/2) - 3 sigma",
        BoundSource::Analytic,
        pj,
        claim - 3.0 * sigma,
    );
    report.estimate("rho(x_C, y_C)", rho, 0.0, 0);
    if nyc > root_n {
        report.note("|y_C| > sqrt(n): y_C lies in no flap, the conditional probability is undefined");
        return Ok(report.finish());
    }
    let trunc_k = sf(k);
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    let same = par_blocks(stream.substream(3), trials, 256, |st, _, len| {
        let mut rng = st.rng();
        let mut hits = 0u64;
        for _ in 0..len {
            // g^1 along y_C conditioned on <g, y_C> > r
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let z2 = crate::gauss::special::isf(u * trunc_k);
            let w: f64 = rng.sample(StandardNormal);
            let z1 = rho * z2 + s * w;
            if nxc > root_n || z1 <= h {
                continue;
            }
            let mut ok = true;
            for _ in 1..big_n {
                // rejection: g^j must avoid hfsp(y_C)
                let a1 = loop {
                    let a2: f64 = rng.sample(StandardNormal);
                    let w: f64 = rng.sample(StandardNormal);
                    if a2 <= k {
                        break rho * a2 + s * w;
                    }
                };
                if a1 > h {
                    ok = false;
                }
            }
            hits += ok as u64;
        }
        hits
    })
    .into_iter()
    .sum::<u64>();
    let p_star = same as f64 / trials as f64;
    let bound = if rho > 0.0 && rho < 1.0 {
        bivariate_tail_bound(rho, k, h) / sf(k)
    } else {
        sf(h)
    };
    let sigma = binomial_sigma(p_star, bound, t);
    report.estimate("P[S(x_C) = S(y_C) | S(y_C) = {1}]", p_star, 3.0 * sigma, t);
    report.estimate("bivariate bound / P[hfsp(y_C)]", bound, 0.0, 0);
    report.check_le(
        "conditional probability <= bivariate bound + 3 sigma",
        BoundSource::Analytic,
        p_star,
        (bound + 3.0 * sigma).min(1.0),
    );
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal(n: usize) -> Calibration {
        Calibration {
            format_version: CALIBRATION_VERSION,
            n,
            big_n: default_facet_count(n),
            c1: TOLERANT_C1,
            v_u_mean: 0.002,
            v_u_ci: 0.0002,
            produced_by_seed: 0,
        }
    }

    #[test]
    fn region_examples() {
        let c2 = 0.001;
        assert_eq!(region_of(0.0, c2), Region::Middle);
        assert_eq!(region_of(-50.0, c2), Region::Left);
        assert_eq!(region_of(50.0, c2), Region::Right);
        let r = Regions::new(c2);
        assert!(((cdf(r.ends[1]) - cdf(r.ends[0])) - c2).abs() < 1e-10);
        assert!(((cdf(r.ends[3]) - cdf(r.ends[2])) - c2).abs() < 1e-10);
        for e in r.ends {
            assert_eq!(r.classify(e), Region::Curb);
        }
    }

    #[test]
    fn constants_follow_calibration() {
        let c = TolerantConstants::from_c0(0.2).unwrap();
        assert!((c.c2 - 2e-5).abs() < 1e-18);
        assert_eq!(c.c2, c.tau);
        assert_eq!(c.c1, 0.01);
    }

    #[test]
    fn instance_invariants() {
        let inst = TolerantInstance::from_seed(100, None, &cal(100), 3).unwrap();
        assert!((norm(inst.action_dir()) - 1.0).abs() < 1e-12);
        for i in 0..100 {
            assert!(dot(inst.control().vector(i), inst.action_dir()).abs() < 1e-8);
        }
        assert!((cdf(inst.r() / 10.0) - (1.0 - 0.01 / 1024.0)).abs() < 1e-9);
        assert!((inst.r() - 42.7).abs() < 0.01);
    }

    #[test]
    fn mismatched_calibration_is_rejected() {
        let err = TolerantInstance::from_seed(64, None, &cal(100), 1).unwrap_err();
        assert!(matches!(err, LabError::CalibrationMismatch(_)));
    }

    #[test]
    fn missing_calibration_file() {
        let err = Calibration::load(Path::new("/nonexistent/calibration.json")).unwrap_err();
        assert!(matches!(err, LabError::MissingCalibration { .. }));
        assert!(err.to_string().contains("calibrate-c0"));
    }

    #[test]
    fn far_points_are_zero() {
        let inst = TolerantInstance::from_seed(16, None, &cal(16), 1).unwrap();
        let mut x = vec![0.0; 17];
        x[0] = 100.0;
        assert_eq!(inst.eval_extended(&x).unwrap(), ExtendedLabel::Zero);
        assert!(inst.eval_extended(&[0.0]).is_err());
    }

    #[test]
    fn mapping_table() {
        assert!(yes_bit(ExtendedLabel::OneStar));
        assert!(!no_bit(ExtendedLabel::OneStar, Region::Left));
        assert!(!yes_bit(ExtendedLabel::ZeroStar));
        assert!(!no_bit(ExtendedLabel::ZeroStar, Region::Middle));
        assert!(no_bit(ExtendedLabel::ZeroStar, Region::Right));
        assert!(no_bit(ExtendedLabel::One, Region::Middle) && yes_bit(ExtendedLabel::One));
    }

    #[test]
    fn eps_formula_replay() {
        let c = TolerantConstants::from_c0(0.2).unwrap();
        let (e1, e2) = eps_formulas(&c, 0.002, 1e-5);
        assert!((e1 - (2.0 * 2e-5 + 2e-5 + 2e-5)).abs() < 1e-15);
        assert!((e2 - ((1.0 - 4e-5) / 3.0) * (0.3 * 0.002 - 1e-5)).abs() < 1e-15);
        // tiny c2 and tau with no dog-ears: eps1 -> 0, eps2 -> 0.1 V_U
        let c = TolerantConstants::from_c0(1e-9).unwrap();
        let (e1, e2) = eps_formulas(&c, 0.5, 0.0);
        assert!(e1 < 1e-10);
        assert!((e2 - 0.05).abs() < 1e-9);
    }

    /// `P[Z1 > h, Z2 > k] = int_h^inf phi(z) Phi((rho z - k)/s) dz` by Simpson's rule.
    fn bivariate_tail_quadrature(rho: f64, h: f64, k: f64) -> f64 {
        let s = (1.0 - rho * rho).sqrt();
        let (lo, hi, m) = (h, h + 40.0, 200_000);
        let step = (hi - lo) / m as f64;
        let f = |z: f64| crate::gauss::special::pdf(z) * cdf((rho * z - k) / s);
        let mut acc = f(lo) + f(hi);
        for i in 1..m {
            acc += f(lo + i as f64 * step) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * step / 3.0
    }

    #[test]
    fn bivariate_bound_dominates_quadrature() {
        for rho in [0.1, 0.5, 0.9, 0.99] {
            for (h, k) in [(1.0, 1.0), (2.0, 3.0), (3.0, 2.0), (4.0, 4.5)] {
                let exact = bivariate_tail_quadrature(rho, h, k);
                let bound = bivariate_tail_bound(rho, h, k);
                assert!(bound >= exact * (1.0 - 1e-9), "rho {rho} h {h} k {k}: {bound} < {exact}");
                assert!(bound <= sf(h).min(sf(k)) * 2.0);
            }
        }
    }

}
