//! Versioned, checksummed JSON instance files.
//!
//! Every record regenerates its instance from `(seed, stream_id)`; a body
//! record may instead carry its normals explicitly. Floats are written in
//! shortest round-trip form, so explicit records load bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::adaptive::{sample_adaptive_instance, AdaptiveInstance, ADAPTIVE_STREAM};
use crate::error::{LabError, Result};
use crate::gauss::rng::RngStream;
use crate::nazarov::{NazarovBody, BODY_STREAM};
use crate::ptf::{sample_ptf_instance_with, DiscreteDistribution, Flavor, PtfInstance, PTF_STREAM};
use crate::tolerant::{TolerantConstants, TolerantInstance, TOLERANT_C1, TOLERANT_STREAM};

pub const FORMAT_VERSION: u32 = 1;

fn body_stream() -> u64 {
    BODY_STREAM
}
fn adaptive_stream() -> u64 {
    ADAPTIVE_STREAM
}
fn tolerant_stream() -> u64 {
    TOLERANT_STREAM
}
fn ptf_stream() -> u64 {
    PTF_STREAM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyRecord {
    pub format_version: u32,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub r: f64,
    pub c1: f64,
    pub seed: u64,
    #[serde(default = "body_stream")]
    pub stream_id: u64,
    /// Row-major `N x n`; absent for seed-only records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveRecord {
    pub format_version: u32,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub r: f64,
    pub seed: u64,
    #[serde(default = "adaptive_stream")]
    pub stream_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TolerantRecord {
    pub format_version: u32,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub seed: u64,
    #[serde(default = "tolerant_stream")]
    pub stream_id: u64,
    pub c0_hat: f64,
    pub c1: f64,
    pub c2: f64,
    pub tau: f64,
}

/// A distribution as parallel arrays of decimal strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRecord {
    pub atoms: Vec<String>,
    pub probs: Vec<String>,
}

impl DistributionRecord {
    pub fn of(d: &DiscreteDistribution) -> Self {
        let s = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect();
        DistributionRecord {
            atoms: s(d.atoms()),
            probs: s(d.probs()),
        }
    }

    pub fn to_distribution(&self) -> Result<DiscreteDistribution> {
        let p = |v: &[String]| -> Result<Vec<f64>> {
            v.iter()
                .map(|s| s.parse().map_err(|_| LabError::InstanceFormat(format!("bad decimal {s:?}"))))
                .collect()
        };
        DiscreteDistribution::new(p(&self.atoms)?, p(&self.probs)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtfRecord {
    pub format_version: u32,
    pub n: usize,
    pub l: u32,
    pub mu: f64,
    pub clip_c: f64,
    pub flavor: Flavor,
    pub seed: u64,
    #[serde(default = "ptf_stream")]
    pub stream_id: u64,
    pub neg_atom: f64,
    pub neg_prob: f64,
    /// The coefficient law actually drawn from.
    pub law: DistributionRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InstanceRecord {
    Body(BodyRecord),
    Adaptive(AdaptiveRecord),
    Tolerant(TolerantRecord),
    Ptf(PtfRecord),
}

#[derive(Debug, Clone)]
pub enum HardInstance {
    Body(NazarovBody),
    Adaptive(AdaptiveInstance),
    Tolerant(TolerantInstance),
    Ptf(PtfInstance),
}

impl HardInstance {
    pub fn dim(&self) -> usize {
        match self {
            HardInstance::Body(b) => b.n(),
            HardInstance::Adaptive(a) => a.dim(),
            HardInstance::Tolerant(t) => t.dim(),
            HardInstance::Ptf(p) => p.n(),
        }
    }

    /// Oracle output at `x` in a comparable form.
    pub fn probe(&self, x: &[f64]) -> Result<String> {
        Ok(match self {
            HardInstance::Body(b) => format!("{:?}", b.classify(x)?),
            HardInstance::Adaptive(a) => a.eval(x)?.to_string(),
            HardInstance::Tolerant(t) => format!("{:?}", t.eval_extended(x)?),
            HardInstance::Ptf(p) => p.eval(x)?.to_string(),
        })
    }
}

impl BodyRecord {
    pub fn seed_only(n: usize, big_n: usize, r: f64, c1: f64, seed: u64) -> Self {
        BodyRecord {
            format_version: FORMAT_VERSION,
            n,
            big_n,
            r,
            c1,
            seed,
            stream_id: BODY_STREAM,
            normals: None,
        }
    }

    /// Record carrying the normals of the body regenerated from `seed`.
    pub fn explicit(n: usize, big_n: usize, r: f64, c1: f64, seed: u64) -> Result<Self> {
        let mut rec = Self::seed_only(n, big_n, r, c1, seed);
        rec.normals = Some(rec.regenerate()?.normals().to_vec());
        Ok(rec)
    }

    fn regenerate(&self) -> Result<NazarovBody> {
        NazarovBody::sample(self.n, self.big_n, self.r, &mut RngStream::new(self.seed, self.stream_id).rng())
    }

    pub fn build(&self) -> Result<NazarovBody> {
        match &self.normals {
            None => self.regenerate(),
            Some(v) => {
                if v.len() != self.n * self.big_n {
                    return Err(LabError::InstanceFormat(format!(
                        "expected {} normal entries, found {}",
                        self.n * self.big_n,
                        v.len()
                    )));
                }
                NazarovBody::from_normals(self.n, self.r, v.clone())
            }
        }
    }
}

impl AdaptiveRecord {
    pub fn of(inst: &AdaptiveInstance) -> Self {
        AdaptiveRecord {
            format_version: FORMAT_VERSION,
            n: inst.n(),
            big_n: inst.big_n(),
            r: inst.r(),
            seed: inst.stream().seed,
            stream_id: inst.stream().stream_id,
        }
    }

    pub fn build(&self) -> Result<AdaptiveInstance> {
        let inst = sample_adaptive_instance(self.n, Some(self.big_n), RngStream::new(self.seed, self.stream_id))?;
        if inst.r() != self.r {
            return Err(LabError::InstanceFormat(format!(
                "recorded r = {} but (n, N) give r = {}",
                self.r,
                inst.r()
            )));
        }
        Ok(inst)
    }
}

impl TolerantRecord {
    pub fn of(inst: &TolerantInstance) -> Self {
        let c = inst.constants();
        TolerantRecord {
            format_version: FORMAT_VERSION,
            n: inst.n(),
            big_n: inst.big_n(),
            seed: inst.stream().seed,
            stream_id: inst.stream().stream_id,
            c0_hat: c.c0_hat,
            c1: c.c1,
            c2: c.c2,
            tau: c.tau,
        }
    }

    pub fn build(&self) -> Result<TolerantInstance> {
        let c = TolerantConstants::from_c0(self.c0_hat)?;
        if self.c1 != TOLERANT_C1 || c.c2 != self.c2 || c.tau != self.tau {
            return Err(LabError::InstanceFormat(
                "recorded c1/c2/tau disagree with the values implied by c0_hat".into(),
            ));
        }
        TolerantInstance::sample_with_constants(self.n, self.big_n, c, RngStream::new(self.seed, self.stream_id))
    }
}

impl PtfRecord {
    pub fn of(inst: &PtfInstance, law: &DiscreteDistribution) -> Self {
        PtfRecord {
            format_version: FORMAT_VERSION,
            n: inst.n(),
            l: inst.l(),
            mu: inst.mu(),
            clip_c: inst.clip_c(),
            flavor: inst.flavor(),
            seed: inst.stream().seed,
            stream_id: inst.stream().stream_id,
            neg_atom: inst.neg_atom(),
            neg_prob: inst.neg_prob(),
            law: DistributionRecord::of(law),
        }
    }

    pub fn build(&self) -> Result<PtfInstance> {
        let inst = sample_ptf_instance_with(
            self.n,
            self.l,
            self.clip_c,
            self.flavor,
            self.neg_atom,
            self.neg_prob,
            RngStream::new(self.seed, self.stream_id),
        )?;
        let (mu, u, v) = crate::ptf::coefficient_laws(self.l, self.neg_atom, self.neg_prob)?;
        let law = if self.flavor == Flavor::Yes { u } else { v };
        if mu != self.mu || self.law.to_distribution()? != law {
            return Err(LabError::InstanceFormat(
                "recorded mu or coefficient law differs from the regenerated one".into(),
            ));
        }
        Ok(inst)
    }
}

impl InstanceRecord {
    pub fn format_version(&self) -> u32 {
        match self {
            InstanceRecord::Body(r) => r.format_version,
            InstanceRecord::Adaptive(r) => r.format_version,
            InstanceRecord::Tolerant(r) => r.format_version,
            InstanceRecord::Ptf(r) => r.format_version,
        }
    }

    pub fn build(&self) -> Result<HardInstance> {
        Ok(match self {
            InstanceRecord::Body(r) => HardInstance::Body(r.build()?),
            InstanceRecord::Adaptive(r) => HardInstance::Adaptive(r.build()?),
            InstanceRecord::Tolerant(r) => HardInstance::Tolerant(r.build()?),
            InstanceRecord::Ptf(r) => HardInstance::Ptf(r.build()?),
        })
    }
}

fn checksum(v: &Value) -> String {
    let digest = Sha256::digest(v.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// JSON text of a record with its checksum.
pub fn record_to_json(record: &InstanceRecord) -> Result<String> {
    let mut v = serde_json::to_value(record)?;
    let sum = checksum(&v);
    v.as_object_mut()
        .expect("records serialize to objects")
        .insert("checksum".into(), Value::String(sum));
    Ok(serde_json::to_string_pretty(&v)?)
}

pub fn record_from_json(text: &str) -> Result<InstanceRecord> {
    let mut v: Value = serde_json::from_str(text)
        .map_err(|e| LabError::InstanceFormat(format!("truncated or malformed instance file: {e}")))?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| LabError::InstanceFormat("instance file is not a JSON object".into()))?;
    let version = obj
        .get("format_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| LabError::InstanceFormat("missing format_version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(LabError::VersionMismatch {
            found: version as u32,
            expected: FORMAT_VERSION,
        });
    }
    let stored = match obj.remove("checksum") {
        Some(Value::String(s)) => s,
        _ => return Err(LabError::Checksum("missing checksum".into())),
    };
    let actual = checksum(&v);
    if stored != actual {
        return Err(LabError::Checksum(format!("stored {stored}, computed {actual}")));
    }
    serde_json::from_value(v).map_err(|e| LabError::InstanceFormat(e.to_string()))
}

pub fn save_instance(path: &Path, record: &InstanceRecord) -> Result<()> {
    std::fs::write(path, record_to_json(record)?)?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<HardInstance> {
    load_record(path)?.build()
}

pub fn load_record(path: &Path) -> Result<InstanceRecord> {
    record_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nazarov::solve_r_half;

    #[test]
    fn seed_only_and_explicit_bodies_agree() {
        let r = solve_r_half(16, 64.0).unwrap();
        let a = BodyRecord::seed_only(16, 64, r, 0.69, 5).build().unwrap();
        let rec = BodyRecord::explicit(16, 64, r, 0.69, 5).unwrap();
        let text = record_to_json(&InstanceRecord::Body(rec)).unwrap();
        let b = match record_from_json(&text).unwrap().build().unwrap() {
            HardInstance::Body(b) => b,
            _ => unreachable!(),
        };
        assert_eq!(a.normals(), b.normals());
    }

    #[test]
    fn tampering_is_detected() {
        let rec = InstanceRecord::Body(BodyRecord::seed_only(4, 8, 3.0, 0.5, 1));
        let text = record_to_json(&rec).unwrap();
        let bad = text.replace("\"seed\": 1", "\"seed\": 2");
        assert!(matches!(record_from_json(&bad), Err(LabError::Checksum(_))));
        let old = text.replace("\"format_version\": 1", "\"format_version\": 0");
        assert!(matches!(record_from_json(&old), Err(LabError::VersionMismatch { .. })));
        let cut = &text[..text.len() / 2];
        assert!(matches!(record_from_json(cut), Err(LabError::InstanceFormat(_))));
    }
}
