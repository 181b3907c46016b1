//! Save/load round trips for every instance kind.

use convexity_lab::adaptive::sample_adaptive_instance;
use convexity_lab::gauss::fill_normals;
use convexity_lab::lab::persist::{
    load_record, record_from_json, record_to_json, AdaptiveRecord, BodyRecord, PtfRecord, TolerantRecord,
};
use convexity_lab::lab::{load_instance, save_instance, HardInstance, InstanceRecord};
use convexity_lab::nazarov::solve_r_half;
use convexity_lab::ptf::{coefficient_laws, sample_ptf_instance, Flavor, DEFAULT_CLIP, DEFAULT_NEG_ATOM, DEFAULT_NEG_PROB};
use convexity_lab::tolerant::{TolerantConstants, TolerantInstance};
use convexity_lab::{LabError, RngStream};

const PROBES: usize = 1000;

/// Points at Gaussian scale, plus a few scaled towards the shell where labels actually vary.
fn probe_points(d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = RngStream::new(seed, 77).rng();
    (0..PROBES)
        .map(|i| {
            let mut x = vec![0.0; d];
            fill_normals(&mut rng, &mut x);
            let s = 0.9 + 0.2 * (i % 5) as f64 / 4.0;
            x.iter_mut().for_each(|v| *v *= s);
            x
        })
        .collect()
}

fn roundtrip(record: InstanceRecord) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("instance.json");
    let before = record.build().unwrap();
    save_instance(&path, &record).unwrap();
    assert_eq!(load_record(&path).unwrap(), record);
    let after = load_instance(&path).unwrap();
    assert_eq!(before.dim(), after.dim());
    let mut seen = std::collections::BTreeSet::new();
    for x in probe_points(before.dim(), 3) {
        let a = before.probe(&x).unwrap();
        assert_eq!(a, after.probe(&x).unwrap());
        seen.insert(a);
    }
    assert!(seen.len() > 1, "probes never changed label: {seen:?}");
}

fn body_record(explicit: bool) -> BodyRecord {
    let (n, big_n) = (20, 256);
    let r = solve_r_half(n, big_n as f64).unwrap();
    if explicit {
        BodyRecord::explicit(n, big_n, r, 0.69, 11).unwrap()
    } else {
        BodyRecord::seed_only(n, big_n, r, 0.69, 11)
    }
}

#[test]
fn body_roundtrip_seed_only_and_explicit() {
    roundtrip(InstanceRecord::Body(body_record(false)));
    roundtrip(InstanceRecord::Body(body_record(true)));
}

#[test]
fn seed_only_and_explicit_records_give_the_same_oracle() {
    let a = InstanceRecord::Body(body_record(false)).build().unwrap();
    let b = InstanceRecord::Body(body_record(true)).build().unwrap();
    for x in probe_points(a.dim(), 4) {
        assert_eq!(a.probe(&x).unwrap(), b.probe(&x).unwrap());
    }
}

#[test]
fn adaptive_roundtrip() {
    let inst = sample_adaptive_instance(20, Some(256), RngStream::new(12, 1)).unwrap();
    roundtrip(InstanceRecord::Adaptive(AdaptiveRecord::of(&inst)));
}

#[test]
fn tolerant_roundtrip() {
    let c = TolerantConstants::from_c0(0.0021).unwrap();
    let inst = TolerantInstance::sample_with_constants(20, 256, c, RngStream::new(13, 2)).unwrap();
    roundtrip(InstanceRecord::Tolerant(TolerantRecord::of(&inst)));
}

#[test]
fn ptf_roundtrip_both_flavors() {
    let (_, yes, no) = coefficient_laws(3, DEFAULT_NEG_ATOM, DEFAULT_NEG_PROB).unwrap();
    for (flavor, law) in [(Flavor::Yes, yes), (Flavor::No, no)] {
        let inst = sample_ptf_instance(20, 3, DEFAULT_CLIP, flavor, RngStream::new(14, 3)).unwrap();
        roundtrip(InstanceRecord::Ptf(PtfRecord::of(&inst, &law)));
    }
}

#[test]
fn truncated_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.json");
    let text = record_to_json(&InstanceRecord::Body(body_record(true))).unwrap();
    std::fs::write(&path, &text[..text.len() * 2 / 3]).unwrap();
    assert!(matches!(load_instance(&path), Err(LabError::InstanceFormat(_))));
}

#[test]
fn version_mismatch_is_reported() {
    let text = record_to_json(&InstanceRecord::Body(body_record(false))).unwrap();
    let old = text.replace("\"format_version\": 1", "\"format_version\": 9");
    assert!(matches!(record_from_json(&old), Err(LabError::VersionMismatch { .. })));
}

#[test]
fn missing_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_instance(&dir.path().join("absent.json")).is_err());
}

#[test]
fn hard_instance_kinds_report_their_dimension() {
    let h = InstanceRecord::Body(body_record(false)).build().unwrap();
    assert!(matches!(h, HardInstance::Body(_)));
    assert_eq!(h.dim(), 20);
}
