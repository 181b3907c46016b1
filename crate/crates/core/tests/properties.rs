use convexity_lab::gauss::{householder_complement, sample_haar_frame};
use convexity_lab::ptf::{coefficient_laws, hermite_rule, match_moments_nonneg};
use convexity_lab::testers::{in_convex_hull, verify_combination};
use convexity_lab::tolerant::{Region, Regions};
use convexity_lab::RngStream;
use proptest::prelude::*;

/// `E[(mu + Z)^k]` through `m_k = mu m_{k-1} + (k-1) m_{k-2}`.
fn normal_moment(mu: f64, k: u32) -> f64 {
    let (mut a, mut b) = (1.0, mu);
    if k == 0 {
        return a;
    }
    for j in 2..=k {
        let c = mu * b + (j - 1) as f64 * a;
        a = b;
        b = c;
    }
    b
}

fn rel_close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * (1.0 + y.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn haar_frames_are_orthonormal(d in 1usize..40, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let k = ((d as f64 * frac).round() as usize).max(1);
        let f = sample_haar_frame(d, k, &mut RngStream::new(seed, 0).rng()).unwrap();
        prop_assert_eq!(f.count(), k);
        prop_assert!(f.gram_error() < 1e-12, "gram error {}", f.gram_error());
    }

    #[test]
    fn householder_complement_is_orthogonal_to_v(raw in prop::collection::vec(-5.0f64..5.0, 2..20)) {
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let v: Vec<f64> = raw.iter().map(|x| x / norm).collect();
        let f = householder_complement(&v).unwrap();
        prop_assert_eq!(f.count(), v.len() - 1);
        prop_assert!(f.gram_error() < 1e-12);
        for i in 0..f.count() {
            let dot: f64 = f.vector(i).iter().zip(&v).map(|(a, b)| a * b).sum();
            prop_assert!(dot.abs() < 1e-12);
        }
    }

    #[test]
    fn convex_combinations_are_found_and_verify(
        d in 1usize..8,
        k in 1usize..12,
        seed in any::<u64>(),
    ) {
        let mut rng = RngStream::new(seed, 1).rng();
        use rand::Rng;
        let pts: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = w.iter().sum();
        let mut y = vec![0.0; d];
        for (p, wi) in pts.iter().zip(&w) {
            for (yj, pj) in y.iter_mut().zip(p) {
                *yj += wi / total * pj;
            }
        }
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let lambda = in_convex_hull(&y, &refs, 1e-7).unwrap();
        prop_assert!(lambda.is_some());
        prop_assert!(verify_combination(&y, &refs, &lambda.unwrap(), 1e-7));
    }

    #[test]
    fn points_beyond_every_vertex_are_outside(d in 1usize..8, k in 1usize..12, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 2).rng();
        use rand::Rng;
        let pts: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut y = vec![0.0; d];
        y[0] = 1.5;
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        prop_assert!(in_convex_hull(&y, &refs, 1e-7).unwrap().is_none());
    }

    #[test]
    fn degenerate_point_sets_never_break_the_solver(
        d in 2usize..24,
        flat in 1usize..6,
        k in 2usize..40,
        dup in 0usize..4,
        inside in any::<bool>(),
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = RngStream::new(seed, 3).rng();
        let flat = flat.min(d - 1);
        let frame = sample_haar_frame(d, flat + 1, &mut rng).unwrap();
        let lift = |c: &[f64]| -> Vec<f64> {
            let mut x = vec![0.0; d];
            for (i, ci) in c.iter().enumerate() {
                for (xj, vj) in x.iter_mut().zip(frame.vector(i)) {
                    *xj += ci * vj;
                }
            }
            x
        };
        let mut coords: Vec<Vec<f64>> = (0..k).map(|_| (0..flat).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        for i in 0..dup.min(k - 1) {
            coords.push(coords[i].clone());
        }
        let pts: Vec<Vec<f64>> = coords.iter().map(|c| lift(c)).collect();
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let y = if inside {
            let w: Vec<f64> = (0..pts.len()).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
            let total: f64 = w.iter().sum::<f64>().max(1e-12);
            let mut y = vec![0.0; d];
            for (p, wi) in pts.iter().zip(&w) {
                for (yj, pj) in y.iter_mut().zip(p) {
                    *yj += wi / total * pj;
                }
            }
            y
        } else {
            // Beyond every point along the first flat direction, or off the flat entirely.
            let mut c = vec![0.0; flat + 1];
            if seed % 2 == 0 {
                c[0] = 2.5;
            } else {
                c[flat] = 0.5;
            }
            lift(&c)
        };
        let got = in_convex_hull(&y, &refs, 1e-8);
        prop_assert!(got.is_ok(), "solver error {:?}", got);
        match got.unwrap() {
            Some(l) => {
                prop_assert!(inside);
                prop_assert!(verify_combination(&y, &refs, &l, 1e-8));
            }
            None => prop_assert!(!inside),
        }
    }

    #[test]
    fn regions_partition_the_line(c2 in 1e-4f64..0.49, a in -6.0f64..6.0) {
        let r = Regions::new(c2);
        let [e1, e2, e3, e4] = r.ends;
        prop_assert!(e1 < e2 && e2 < e3 && e3 < e4);
        prop_assert!(((e2 - e1) - (e4 - e3)).abs() < 1e-9);
        let want = if a < e1 {
            Region::Left
        } else if a > e4 {
            Region::Right
        } else if a > e2 && a < e3 {
            Region::Middle
        } else {
            Region::Curb
        };
        prop_assert_eq!(r.classify(a), want);
    }
}

#[test]
fn hermite_rules_integrate_polynomials_exactly() {
    for m in 1..=8usize {
        let (x, w) = hermite_rule(m);
        for k in 0..(2 * m as u32) {
            let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
            assert!(rel_close(got, normal_moment(0.0, k), 1e-9), "m={m} k={k}: {got}");
        }
    }
}

#[test]
fn coefficient_laws_match_moments_for_odd_degrees() {
    // The default mass 0.01 stays valid up to l = 5; higher degrees need less.
    for (l, p) in [(1u32, 0.01), (3, 0.01), (5, 0.01), (7, 1e-3), (9, 1e-5), (11, 1e-5)] {
        let (mu, u, v) = coefficient_laws(l, -1.0, p).unwrap();
        assert!(u.atoms().iter().all(|a| *a >= 0.0), "l={l}: u has a negative atom");
        assert!(u.atoms().iter().any(|a| *a == 0.0) || l == 1);
        assert!(v.prob_negative() >= p - 1e-15);
        assert!(v.len() <= l as usize + 1);
        for k in 1..=l {
            let want = normal_moment(mu, k);
            assert!(rel_close(u.moment(k), want, 1e-8), "l={l} k={k}: u {} vs {want}", u.moment(k));
            assert!(rel_close(v.moment(k), want, 1e-8), "l={l} k={k}: v {} vs {want}", v.moment(k));
        }
    }
}

#[test]
fn oversized_negative_mass_asks_to_shrink() {
    for (l, p) in [(7u32, 0.01), (9, 1e-3)] {
        let err = coefficient_laws(l, -1.0, p).unwrap_err().to_string();
        assert!(err.contains("shrink neg_prob"), "l={l}: {err}");
    }
}

#[test]
fn nonneg_matching_rejects_even_degree() {
    assert!(match_moments_nonneg(0).is_err());
    assert!(match_moments_nonneg(4).is_err());
}

#[test]
fn single_moment_with_half_negative_mass() {
    // p(-1) + (1 - p) a = 1 with p = 1/2 gives a = 3.
    let v = convexity_lab::ptf::match_moments_with_negative(1.0, 1, -1.0, 0.5).unwrap();
    assert_eq!(v.len(), 2);
    assert!((v.atoms()[0] + 1.0).abs() < 1e-12 && (v.atoms()[1] - 3.0).abs() < 1e-9);
    assert!((v.probs()[0] - 0.5).abs() < 1e-12);
}
