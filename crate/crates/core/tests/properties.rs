use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use utrack::assignment::{brute_force_max, hungarian_max, SimilarityMatrix};
use utrack::contrastive::{info_nce, ContrastiveBatch};
use utrack::geometry::{apply_affine, box_to_affine, iou, solve_affine, AffineTransform, BoundingBox};
use utrack::tga::SamplingWeights;
use utrack::uncertainty::{association_uncertainty, tracklet_uncertainty, UncertaintyMargins};

fn bbox() -> impl Strategy<Value = BoundingBox> {
    (-100.0..100.0f64, -100.0..100.0f64, 0.5..50.0f64, 0.5..50.0f64)
        .prop_map(|(cx, cy, w, h)| BoundingBox::new(cx, cy, w, h).unwrap())
}

fn matrix(max_r: usize, max_c: usize) -> impl Strategy<Value = SimilarityMatrix> {
    (1..=max_r, 1..=max_c).prop_flat_map(|(r, c)| {
        prop::collection::vec(-1.0..1.0f64, r * c).prop_map(move |v| SimilarityMatrix::new(r, c, v).unwrap())
    })
}

fn unit(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, dim)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let x = iou(&a, &b);
        prop_assert_eq!(x, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_to_affine_reproduces_target(s in bbox(), d in bbox()) {
        let out = apply_affine(&box_to_affine(&s, &d), &s);
        for (p, q) in out.corners().iter().zip(d.corners().iter()) {
            prop_assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn shear_free_composition(
        a in (0.2..5.0f64, 0.2..5.0f64, -50.0..50.0f64, -50.0..50.0f64),
        b in (0.2..5.0f64, 0.2..5.0f64, -50.0..50.0f64, -50.0..50.0f64),
        bx in bbox(),
    ) {
        let ta = AffineTransform::new([a.0, 0.0, a.2, 0.0, a.1, a.3]).unwrap();
        let tb = AffineTransform::new([b.0, 0.0, b.2, 0.0, b.1, b.3]).unwrap();
        let once = apply_affine(&ta.compose(&tb), &bx);
        let twice = apply_affine(&ta, &apply_affine(&tb, &bx));
        for (p, q) in once.corners().iter().zip(twice.corners().iter()) {
            prop_assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn solve_affine_recovers_transform(
        c in prop::array::uniform6(-3.0..3.0f64),
        pts in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 4..10),
    ) {
        let t = AffineTransform::new(c);
        prop_assume!(t.as_ref().is_ok_and(|t| t.determinant().abs() > 0.05));
        let t = t.unwrap();
        let src: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
        // Reject nearly collinear point sets.
        let spread = |i: usize, j: usize, k: usize| {
            let (a, b, c) = (src[i], src[j], src[k]);
            ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs()
        };
        prop_assume!(spread(0, 1, 2) > 100.0);
        let dst: Vec<[f64; 2]> = src.iter().map(|&p| t.apply_point(p)).collect();
        let got = solve_affine(&src, &dst).unwrap();
        prop_assert!(got.max_abs_diff(&t) < 1e-6);
    }

    #[test]
    fn hungarian_matches_brute_force(m in matrix(5, 5)) {
        let h = hungarian_max(&m, f64::NEG_INFINITY);
        let b = brute_force_max(&m, f64::NEG_INFINITY).unwrap();
        prop_assert_eq!(h.total(&m), b.total(&m));
        // Random reals are distinct with probability one.
        prop_assert_eq!(h.pairs, b.pairs);
    }

    #[test]
    fn hungarian_is_shift_invariant(m in matrix(5, 5), shift in -3.0..3.0f64) {
        let a = hungarian_max(&m, f64::NEG_INFINITY);
        let b = hungarian_max(&m.shifted(shift), f64::NEG_INFINITY);
        // With no floor every matching has min(R, C) pairs, so a uniform
        // shift moves every candidate total by the same amount.
        prop_assert_eq!(a.pairs, b.pairs);
    }

    #[test]
    fn floor_is_strict(m in matrix(5, 6), floor in -0.5..0.5f64) {
        let out = hungarian_max(&m, floor);
        for &(r, c) in &out.pairs {
            prop_assert!(m.get(r, c) > floor);
        }
        let rows = out.pairs.len() + out.unmatched_rows.len();
        let cols = out.pairs.len() + out.unmatched_cols.len();
        prop_assert_eq!((rows, cols), (m.rows(), m.cols()));
    }

    #[test]
    fn delta_monotone(c1 in 0.01..0.98f64, c2 in 0.01..0.98f64, step in 0.001..0.01f64) {
        let mg = UncertaintyMargins::default();
        let d = association_uncertainty(c1, c2, &mg).delta;
        prop_assert!(association_uncertainty(c1 + step, c2, &mg).delta < d);
        prop_assert!(association_uncertainty(c1, c2 + step, &mg).delta > d);
    }

    #[test]
    fn omega_permutation_and_jensen(mut deltas in prop::collection::vec(-3.0..3.0f64, 1..20), seed in any::<u64>()) {
        let omega = tracklet_uncertainty(&deltas).unwrap();
        let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
        prop_assert!(omega >= mean.exp() * (1.0 - 1e-12));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..deltas.len()).rev() {
            deltas.swap(i, rng.gen_range(0..=i));
        }
        prop_assert!((tracklet_uncertainty(&deltas).unwrap() - omega).abs() < 1e-12 * omega);
    }

    #[test]
    fn softmax_shift_invariance_and_order(scores in prop::collection::vec(-5.0..5.0f64, 1..8), shift in -10.0..10.0f64) {
        let keys: Vec<u32> = (0..scores.len() as u32).collect();
        let a = SamplingWeights::softmax(keys.clone(), &scores);
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let b = SamplingWeights::softmax(keys, &shifted);
        let total: f64 = a.candidates.iter().map(|c| c.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for (x, y) in a.candidates.iter().zip(&b.candidates) {
            prop_assert!((x.1 - y.1).abs() < 1e-12);
        }
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] > scores[j] {
                    prop_assert!(a.candidates[i].1 > a.candidates[j].1);
                }
            }
        }
    }

    #[test]
    fn info_nce_ignores_negative_order(q in unit(6), p in unit(6), negs in prop::collection::vec(unit(6), 1..6)) {
        let loss = |negatives: Vec<Vec<f64>>| info_nce(&ContrastiveBatch {
            query: q.clone(),
            positive: p.clone(),
            negatives,
            temperature: 0.2,
        });
        let mut rev = negs.clone();
        rev.reverse();
        prop_assert!((loss(negs) - loss(rev)).abs() < 1e-12);
    }
}

#[test]
fn info_nce_decreases_with_better_logits() {
    let q = vec![1.0, 0.0];
    let at = |angle: f64| vec![angle.cos(), angle.sin()];
    let loss = |pos: f64, neg: f64| {
        info_nce(&ContrastiveBatch {
            query: q.clone(),
            positive: at(pos),
            negatives: vec![at(neg), at(2.0)],
            temperature: 0.5,
        })
    };
    // Larger angle to the query means a smaller logit.
    assert!(loss(0.3, 1.5) < loss(0.6, 1.5));
    assert!(loss(0.3, 1.8) < loss(0.3, 1.5));
}

#[test]
fn sign_theorem_on_grid() {
    let mg = UncertaintyMargins::default();
    let grid: Vec<f64> = (0..200).map(|i| 0.01 + 0.98 * i as f64 / 199.0).collect();
    for &c1 in &grid {
        for &c2 in &grid {
            let d = association_uncertainty(c1, c2, &mg).delta;
            if c1 < mg.m1 && c2 > c1 - mg.m2 {
                assert!(d > 0.0, "c1={c1} c2={c2} d={d}");
            }
            if c1 >= mg.m1 && c2 <= c1 - mg.m2 {
                assert!(d <= 0.0, "c1={c1} c2={c2} d={d}");
            }
        }
    }
}

#[test]
fn clamping_is_transparent_inside_interval() {
    let mg = UncertaintyMargins::default();
    let loose = UncertaintyMargins { clamp_eps: 1e-12, ..mg };
    for &(c1, c2) in &[(0.3, 0.2), (0.9, 0.1), (0.55, 0.54)] {
        let a = association_uncertainty(c1, c2, &mg).delta;
        let b = association_uncertainty(c1, c2, &loose).delta;
        assert_eq!(a, b);
    }
}
