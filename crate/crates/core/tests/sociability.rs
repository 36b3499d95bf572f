use covsim::sociability::{
    aggregate, frame_pairs, pair_distance, temporal_profile, BBox, Detection, DetectionFrame, ObjectClass,
    SociabilityAccumulator,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_frame(rng: &mut impl Rng, t: i64) -> DetectionFrame {
    let n = rng.gen_range(0..=50);
    let objects = (0..n)
        .map(|_| Detection {
            class: if rng.gen_bool(0.8) {
                ObjectClass::Person
            } else {
                ObjectClass::ALL[rng.gen_range(1..ObjectClass::ALL.len())]
            },
            bbox: BBox {
                x: rng.gen_range(0.0..1920.0),
                y: rng.gen_range(0.0..1080.0),
                w: rng.gen_range(5.0..120.0),
                h: rng.gen_range(20.0..400.0),
            },
        })
        .collect();
    DetectionFrame {
        camera_id: format!("cam{}", rng.gen_range(0..3)),
        t,
        objects,
    }
}

/// Every (i, j) person pair, distance from first principles.
fn brute_force(frame: &DetectionFrame) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    let objs = &frame.objects;
    for i in 0..objs.len() {
        for j in i + 1..objs.len() {
            if objs[i].class != ObjectClass::Person || objs[j].class != ObjectClass::Person {
                continue;
            }
            let (a, b) = (objs[i].bbox, objs[j].bbox);
            let dx = (a.x + a.w / 2.0) - (b.x + b.w / 2.0);
            let dy = (a.y + a.h / 2.0) - (b.y + b.h / 2.0);
            let m_per_px = (1.70 / a.h + 1.70 / b.h) / 2.0;
            out.push((i, j, dx.hypot(dy) * m_per_px * 3.28084));
        }
    }
    out
}

#[test]
fn frame_pairs_equal_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2020);
    for k in 0..1000 {
        let f = random_frame(&mut rng, k);
        let got = frame_pairs(&f).unwrap();
        let want = brute_force(&f);
        assert_eq!(got.len(), want.len(), "frame {k}");
        for (g, (i, j, d)) in got.iter().zip(want) {
            assert_eq!((g.i, g.j), (i, j));
            assert_eq!(g.distance_ft, d, "frame {k} pair ({i}, {j})");
            assert_eq!(g.violation, d < 6.0);
        }
    }
}

#[test]
fn aggregate_equals_sequential_and_split_merges() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let frames: Vec<_> = (0..300).map(|t| random_frame(&mut rng, t)).collect();
    let mut seq = SociabilityAccumulator::new();
    for f in &frames {
        seq.add_frame(f).unwrap();
    }
    let want = seq.report().unwrap();
    let par = aggregate(&frames).unwrap();
    assert_eq!(
        (par.frames, par.total_pairs, par.total_violations, par.frames_with_pairs),
        (300, want.total_pairs, want.total_violations, want.frames_with_pairs)
    );
    assert!((par.mean_frame_safety_rate.unwrap() - want.mean_frame_safety_rate.unwrap()).abs() < 1e-12);

    for cut in [1, 17, 150, 299] {
        let (mut a, mut b) = (SociabilityAccumulator::new(), SociabilityAccumulator::new());
        frames[..cut].iter().for_each(|f| a.add_frame(f).unwrap());
        frames[cut..].iter().for_each(|f| b.add_frame(f).unwrap());
        b.merge(&a);
        let r = b.report().unwrap();
        assert_eq!(
            (r.frames, r.total_pairs, r.total_violations, r.max_pedestrian_density),
            (want.frames, want.total_pairs, want.total_violations, want.max_pedestrian_density)
        );
        assert!((r.avg_pedestrian_density - want.avg_pedestrian_density).abs() < 1e-12);
    }
}

fn two_people(t: i64, gap_px: f64) -> DetectionFrame {
    let p = |x| Detection {
        class: ObjectClass::Person,
        bbox: BBox { x, y: 0.0, w: 40.0, h: 170.0 },
    };
    DetectionFrame {
        camera_id: "c".into(),
        t,
        objects: vec![p(0.0), p(gap_px)],
    }
}

#[test]
fn pooled_safety_rate_on_constructed_stream() {
    // 170 px tall boxes: 100 px is 1 m (3.28 ft), 300 px is 3 m (9.84 ft)
    let frames: Vec<_> = (0..100)
        .map(|k| two_people(k, if k % 100 < 9 { 100.0 } else { 300.0 }))
        .collect();
    let r = aggregate(&frames).unwrap();
    assert_eq!(r.total_pairs, 100);
    assert!((r.safety_rate.unwrap() - 0.91).abs() < 1e-9);
}

#[test]
fn temporal_profile_conserves_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let frames: Vec<_> = (0..500)
        .map(|_| {
            let t = rng.gen_range(1_585_000_000..1_586_000_000);
            random_frame(&mut rng, t)
        })
        .collect();
    for tz in [-4.0, 0.0, 5.5] {
        let p = temporal_profile(&frames, tz).unwrap();
        assert_eq!(p.frames.iter().sum::<u64>(), frames.len() as u64);
        for c in ObjectClass::ALL {
            let total: u64 = frames.iter().map(|f| f.count(c)).sum();
            assert_eq!(p.totals[&c].iter().sum::<u64>(), total, "{c} tz {tz}");
            let from_means: f64 = (0..24)
                .filter_map(|h| p.mean(c, h).map(|m| m * p.frames[h] as f64))
                .sum();
            assert!((from_means - total as f64).abs() < 1e-6);
        }
    }
}

fn arb_box() -> impl Strategy<Value = BBox> {
    (0.0f64..2000.0, 0.0f64..2000.0, 1.0f64..200.0, 1.0f64..500.0).prop_map(|(x, y, w, h)| BBox { x, y, w, h })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn distance_is_scale_invariant(a in arb_box(), b in arb_box(), k in 0.1f64..10.0) {
        let s = |b: BBox| BBox { x: b.x * k, y: b.y * k, w: b.w * k, h: b.h * k };
        let d = pair_distance(&a, &b).unwrap();
        let ds = pair_distance(&s(a), &s(b)).unwrap();
        prop_assert!((d - ds).abs() <= 1e-9 * d.max(1.0));
    }

    #[test]
    fn distance_is_symmetric_and_translation_free(a in arb_box(), b in arb_box(), dx in -500.0f64..500.0) {
        let t = |b: BBox| BBox { x: b.x + dx, ..b };
        prop_assert_eq!(pair_distance(&a, &b).unwrap(), pair_distance(&b, &a).unwrap());
        let d = pair_distance(&a, &b).unwrap();
        prop_assert!((d - pair_distance(&t(a), &t(b)).unwrap()).abs() <= 1e-9 * d.max(1.0));
    }
}
