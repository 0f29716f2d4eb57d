use adaptive_bacf::features::FeatureKind;
use adaptive_bacf::gate::{blend_features, semantic_score, update_flags};
use adaptive_bacf::nms::{assess_reliability, fast_nms_3x3, fast_nms_3x3_unpruned};
use adaptive_bacf::spectral::Fft2;
use adaptive_bacf::{DescriptorVector, FeatureTensor, GateConfig, RealGrid};
use proptest::prelude::*;

fn grid_strategy(levels: u32) -> impl Strategy<Value = RealGrid> {
    (3usize..14, 3usize..14).prop_flat_map(move |(h, w)| {
        prop::collection::vec(0..levels, h * w)
            .prop_map(move |v| RealGrid::from_vec(h, w, v.into_iter().map(f64::from).collect()).unwrap())
    })
}

fn strict_maxima(map: &RealGrid) -> Vec<(usize, usize)> {
    let (h, w) = map.shape();
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let v = map.get(r, c);
            let neighbours = (r.saturating_sub(1)..=(r + 1).min(h - 1))
                .flat_map(|rr| (c.saturating_sub(1)..=(c + 1).min(w - 1)).map(move |cc| (rr, cc)));
            if neighbours.filter(|&p| p != (r, c)).all(|(rr, cc)| v > map.get(rr, cc)) {
                out.push((r, c));
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn nms_equals_brute_force(map in prop_oneof![grid_strategy(3), grid_strategy(1000)]) {
        let peaks = fast_nms_3x3_unpruned(&map).unwrap();
        let mut found: Vec<_> = peaks.local_peaks.iter().map(|p| (p.row, p.col)).collect();
        let oracle = strict_maxima(&map);
        if !oracle.is_empty() {
            found.push((peaks.global_peak.row, peaks.global_peak.col));
        }
        found.sort_unstable();
        prop_assert_eq!(found, oracle);
        prop_assert!(peaks.comparisons_used <= 2 * map.values().len());
        prop_assert!(peaks.local_peaks.iter().all(|p| p.value <= peaks.global_peak.value));
    }

    #[test]
    fn pruning_keeps_exactly_the_large_peaks(map in grid_strategy(1000)) {
        let all = fast_nms_3x3_unpruned(&map).unwrap();
        let pruned = fast_nms_3x3(&map).unwrap();
        let g = all.global_peak.value;
        let kept: Vec<_> = all.local_peaks.iter().filter(|p| g <= 0.0 || p.value >= 0.05 * g).cloned().collect();
        prop_assert_eq!(pruned.global_peak, all.global_peak);
        prop_assert_eq!(pruned.local_peaks, kept);
    }

    #[test]
    fn verdict_is_scale_invariant(map in grid_strategy(1000), scale in 0.01f64..100.0, t in 0.05f64..=1.0) {
        let scaled = map.map(|v| v * scale);
        let a = assess_reliability(&fast_nms_3x3(&map).unwrap(), t).unwrap();
        let b = assess_reliability(&fast_nms_3x3(&scaled).unwrap(), t).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn transform_round_trip_and_parseval(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
        let mut s = seed;
        let g = RealGrid::from_fn(h, w, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        let plan = Fft2::<f64>::new(h, w);
        let spec = plan.forward(&g).unwrap();
        let back = plan.inverse_real(&spec).unwrap();
        let err = g.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12);
        let e_space: f64 = g.values().iter().map(|v| v * v).sum();
        prop_assert!((spec.energy() - e_space).abs() <= 1e-12 * e_space.max(1.0));
    }

    #[test]
    fn score_is_symmetric_bounded_and_scale_free(
        pair in (1usize..32).prop_flat_map(|n| (
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
        )),
        k in 0.001f64..1000.0,
    ) {
        let (a, b) = pair;
        let va = DescriptorVector::new(a.clone()).unwrap();
        let vb = DescriptorVector::new(b).unwrap();
        let s = semantic_score(&va, &vb).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert_eq!(s, semantic_score(&vb, &va).unwrap());
        let scaled = DescriptorVector::new(a.iter().map(|v| v * k).collect()).unwrap();
        prop_assert!((semantic_score(&scaled, &vb).unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn flags_are_monotone_in_score(a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let cfg = GateConfig::default();
        let (fl, fh) = (update_flags(lo, &cfg), update_flags(hi, &cfg));
        prop_assert!(!(fl.fc7 && !fh.fc7));
        prop_assert!(!(!fl.rejection && fh.rejection));
    }

    #[test]
    fn blending_is_linear(
        vals in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 12),
        eta in 0.0f64..=1.0,
    ) {
        let t = |f: fn(&(f64, f64, f64)) -> f64| {
            FeatureTensor::new(2, 3, 2, 1, FeatureKind::DeepSynth, vals.iter().map(f).collect()).unwrap()
        };
        let (a, b, c) = (t(|v| v.0), t(|v| v.1), t(|v| v.2));
        let sum = FeatureTensor::new(2, 3, 2, 1, FeatureKind::DeepSynth, vals.iter().map(|v| v.1 + v.2).collect()).unwrap();
        let lhs = blend_features(&a, &sum, eta).unwrap();
        let zero = FeatureTensor::new(2, 3, 2, 1, FeatureKind::DeepSynth, vec![0.0; 12]).unwrap();
        let part_b = blend_features(&a, &b, eta).unwrap();
        let part_c = blend_features(&zero, &c, eta).unwrap();
        for i in 0..12 {
            prop_assert!((lhs.values()[i] - (part_b.values()[i] + part_c.values()[i])).abs() < 1e-12);
        }
    }
}

#[test]
fn comparison_budget_holds_on_structured_maps() {
    let n = 64;
    let maps: Vec<(&str, RealGrid)> = vec![
        ("constant", RealGrid::from_fn(n, n, |_, _| 1.0)),
        ("row ramp", RealGrid::from_fn(n, n, |_, c| c as f64)),
        ("reverse ramp", RealGrid::from_fn(n, n, |_, c| -(c as f64))),
        ("column ramp", RealGrid::from_fn(n, n, |r, _| r as f64)),
        ("diagonal ramp", RealGrid::from_fn(n, n, |r, c| (r + c) as f64)),
        ("checkerboard", RealGrid::from_fn(n, n, |r, c| ((r + c) % 2) as f64)),
        ("stripes", RealGrid::from_fn(n, n, |_, c| (c % 2) as f64)),
        ("horizontal stripes", RealGrid::from_fn(n, n, |r, _| (r % 2) as f64)),
        ("dots", RealGrid::from_fn(n, n, |r, c| (r % 2 == 0 && c % 2 == 0) as u8 as f64)),
        ("zigzag", RealGrid::from_fn(n, n, |r, c| ((c % 3) as f64) + 0.1 * r as f64)),
        ("bowl", RealGrid::from_fn(n, n, |r, c| -((r as f64 - 31.5).powi(2) + (c as f64 - 31.5).powi(2)))),
    ];
    for (name, map) in maps {
        let peaks = fast_nms_3x3_unpruned(&map).unwrap();
        let mut found: Vec<_> = peaks.local_peaks.iter().map(|p| (p.row, p.col)).collect();
        let oracle = strict_maxima(&map);
        if !oracle.is_empty() {
            found.push((peaks.global_peak.row, peaks.global_peak.col));
        }
        found.sort_unstable();
        assert_eq!(found, oracle, "{name}");
        assert!(peaks.comparisons_used <= 2 * n * n, "{name}: {} comparisons", peaks.comparisons_used);
    }
}
