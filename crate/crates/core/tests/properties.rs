use std::collections::BTreeSet;

use proptest::prelude::*;

use mtof::data_model::{
    code_from_confidence, decode_tof_pixel, encode_tof_pixel, rotate90, Label, PairSample, Split, SplitRatios, ToFMap,
};
use mtof::evaluation::{auroc, display_ids, partition, ProtocolMode, ScoredSample};
use mtof::spectrum::{dft2_magnitude, power_spectrum_1d};
use mtof::synth_gen::{gen_samples, SynthConfig};

fn map_strategy() -> impl Strategy<Value = ToFMap> {
    (2usize..24, 2usize..24).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..1.0, w * h).prop_map(move |values| ToFMap {
            width: w,
            height: h,
            values,
        })
    })
}

fn scored(scores: &[(f64, bool)]) -> Vec<ScoredSample> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &(score, display))| {
            let label = if display { Label::Display } else { Label::Real };
            ScoredSample {
                sample_id: format!("{i:03}"),
                label,
                score,
                predicted: label,
                display_id: String::new(),
                display_type: String::new(),
                device_type: String::new(),
            }
        })
        .collect()
}

fn both_classes() -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec((0u8..=20, any::<bool>()), 2..40).prop_map(|mut v| {
        v[0].1 = true;
        v[1].1 = false;
        v.into_iter().map(|(s, d)| (f64::from(s) / 20.0, d)).collect()
    })
}

fn split_samples() -> Vec<PairSample> {
    let mut cfg = SynthConfig::desk(2, 3, 5, (8, 8), 21);
    cfg.split = SplitRatios {
        train: 0.5,
        val: 0.0,
        test: 0.5,
    };
    gen_samples(&cfg).unwrap()
}

proptest! {
    #[test]
    fn tof_word_fields_survive_encoding(depth in 0u16..8192, code in 0u8..8) {
        let word = encode_tof_pixel(depth, code);
        let (d, c) = decode_tof_pixel(word);
        prop_assert_eq!(d, depth);
        prop_assert_eq!(code_from_confidence(c), code);
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn profile_length_is_half_the_short_side(map in map_strategy()) {
        let p = power_spectrum_1d(&map).unwrap();
        prop_assert_eq!(p.values.len(), map.width.min(map.height) / 2);
        prop_assert!(p.values.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn parseval_holds(map in map_strategy()) {
        let spec = dft2_magnitude(&map).unwrap();
        let energy: f64 = map.values.iter().map(|v| v * v).sum();
        let spectral: f64 = spec.magnitude.iter().map(|m| m * m).sum();
        let n = (map.width * map.height) as f64;
        prop_assert!((spectral - n * energy).abs() <= 1e-6 * (n * energy).max(1e-300));
    }

    #[test]
    fn half_turn_keeps_the_profile(map in map_strategy()) {
        let a = power_spectrum_1d(&map).unwrap().values;
        let b = power_spectrum_1d(&rotate90(&map, 2)).unwrap().values;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y);
        }
    }

    #[test]
    fn auroc_complements_under_score_reversal(v in both_classes()) {
        let a = auroc(&scored(&v)).unwrap();
        let flipped: Vec<(f64, bool)> = v.iter().map(|&(s, d)| (1.0 - s, d)).collect();
        let b = auroc(&scored(&flipped)).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
        let squared: Vec<(f64, bool)> = v.iter().map(|&(s, d)| (s * s, d)).collect();
        prop_assert_eq!(a, auroc(&scored(&squared)).unwrap());
    }

    #[test]
    fn unseen_partitions_never_share_displays(
        mask in 1u8..31,
        splits in prop::collection::vec(any::<bool>(), 36),
    ) {
        let mut samples = split_samples();
        for (s, &train) in samples.iter_mut().zip(&splits) {
            s.meta.split = Some(if train { Split::Train } else { Split::Test });
        }
        let all: Vec<String> = display_ids(&samples).into_iter().collect();
        let train: BTreeSet<String> = all.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, d)| d.clone()).collect();
        if let Ok(p) = partition(&samples, &train, ProtocolMode::Unseen, None) {
            for &i in &p.test {
                let s = &samples[i];
                prop_assert_eq!(s.meta.split, Some(Split::Test));
                prop_assert!(s.label() == Label::Real || !train.contains(&s.meta.display_id));
            }
            for &i in &p.train {
                let s = &samples[i];
                prop_assert_eq!(s.meta.split, Some(Split::Train));
                prop_assert!(s.label() == Label::Real || train.contains(&s.meta.display_id));
            }
        }
    }
}
