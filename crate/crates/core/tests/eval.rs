mod common;

use common::{confusion_oracle, random_mask, rng};
use lsg_core::eval::{
    accuracy, box_stats, ci95, confusion, region_aggregate, time_inference, Confusion, LayerScore, TimingStats,
};
use lsg_core::lattice::RegionLabel;
use lsg_core::{Error, Image, Mask};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn confusion_matches_pixel_loop() {
    for seed in 0..100 {
        let mut r = rng(seed);
        let (w, h) = (r.random_range(1..40), r.random_range(1..40));
        let pred = random_mask(&mut r, w, h);
        let truth = random_mask(&mut r, w, h);
        let c = confusion(&pred, &truth).unwrap();
        let o = confusion_oracle(&pred, &truth);
        assert_eq!(c, o, "seed {seed}");
        let want = (o.tp + o.tn) as f64 / (w * h) as f64;
        assert_eq!(accuracy(&c).unwrap(), want);
    }
}

#[test]
fn worked_accuracy() {
    let c = Confusion {
        tp: 3,
        tn: 5,
        fp: 1,
        fn_: 1,
    };
    assert_eq!(accuracy(&c).unwrap(), 0.8);
    assert!(matches!(accuracy(&Confusion::default()), Err(Error::Validation(_))));
}

#[test]
fn accuracy_ignores_a_shared_pixel_permutation() {
    for seed in 0..20 {
        let mut r = rng(500 + seed);
        let pred = random_mask(&mut r, 17, 9);
        let truth = random_mask(&mut r, 17, 9);
        let mut perm: Vec<usize> = (0..pred.len()).collect();
        perm.shuffle(&mut r);
        let shuffle = |m: &Mask| Mask::new(17, 9, perm.iter().map(|&i| m.data()[i]).collect()).unwrap();
        let a = accuracy(&confusion(&pred, &truth).unwrap()).unwrap();
        let b = accuracy(&confusion(&shuffle(&pred), &shuffle(&truth)).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn self_and_complement() {
    let mut r = rng(3);
    for _ in 0..10 {
        let m = random_mask(&mut r, 12, 12);
        assert_eq!(accuracy(&confusion(&m, &m).unwrap()).unwrap(), 1.0);
        assert_eq!(accuracy(&confusion(&m, &m.complement()).unwrap()).unwrap(), 0.0);
    }
    let small = Mask::from_fn(3, 3, |_, _| true);
    assert!(matches!(confusion(&small, &random_mask(&mut r, 4, 3)), Err(Error::Shape(_))));
}

fn score(region: RegionLabel, accuracy: f64, layer: usize) -> LayerScore {
    LayerScore {
        specimen_id: "A".into(),
        layer_index: layer,
        region,
        accuracy,
        method: "unet".into(),
        perturbation: None,
    }
}

proptest! {
    #[test]
    fn region_mean_is_filtered_arithmetic_mean(
        rows in prop::collection::vec((0u8..3, 0.0f64..1.0), 2..80)
    ) {
        let regions = [RegionLabel::Node, RegionLabel::Strut, RegionLabel::Other];
        let scores: Vec<LayerScore> = rows
            .iter()
            .enumerate()
            .map(|(i, &(r, a))| score(regions[r as usize], a, i + 1))
            .collect();
        for region in regions {
            let vals: Vec<f64> = scores.iter().filter(|s| s.region == region).map(|s| s.accuracy).collect();
            match region_aggregate(&scores, region) {
                Ok(s) => {
                    prop_assert_eq!(s.n, vals.len());
                    let want = vals.iter().sum::<f64>() / vals.len() as f64;
                    prop_assert!((s.mean - want).abs() <= 1e-12);
                    prop_assert!(s.ci95.0 <= s.mean && s.mean <= s.ci95.1);
                }
                Err(_) => prop_assert!(vals.len() < 2),
            }
        }
    }

    #[test]
    fn ci_matches_normal_approximation(vals in prop::collection::vec(-5.0f64..5.0, 2..60)) {
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let (lo, hi) = ci95(&vals).unwrap();
        prop_assert!((lo - (m - 1.96 * sd / n.sqrt())).abs() < 1e-9);
        prop_assert!((hi - (m + 1.96 * sd / n.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn box_whiskers_stay_inside_fences(vals in prop::collection::vec(-100.0f64..100.0, 1..60)) {
        let b = box_stats(&vals).unwrap();
        let iqr = b.q3 - b.q1;
        prop_assert!(b.q1 <= b.median && b.median <= b.q3);
        prop_assert!(b.whisker_low >= b.q1 - 1.5 * iqr && b.whisker_high <= b.q3 + 1.5 * iqr);
        for v in &vals {
            let inside = *v >= b.whisker_low && *v <= b.whisker_high;
            prop_assert!(inside != b.outliers.contains(v));
        }
    }
}

#[test]
fn quartile_convention() {
    let b = box_stats(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
    assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
    let flat = box_stats(&[0.7; 9]).unwrap();
    assert_eq!((flat.median, flat.outliers.len()), (0.7, 0));
    let spread = box_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
    assert_eq!(spread.outliers, vec![100.0]);
    assert_eq!(spread.whisker_high, 4.0);
}

#[test]
fn region_filter_drops_other_layers() {
    let scores = vec![
        score(RegionLabel::Node, 0.9, 1),
        score(RegionLabel::Other, 0.1, 2),
        score(RegionLabel::Node, 0.8, 3),
        score(RegionLabel::Other, 0.2, 4),
    ];
    let s = region_aggregate(&scores, RegionLabel::Node).unwrap();
    assert_eq!(s.n, 2);
    assert!((s.mean - 0.85).abs() < 1e-12);
    assert!(region_aggregate(&scores, RegionLabel::Strut).is_err());
}

#[test]
fn timing_samples_are_positive_and_bracket_the_mean() {
    let images: Vec<Image> = (0..5).map(|i| Image::filled(32, 32, 40 * i)).collect();
    let stats = time_inference(|img| Ok(Mask::from_fn(img.width(), img.height(), |x, y| img.get(x, y) > (x + y) as u8)), &images).unwrap();
    assert_eq!(stats.samples_s.len(), 5);
    assert!(stats.samples_s.iter().all(|&s| s > 0.0));
    assert!(stats.min_s <= stats.mean_s && stats.mean_s <= stats.max_s);
    assert!(!stats.hardware.is_empty());
    let again = TimingStats::from_samples(stats.samples_s.clone()).unwrap();
    assert_eq!((again.mean_s, again.median_s), (stats.mean_s, stats.median_s));
    assert!(matches!(time_inference(|_| unreachable!(), &[]), Err(Error::Validation(_))));
}
