mod common;

use common::{brute_ap, brute_auc, configurations};
use rand::Rng;

use tgat::training::metrics::{accuracy, average_precision, roc_auc};
use tgat::training::{metrics_from_scores, SplitTag};

#[test]
fn exhaustive_small_inputs_match_brute_force() {
    let configs = configurations(8);
    assert!(configs.len() > 10_000);
    let (mut ap_checked, mut auc_checked) = (0, 0);
    for (scores, labels) in &configs {
        let pos = labels.iter().filter(|&&l| l).count();
        if pos > 0 {
            let got = average_precision(scores, labels).unwrap();
            let want = brute_ap(scores, labels);
            assert!((got - want).abs() < 1e-12, "{scores:?} {labels:?}: {got} vs {want}");
            ap_checked += 1;
        } else {
            assert!(average_precision(scores, labels).is_err());
        }
        if pos > 0 && pos < labels.len() {
            let got = roc_auc(scores, labels).unwrap();
            let want = brute_auc(scores, labels);
            assert_eq!(got, want, "{scores:?} {labels:?}");
            auc_checked += 1;
        } else {
            assert!(roc_auc(scores, labels).is_err());
        }
    }
    assert!(ap_checked > 0 && auc_checked > 0);
}

#[test]
fn hand_computed_examples() {
    let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
    assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    // 0.9+ beats both negatives, 0.4+ beats only 0.1-: three of four pairs
    let auc = roc_auc(&[0.9, 0.1, 0.4, 0.6], &[true, false, true, false]).unwrap();
    assert_eq!(auc, 0.75);
    assert_eq!(brute_auc(&[0.9, 0.1, 0.4, 0.6], &[true, false, true, false]), 0.75);
}

#[test]
fn perfect_separation() {
    let scores = [0.9, 0.8, 0.3, 0.1];
    let labels = [true, true, false, false];
    let m = metrics_from_scores(&scores, &labels, SplitTag::Transductive).unwrap();
    assert_eq!((m.average_precision, m.accuracy, m.auc), (1.0, 1.0, Some(1.0)));
    assert_eq!(accuracy(&scores, &labels, 0.5).unwrap(), 1.0);
}

#[test]
fn null_models_sit_at_one_half() {
    for seed in 0..3 {
        let mut r = common::rng(100 + seed);
        let scores: Vec<f64> = (0..10_000).map(|_| r.random::<f64>()).collect();
        let labels: Vec<bool> = (0..10_000).map(|i| i % 2 == 0).collect();
        let ap = average_precision(&scores, &labels).unwrap();
        let auc = roc_auc(&scores, &labels).unwrap();
        assert!((ap - 0.5).abs() < 0.02, "ap {ap}");
        assert!((auc - 0.5).abs() < 0.02, "auc {auc}");
    }
}

#[test]
fn nan_scores_are_rejected() {
    assert!(average_precision(&[f64::NAN, 0.1], &[true, false]).is_err());
    assert!(roc_auc(&[0.2, f64::NAN], &[true, false]).is_err());
}
