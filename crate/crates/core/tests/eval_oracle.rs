//! Metric correctness against an independent brute-force oracle, plus the
//! aggregation identities of full-split evaluation.

mod common;

use miml_core::data::{generate_synthetic, Split, SynthSpec};
use miml_core::eval::{
    class_prf, evaluate, instrument_metrics, ConfusionCounts, MetricClass, Prf,
};
use miml_core::model::{ModelDims, ModelKind};
use miml_core::rng::RngStream;
use proptest::prelude::*;

/// Independent oracle: recounts the confusion matrix with plain filters and
/// recomputes all nine metrics from scratch. Only the closed-form ratio
/// expressions are shared with the implementation (identical integer counts
/// pushed through the same closed form are bit-equal by construction); the
/// counting, masking, and aggregation paths are fully independent.
fn brute_force(entries: &[(bool, bool, bool)]) -> (Prf, Prf, Prf) {
    let obs: Vec<&(bool, bool, bool)> = entries.iter().filter(|(_, _, m)| *m).collect();
    let count = |t: bool, p: bool| -> u64 {
        obs.iter().filter(|(tt, pp, _)| *tt == t && *pp == p).count() as u64
    };
    let tp = count(true, true);
    let fp = count(false, true);
    let tn = count(false, false);
    let fneg = count(true, false);

    let div = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let f1_of = |p: f64, r: f64| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };

    let pp = div(tp, tp + fp);
    let pr = div(tp, tp + fneg);
    let pos = Prf { precision: pp, recall: pr, f1: f1_of(pp, pr) };
    let np = div(tn, tn + fneg);
    let nr = div(tn, tn + fp);
    let neg = Prf { precision: np, recall: nr, f1: f1_of(np, nr) };
    let inst = Prf {
        precision: (pos.precision + neg.precision) / 2.0,
        recall: (pos.recall + neg.recall) / 2.0,
        f1: (pos.f1 + neg.f1) / 2.0,
    };
    (pos, neg, inst)
}

fn library_metrics(entries: &[(bool, bool, bool)]) -> (Prf, Prf, Prf) {
    let mut counts = ConfusionCounts::default();
    for &(truth, pred, mask) in entries {
        if mask {
            counts.record(truth, pred);
        }
    }
    (
        class_prf(&counts, MetricClass::Positive),
        class_prf(&counts, MetricClass::Negative),
        instrument_metrics(&counts),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// Library metrics equal the brute-force oracle exactly (bitwise) on
    /// random (truth, prediction, observed) sets.
    #[test]
    fn metrics_equal_brute_force(entries in proptest::collection::vec(
        (any::<bool>(), any::<bool>(), any::<bool>()), 0..60)) {
        let (pos, neg, inst) = library_metrics(&entries);
        let (opos, oneg, oinst) = brute_force(&entries);
        prop_assert_eq!(pos, opos);
        prop_assert_eq!(neg, oneg);
        prop_assert_eq!(inst, oinst);
        // All metrics live in [0, 1]; F1 = 0 whenever P = R = 0.
        for m in [pos, neg, inst] {
            prop_assert!((0.0..=1.0).contains(&m.precision));
            prop_assert!((0.0..=1.0).contains(&m.recall));
            prop_assert!((0.0..=1.0).contains(&m.f1));
            if m.precision == 0.0 && m.recall == 0.0 {
                prop_assert_eq!(m.f1, 0.0);
            }
        }
    }
}

fn test_dataset(seed: u64) -> miml_core::data::Dataset {
    let spec = SynthSpec {
        n_bags: 60,
        n_labels: 4,
        bag_size: 5,
        feature_dim: 8,
        positives_per_bag: (1, 2),
        observe_rate: 0.8,
        noise_scale: 0.05,
        seed,
        test_fraction: 0.5,
    };
    generate_synthetic(&spec).unwrap().0
}

/// evaluate() agrees exactly with a brute-force recount over the model's
/// own eval-mode scores, bag by bag.
#[test]
fn evaluate_matches_brute_force_recount() {
    let ds = test_dataset(3);
    let params = common::init_model(
        ModelKind::Att,
        ModelDims {
            feature_dim: 8,
            n_labels: 4,
            bag_size: 5,
        },
        0.6,
        9,
    );
    let report = evaluate(&params, &ds, Split::Test, 0.5, 9).unwrap();

    for (l, lab_report) in report.labels.iter().enumerate() {
        // Independent path: score each test bag alone, threshold, recount.
        let mut entries = Vec::new();
        for &i in &ds.indices_of(Split::Test) {
            let bag = &ds.bags()[i];
            let x = miml_core::tensor::Tensor::from_vec(
                &[1, 5, 8],
                bag.features.data().to_vec(),
            )
            .unwrap();
            let s = params.forward_eval(&x).unwrap().bag_scores.at2(0, l);
            entries.push((bag.labels[l], s > 0.5, bag.mask[l]));
        }
        let (pos, neg, inst) = brute_force(&entries);
        assert_eq!(lab_report.positive, pos, "label {l} positive");
        assert_eq!(lab_report.negative, neg, "label {l} negative");
        assert_eq!(lab_report.instrument, inst, "label {l} instrument");
    }
}

/// Overall metrics are the unweighted mean of per-label instrument metrics.
#[test]
fn overall_is_mean_of_instrument_metrics() {
    let ds = test_dataset(5);
    let params = common::init_model(
        ModelKind::FcT,
        ModelDims {
            feature_dim: 8,
            n_labels: 4,
            bag_size: 5,
        },
        0.6,
        2,
    );
    let report = evaluate(&params, &ds, Split::Test, 0.5, 2).unwrap();
    let n = report.labels.len() as f64;
    let mean_f1 = report.labels.iter().map(|l| l.instrument.f1).sum::<f64>() / n;
    let mean_p = report
        .labels
        .iter()
        .map(|l| l.instrument.precision)
        .sum::<f64>()
        / n;
    assert!((report.overall.f1 - mean_f1).abs() < 1e-12);
    assert!((report.overall.precision - mean_p).abs() < 1e-12);
}

/// A constant-0.5 scorer predicts all negative under the strict threshold:
/// negative recall 1, positive recall 0 for every observed label.
#[test]
fn constant_half_scores_predict_all_negative() {
    let ds = test_dataset(7);
    // Zero network with identity normalization scores exactly 0.5.
    let mut params = common::init_model(
        ModelKind::Att,
        ModelDims {
            feature_dim: 8,
            n_labels: 4,
            bag_size: 5,
        },
        0.6,
        1,
    );
    for (name, t) in params.learnable_mut().iter_mut() {
        let fill = if name.ends_with(".gamma") { 1.0 } else { 0.0 };
        for v in t.data_mut() {
            *v = fill;
        }
    }
    let report = evaluate(&params, &ds, Split::Test, 0.5, 1).unwrap();
    for lab in &report.labels {
        assert_eq!(lab.counts.true_pos + lab.counts.false_pos, 0, "{}", lab.label);
        if lab.counts.true_neg + lab.counts.false_pos > 0 {
            assert_eq!(lab.negative.recall, 1.0);
        }
        if lab.counts.true_pos + lab.counts.false_neg > 0 {
            assert_eq!(lab.positive.recall, 0.0);
        }
    }
}

/// Evaluation is a pure function of (checkpoint, dataset, threshold).
#[test]
fn evaluation_is_deterministic() {
    let ds = test_dataset(11);
    let params = common::init_model(
        ModelKind::Att,
        ModelDims {
            feature_dim: 8,
            n_labels: 4,
            bag_size: 5,
        },
        0.6,
        4,
    );
    let a = evaluate(&params, &ds, Split::Test, 0.5, 4).unwrap();
    let b = evaluate(&params, &ds, Split::Test, 0.5, 4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_split_rejected() {
    let spec = SynthSpec {
        n_bags: 10,
        n_labels: 2,
        bag_size: 3,
        feature_dim: 4,
        positives_per_bag: (1, 1),
        observe_rate: 1.0,
        noise_scale: 0.05,
        seed: 2,
        test_fraction: 0.0,
    };
    let (ds, _) = generate_synthetic(&spec).unwrap();
    let params = common::init_model(
        ModelKind::Att,
        ModelDims {
            feature_dim: 4,
            n_labels: 2,
            bag_size: 3,
        },
        0.6,
        1,
    );
    assert!(evaluate(&params, &ds, Split::Test, 0.5, 1).is_err());
}

/// Report CSV round-trip: write, read back, aggregate.
#[test]
fn report_csv_roundtrip_and_aggregate() {
    use miml_core::eval::{aggregate_seeds, read_report_csv, write_report_csv};
    let ds = test_dataset(13);
    let dims = ModelDims {
        feature_dim: 8,
        n_labels: 4,
        bag_size: 5,
    };
    let dir = tempfile::tempdir().unwrap();
    let mut parsed = Vec::new();
    for seed in 0..3 {
        let params = common::init_model(ModelKind::Att, dims, 0.6, seed);
        let report = evaluate(&params, &ds, Split::Test, 0.5, seed).unwrap();
        let path = dir.path().join(format!("eval_{seed}.csv"));
        write_report_csv(&report, &path).unwrap();
        let back = read_report_csv(&path).unwrap();
        assert_eq!(back.seed, seed);
        assert_eq!(back.overall.f1, report.overall.f1);
        assert_eq!(back.labels.len(), 4);
        parsed.push(back);
    }
    let rows = aggregate_seeds(&parsed).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.min <= r.median && r.median <= r.max));
}

/// Seeded RNG sanity for the suite: a dataset regenerates identically.
#[test]
fn dataset_regeneration_is_stable() {
    let a = test_dataset(21);
    let b = test_dataset(21);
    assert_eq!(a, b);
    let _ = RngStream::from_seed(0);
}
