use std::fs;

use gcl::datagen::{
    exponential_profile, generate_synthetic, load_dataset, load_dataset_with_classes, Split, SyntheticSpec,
};
use gcl::numerics::{dot, Rng};
use gcl::Error;

fn nearest_anchor_accuracy(spread: f64, seed: u64) -> f64 {
    let profile = exponential_profile(50, 1.0, 10).unwrap();
    let spec = SyntheticSpec {
        dim: 32,
        class_spread: spread,
        test_per_class: 200,
    };
    let data = generate_synthetic(&profile, &spec, &mut Rng::new(seed)).unwrap();
    let test = &data.test;
    let mut correct = 0;
    for i in 0..test.len() {
        let x = test.features().row(i);
        let best = (0..10)
            .map(|j| {
                let a = data.anchors.row(j);
                let d2: f64 = x.iter().zip(a).map(|(u, v)| (u - v) * (u - v)).sum();
                (j, d2)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        correct += usize::from(best == test.labels()[i]);
    }
    correct as f64 / test.len() as f64
}

// Independent numpy simulation of the same generator (unit anchors, isotropic
// per-coordinate noise, D = 32, C = 10) puts nearest-anchor accuracy near
// 0.995 at spread 0.2 and 0.93 at spread 0.3.
#[test]
fn nearest_anchor_oracle() {
    let low: f64 = (0..5).map(|s| nearest_anchor_accuracy(0.2, s)).sum::<f64>() / 5.0;
    let mid: f64 = (0..5).map(|s| nearest_anchor_accuracy(0.3, s)).sum::<f64>() / 5.0;
    assert!(low >= 0.95, "spread 0.2 accuracy {low}");
    assert!(mid >= 0.90, "spread 0.3 accuracy {mid}");
    assert!(mid < low);
}

#[test]
fn anchors_are_unit_norm() {
    let profile = exponential_profile(20, 2.0, 4).unwrap();
    let data = generate_synthetic(&profile, &SyntheticSpec::default(), &mut Rng::new(1)).unwrap();
    for j in 0..4 {
        let a = data.anchors.row(j);
        assert!((dot(a, a) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn generation_is_deterministic() {
    let profile = exponential_profile(30, 5.0, 3).unwrap();
    let a = generate_synthetic(&profile, &SyntheticSpec::default(), &mut Rng::new(9)).unwrap();
    let b = generate_synthetic(&profile, &SyntheticSpec::default(), &mut Rng::new(9)).unwrap();
    assert!(a.train.features().bits_eq(b.train.features()));
    assert!(a.test.features().bits_eq(b.test.features()));
    assert_eq!(a.train.labels(), b.train.labels());
}

#[test]
fn csv_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let profile = exponential_profile(40, 8.0, 5).unwrap();
    let data = generate_synthetic(&profile, &SyntheticSpec::default(), &mut Rng::new(2)).unwrap();
    let path = dir.path().join("train.csv");
    data.train.save_csv(&path).unwrap();
    let back = load_dataset(&path).unwrap();
    assert!(back.features().bits_eq(data.train.features()));
    assert_eq!(back.labels(), data.train.labels());
    assert_eq!(back.profile(), &profile);
}

#[test]
fn header_only_file_is_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    fs::write(&path, "label,x0,x1\n").unwrap();
    assert!(matches!(load_dataset(&path), Err(Error::EmptyDataset(_))));
}

#[test]
fn non_numeric_field_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "label,x0,x1\n0,1.0,2.0\n1,abc,2.0\n").unwrap();
    match load_dataset(&path) {
        Err(e @ Error::Parse { line, .. }) => {
            assert_eq!(line, 3);
            assert_eq!(e.exit_code(), 3);
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn label_outside_class_count_is_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.csv");
    fs::write(&path, "label,x0\n0,1.0\n1,2.0\n4,0.5\n").unwrap();
    match load_dataset_with_classes(&path, Some(2), Split::Test) {
        Err(Error::Schema { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn missing_file_is_io_error() {
    let err = load_dataset(std::path::Path::new("/nonexistent/gcl/train.csv")).unwrap_err();
    assert_eq!(err.exit_code(), 5);
}
