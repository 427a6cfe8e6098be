use proptest::prelude::*;
use tempfile::TempDir;
use uosr::synth::{gen_bundle, BundleSpec};
use uosr::tensorio::{
    decode_labels, decode_matrix, encode_labels, encode_matrix, load_labels, load_matrix, matrix_to_csv, write_matrix, EvaluationBundle,
    FeatureMatrix, Format, LabelVector,
};
use uosr::Error;

#[test]
fn bundle_save_load_round_trip() {
    let dir = TempDir::new().unwrap();
    let b = gen_bundle(&BundleSpec::fewshot_demo(), 1).unwrap();
    let written = b.save(dir.path()).unwrap();
    assert_eq!(written.len(), 8);
    let back = EvaluationBundle::load_dir(dir.path()).unwrap();
    assert_eq!(back, b);
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().all(|n| n.ends_with(".bin")), "{names:?}");
}

#[test]
fn csv_and_binary_agree() {
    let dir = TempDir::new().unwrap();
    let m = FeatureMatrix::from_rows(&[[1.5, -2.0, 0.25], [3.0, 4.0, 1e-7]]).unwrap();
    let csv = dir.path().join("m.csv");
    std::fs::write(&csv, matrix_to_csv(&m)).unwrap();
    let bin = dir.path().join("m.bin");
    write_matrix(&m, &bin).unwrap();
    assert_eq!(load_matrix(&csv, Format::from_path(&csv)).unwrap(), m);
    assert_eq!(load_matrix(&bin, Format::from_path(&bin)).unwrap(), m);
}

#[test]
fn truncated_and_foreign_files_rejected() {
    let m = FeatureMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
    let bytes = encode_matrix(&m);
    assert!(decode_matrix(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_matrix(&bad).is_err());
    // dtype mismatch
    assert!(decode_labels(&bytes).is_err());
}

#[test]
fn missing_file_is_io() {
    let dir = TempDir::new().unwrap();
    let err = load_labels(dir.path().join("none.bin"), Format::Binary).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
    assert_eq!(err.exit_code(), 1);
}

proptest! {
    #[test]
    fn matrix_binary_round_trip(rows in 1usize..8, cols in 1usize..8, seed in prop::collection::vec(-1e6f32..1e6, 64)) {
        let data: Vec<f32> = (0..rows * cols).map(|i| seed[i % seed.len()]).collect();
        let m = FeatureMatrix::new(rows, cols, data).unwrap();
        prop_assert_eq!(decode_matrix(&encode_matrix(&m)).unwrap(), m);
    }

    #[test]
    fn labels_binary_round_trip(v in prop::collection::vec(any::<i64>(), 0..50)) {
        let l = LabelVector::new(v);
        prop_assert_eq!(decode_labels(&encode_labels(&l)).unwrap(), l);
    }
}
