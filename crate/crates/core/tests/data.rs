use std::fs;

use splk_core::data::{load_csv, mse, split, Dataset, TargetColumn};
use splk_core::GpError;

#[test]
fn three_column_file_with_trailing_blank_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    fs::write(&path, "a,b,target\n0.5,1,2.5\n1.5,2,3.5\n\n").unwrap();
    let by_name = load_csv(&path, &TargetColumn::Name("target".into()), true).unwrap();
    assert_eq!(by_name.len(), 2);
    assert_eq!(by_name.dim(), 2);
    assert_eq!(by_name.row(1), vec![1.5, 2.0]);
    assert_eq!(by_name.targets.as_slice(), &[2.5, 3.5]);

    let first = load_csv(&path, &TargetColumn::Index(0), true).unwrap();
    assert_eq!(first.row(0), vec![1.0, 2.5]);
    assert_eq!(first.targets.as_slice(), &[0.5, 1.5]);
}

#[test]
fn save_then_load_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("round.csv");
    let rows = vec![vec![0.1, 1e-300, -3.25], vec![std::f64::consts::PI, 2.0f64.sqrt(), 7.0]];
    let data = Dataset::from_rows(&rows, &[1.0 / 3.0, -0.0]).unwrap();
    data.save_csv(&path, true).unwrap();
    let back = load_csv(&path, &TargetColumn::Index(3), true).unwrap();
    assert_eq!(back.inputs, data.inputs);
    for (a, b) in back.targets.iter().zip(data.targets.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn split_is_a_disjoint_cover() {
    let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
    let y: Vec<f64> = (0..100).map(|i| i as f64).collect();
    let data = Dataset::from_rows(&rows, &y).unwrap();
    let (train, test) = split(&data, 0.9, 11).unwrap();
    assert_eq!((train.len(), test.len()), (90, 10));
    let mut all: Vec<f64> = train.targets.iter().chain(test.targets.iter()).copied().collect();
    all.sort_by(f64::total_cmp);
    assert_eq!(all, y);
}

#[test]
fn malformed_numbers_name_their_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "x,y\n1,2\n3,oops\n").unwrap();
    match load_csv(&path, &TargetColumn::Index(1), true) {
        // Rows count from 1 including the header, columns from 0.
        Err(GpError::Parse { row, column, .. }) => assert_eq!((row, column), (3, 1)),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn mse_of_hand_example() {
    assert_eq!(mse(&[1.0, 2.0], &[3.0, 0.0]).unwrap(), 4.0);
}
