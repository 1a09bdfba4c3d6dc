//! Per-class precision and recall recomputed from published confusion counts.

use dbn_ids::eval::{metrics, ConfusionMatrix};
use dbn_ids::pipeline::CATEGORIES;

const MLP_COUNTS: [[u64; 6]; 6] = [
    [360810, 500, 29, 101, 7, 407],
    [6, 381, 0, 0, 0, 0],
    [4, 0, 1689, 0, 0, 0],
    [113, 0, 0, 63717, 0, 17],
    [3, 4, 1, 23, 11366, 4],
    [2, 0, 0, 2, 0, 408],
];
const MLP_RECALL: [f64; 6] = [100.0, 98.0, 100.0, 100.0, 100.0, 99.0];
const MLP_PRECISION: [f64; 6] = [100.0, 43.0, 98.0, 100.0, 100.0, 49.0];

const DBN_COUNTS: [[u64; 6]; 6] = [
    [361350, 358, 28, 52, 6, 60],
    [3, 384, 0, 0, 0, 0],
    [3, 0, 1691, 0, 0, 0],
    [119, 0, 0, 63707, 0, 21],
    [6, 4, 0, 17, 11371, 3],
    [5, 0, 0, 1, 0, 406],
];
const DBN_RECALL: [f64; 6] = [100.0, 99.0, 100.0, 100.0, 100.0, 99.0];
const DBN_PRECISION: [f64; 6] = [100.0, 51.0, 98.0, 100.0, 100.0, 83.0];

fn names() -> Vec<String> {
    CATEGORIES.iter().map(|s| s.to_string()).collect()
}

fn check(counts: &[[u64; 6]; 6], recall: &[f64; 6], precision: &[f64; 6]) {
    let rows: Vec<Vec<u64>> = counts.iter().map(|r| r.to_vec()).collect();
    let report = metrics(&ConfusionMatrix::from_rows(&rows).unwrap(), &names()).unwrap();
    for (c, m) in report.per_class.iter().enumerate() {
        assert!(
            (100.0 * m.recall - recall[c]).abs() <= 0.5,
            "{} recall {:.3}% vs printed {}%",
            CATEGORIES[c],
            100.0 * m.recall,
            recall[c]
        );
        assert!(
            (100.0 * m.precision - precision[c]).abs() <= 0.5,
            "{} precision {:.3}% vs printed {}%",
            CATEGORIES[c],
            100.0 * m.precision,
            precision[c]
        );
    }
}

#[test]
fn mlp_rows_reproduce() {
    check(&MLP_COUNTS, &MLP_RECALL, &MLP_PRECISION);
}

#[test]
fn dbn_rows_reproduce() {
    check(&DBN_COUNTS, &DBN_RECALL, &DBN_PRECISION);
}

#[test]
fn dbn_web_attack_and_botnet_precision() {
    let rows: Vec<Vec<u64>> = DBN_COUNTS.iter().map(|r| r.to_vec()).collect();
    let report = metrics(&ConfusionMatrix::from_rows(&rows).unwrap(), &names()).unwrap();
    assert!((report.per_class[5].precision - 406.0 / 490.0).abs() < 1e-12);
    assert!((report.per_class[1].precision - 384.0 / 746.0).abs() < 1e-12);
    // Macro precision lines up with the headline precision of 0.887.
    assert!((report.macro_avg.precision - 0.887).abs() < 1e-3);
}

#[test]
fn mlp_web_attack_precision() {
    let rows: Vec<Vec<u64>> = MLP_COUNTS.iter().map(|r| r.to_vec()).collect();
    let report = metrics(&ConfusionMatrix::from_rows(&rows).unwrap(), &names()).unwrap();
    assert!((report.per_class[5].precision - 408.0 / 836.0).abs() < 1e-12);
}
