#![allow(dead_code)]

use std::path::PathBuf;

use rdnflow::ingest::{parse_named, validate_radial, RawTable, TableFormat};
use rdnflow::model::{NetworkModel, PerUnitBase, Phasor};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn table(name: &str) -> RawTable {
    let path = fixture(name);
    let text = std::fs::read_to_string(&path).unwrap();
    parse_named(&text, TableFormat::from_path(&path), name).unwrap()
}

pub fn network(name: &str) -> NetworkModel {
    validate_radial(&table(name), 1, PerUnitBase::default()).unwrap()
}

/// `(node, |V|)` pairs of the bundled 69-bus voltage table.
pub fn golden_69() -> Vec<(usize, f64)> {
    let text = std::fs::read_to_string(fixture("ieee69_golden.csv")).unwrap();
    rdnflow::cli::parse_golden(&text).unwrap()
}

pub fn max_abs_diff(a: &[Phasor], b: &[Phasor]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.re - y.re).abs().max((x.im - y.im).abs()))
        .fold(0.0, f64::max)
}

/// Sending-node column scan: nodes that receive but never send.
pub fn leaves_by_column_scan(t: &RawTable) -> Vec<usize> {
    let closed: Vec<_> = t.rows.iter().filter(|r| !r.is_tie).collect();
    let mut leaves: Vec<usize> = closed
        .iter()
        .map(|r| r.receiving_node)
        .filter(|&k| closed.iter().all(|r| r.sending_node != k))
        .collect();
    leaves.sort_unstable();
    leaves
}
