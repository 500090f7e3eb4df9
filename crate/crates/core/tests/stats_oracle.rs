//! Shapiro-Wilk and Dunn results against reference values computed once with
//! an established statistics package (see fixtures/stats_oracle.json).

use dschecker_core::stats::{dunn_test, shapiro_wilk};
use serde::Deserialize;

#[derive(Deserialize)]
struct Oracle {
    shapiro_wilk: Vec<SwCase>,
    dunn: Vec<DunnCase>,
}

#[derive(Deserialize)]
struct SwCase {
    name: String,
    xs: Vec<f64>,
    w: f64,
    p: f64,
}

#[derive(Deserialize)]
struct DunnCase {
    name: String,
    groups: Vec<Vec<f64>>,
    pairs: Vec<DunnRef>,
}

#[derive(Deserialize)]
struct DunnRef {
    i: usize,
    j: usize,
    p_raw: f64,
    p_adjusted: f64,
}

fn oracle() -> Oracle {
    serde_json::from_str(include_str!("fixtures/stats_oracle.json")).unwrap()
}

#[test]
fn shapiro_wilk_matches_reference() {
    for case in oracle().shapiro_wilk {
        let r = shapiro_wilk(&case.xs).unwrap();
        assert!((r.w - case.w).abs() <= 1e-6, "{}: W {} vs {}", case.name, r.w, case.w);
        assert!((r.p - case.p).abs() <= 1e-6, "{}: p {} vs {}", case.name, r.p, case.p);
    }
}

#[test]
fn dunn_matches_reference() {
    for case in oracle().dunn {
        let got = dunn_test(&case.groups).unwrap();
        assert_eq!(got.len(), case.pairs.len(), "{}", case.name);
        for (g, e) in got.iter().zip(&case.pairs) {
            assert_eq!((g.i, g.j), (e.i, e.j));
            assert!((g.p_raw - e.p_raw).abs() <= 1e-4, "{} ({},{}) raw {} vs {}", case.name, e.i, e.j, g.p_raw, e.p_raw);
            assert!(
                (g.p_adjusted - e.p_adjusted).abs() <= 1e-4,
                "{} ({},{}) adjusted {} vs {}",
                case.name, e.i, e.j, g.p_adjusted, e.p_adjusted
            );
        }
    }
}
