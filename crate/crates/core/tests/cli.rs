//! The command-line front end, driven in-process.

mod common;

use serde_json::{json, Value};
use symdyn::cli::run;
use symdyn::model::parse_model_str;

const MODEL: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/models/bernoulli.json");

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("symdyn").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn with_model<'a>(rest: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["--model", MODEL];
    v.extend_from_slice(rest);
    v
}

#[test]
fn spectrum_grid_gives_one_row_per_level() {
    let (code, out, err) = invoke(&with_model(&["spectrum", "--potential", "phi", "--levels", "0.05:0.95:19"]));
    assert_eq!(code, 0, "{err}");
    let mut lines = out.lines();
    let header = lines.next().unwrap();
    let width = header.split(',').count();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 19);
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells.len(), width);
        let a = 0.05 + 0.05 * i as f64;
        assert!((cells[0] - a).abs() < 1e-9);
        assert!((cells[1] - common::binary_entropy(a)).abs() < 1e-6, "row {row}");
    }
}

#[test]
fn same_seed_gives_identical_bytes() {
    let cases: [&[&str]; 2] = [
        &["realize", "--potential", "phi", "--level", "0.4", "--entropy", "0.3"],
        &["horseshoe", "--measure", "fair", "--measure", "biased", "--eta", "0.2", "--zeta", "0.2"],
    ];
    for case in cases {
        let mut args = with_model(case);
        args.extend(["--seed", "7"]);
        let first = invoke(&args);
        let second = invoke(&args);
        assert_eq!(first.0, 0, "{}", first.2);
        assert_eq!(first, second);
    }
}

#[test]
fn realized_measure_reloads_and_meets_its_target() {
    let (code, out, err) =
        invoke(&with_model(&["realize", "--potential", "phi", "--level", "0.5", "--entropy", "0.2"]));
    assert_eq!(code, 0, "{err}");
    let doc: Value = serde_json::from_str(&out).unwrap();
    let spec = doc["measure"].clone();
    let file = json!({ "sft": { "full": 2 }, "measures": { "nu": spec } });
    let model = parse_model_str(&file.to_string()).unwrap();
    model.measure("nu").unwrap();

    let order = spec["order"].as_u64().unwrap() as usize;
    let rows: Vec<Vec<f64>> = serde_json::from_value(spec["rows"].clone()).unwrap();
    let value = |s: usize| s as f64;
    let facts = common::full_shift_chain(2, order, &rows, &[&value]);
    assert!(facts.irreducible_support);
    assert!((facts.averages[0] - 0.5).abs() < 1e-6, "level {}", facts.averages[0]);
    assert!((facts.entropy - 0.2).abs() < 1e-3, "entropy {}", facts.entropy);
}

#[test]
fn usage_errors_exit_with_two() {
    let (code, out, _) = invoke(&["spectrum"]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    let (code, _, _) = invoke(&with_model(&["pressure", "--potential", "phi", "--no-such-flag"]));
    assert_eq!(code, 2);
}

#[test]
fn domain_errors_exit_with_one_and_json() {
    let (code, out, err) =
        invoke(&with_model(&["realize", "--potential", "phi", "--level", "3", "--entropy", "0.2"]));
    assert_eq!(code, 1);
    assert!(out.is_empty());
    let doc: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(doc["error"], "NotInterior");

    let (code, _, err) = invoke(&with_model(&["pressure", "--potential", "missing"]));
    assert_eq!(code, 1);
    let doc: Value = serde_json::from_str(err.trim()).unwrap();
    assert!(doc["message"].as_str().unwrap().contains("missing"));
}

#[test]
fn pressure_curve_is_numeric_csv() {
    let (code, out, err) = invoke(&with_model(&["pressure", "--potential", "phi", "--grid-q", "-2:2:5"]));
    assert_eq!(code, 0, "{err}");
    let rows: Vec<Vec<f64>> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    for r in rows {
        // full 2-shift: P(q) = ln(1 + e^q)
        assert!((r[1] - (1.0 + r[0].exp()).ln()).abs() < 1e-8, "{r:?}");
    }
}
