use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use tdep::coefficients::rho_alpha;
use tdep::costs::{CostSpec, Metric};
use tdep::rng::dataset_stream;
use tdep::synth::{sample_noisy, Geometry, Noise};
use tdep::tdep::{tdep, SolverChoice};

fn tdep_cmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdep")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn three_point_diagonal_has_the_closed_form_value() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "fig5.csv", "x1,y1\n1,1\n2,2\n3,3\n");
    let v = json(&tdep_cmd(&["compute", "--in", &file, "--cost", "raw", "--p", "1"]));
    assert_eq!(v["schema"], 1);
    assert!((v["value"].as_f64().unwrap() - 2.0 * (2.0 + 2f64.sqrt()) / 9.0).abs() < 1e-9);
    // The quoted 0.75874 is the closed form rounded to four places.
    assert!((v["value"].as_f64().unwrap() - 0.75874).abs() < 5e-5);
    for bound in ["bound_pi1", "bound_pi2", "bound_pi3"] {
        assert!((v[bound].as_f64().unwrap() - 8.0 / 9.0).abs() < 1e-9);
    }
}

#[test]
fn grid_shaped_product_sample_has_zero_dependency() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("x1,y1\n");
    for x in [0.0, 1.0, 2.5] {
        for y in [-1.0, 4.0] {
            body.push_str(&format!("{x},{y}\n"));
        }
    }
    let file = write(dir.path(), "product.csv", &body);
    let v = json(&tdep_cmd(&["compute", "--in", &file]));
    assert!(v["value"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn identity_sample_has_unit_isometric_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "fig5.csv", "x1,y1\n1,1\n2,2\n3,3\n");
    let v = json(&tdep_cmd(&["corr", "--in", &file, "--coeff", "rho_star"]));
    assert_eq!(v["kind"], "rho_star");
    assert!((v["value"].as_f64().unwrap() - 1.0).abs() <= 1e-7);
    for key in ["kind", "value", "n", "p", "alpha", "solver", "tau", "diam_y", "diam_x"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    assert_eq!(tdep_cmd(&["compute", "--in", missing.to_str().unwrap()]).status.code(), Some(2));
    let bad = write(dir.path(), "bad.csv", "x1,y1\n1,a\n");
    assert_eq!(tdep_cmd(&["compute", "--in", &bad]).status.code(), Some(2));
    assert_eq!(tdep_cmd(&["compute", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(tdep_cmd(&["synth", "--n", "5"]).status.code(), Some(1), "randomized commands need a seed");
    assert_eq!(tdep_cmd(&["corr", "--in", &bad, "--coeff", "rho_alpha"]).status.code(), Some(1));
    let flat = write(dir.path(), "flat.csv", "x1,y1\n1,2\n3,2\n");
    assert_eq!(tdep_cmd(&["corr", "--in", &flat, "--coeff", "rho_star"]).status.code(), Some(2));
}

#[test]
fn synthesized_samples_round_trip_through_compute() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zigzag.csv");
    let out = tdep_cmd(&[
        "synth", "--geometry", "zigzag", "--segments", "8", "--n", "40", "--seed", "11", "--epsilon", "0.2", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("x1,y1\n"));
    assert_eq!(text.lines().count(), 41);

    let v = json(&tdep_cmd(&["compute", "--in", path.to_str().unwrap(), "--cost", "raw", "--p", "2", "--solver", "exact"]));
    let gamma = sample_noisy(&Geometry::Zigzag { segments: 8 }, Noise::Contamination(0.2), 40, &mut dataset_stream(11, 0)).unwrap();
    let direct = tdep(&gamma, &CostSpec::raw(Metric::Euclidean, 2.0), SolverChoice::Exact).unwrap();
    assert_eq!(v["value"].as_f64().unwrap().to_bits(), direct.value.to_bits());

    // The generator flags on compute draw the same sample.
    let generated = json(&tdep_cmd(&[
        "compute", "--geometry", "zigzag", "--segments", "8", "--n", "40", "--seed", "11", "--epsilon", "0.2", "--cost",
        "raw", "--p", "2", "--solver", "exact",
    ]));
    assert_eq!(generated["value"], v["value"]);
}

#[test]
fn noiseless_zigzag_reaches_unit_correlation() {
    let v = json(&tdep_cmd(&[
        "corr", "--geometry", "zigzag", "--segments", "3", "--n", "30", "--seed", "2", "--coeff", "rho_alpha", "--alpha", "3",
    ]));
    assert!((v["value"].as_f64().unwrap() - 1.0).abs() <= 1e-7);
    let gamma = sample_noisy(&Geometry::Zigzag { segments: 3 }, Noise::None, 30, &mut dataset_stream(2, 0)).unwrap();
    assert_eq!(v["value"].as_f64().unwrap(), rho_alpha(&gamma, 3.0, 1.0, SolverChoice::Auto).unwrap());
}

#[test]
fn permutation_test_is_reproducible() {
    let args = ["test", "--geometry", "identity", "--n", "20", "--seed", "5", "--coeff", "pearson", "--m", "9", "--k", "0"];
    let (a, b) = (json(&tdep_cmd(&args)), json(&tdep_cmd(&args)));
    assert_eq!(a, b);
    assert_eq!(a["reject"], true);
    assert_eq!(a["perm_statistics"].as_array().unwrap().len(), 9);
    assert!((a["nominal_level"].as_f64().unwrap() - 0.1).abs() < 1e-15);
}

#[test]
fn power_and_gauss_emit_csv() {
    let out = tdep_cmd(&[
        "power", "--geometry", "identity", "--n", "15", "--runs", "6", "--epsilon-grid", "0,1", "--coeff", "spearman", "--m",
        "9", "--k", "0", "--seed", "1",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epsilon,power");
    assert_eq!(lines[1], "0,1");
    assert_eq!(lines.len(), 3);

    let out = tdep_cmd(&["gauss", "--rho-grid", "0:1:0.01"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rho2,tdep,marginal_tdep,dcov2,mi");
    assert_eq!(lines.len(), 102);
    assert_eq!(lines[1], "0,0,0,0,0");
    let last: Vec<f64> = lines[101].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 1.0);
    assert!((last[1] - (4.0 - 2.0 * 2f64.sqrt())).abs() < 1e-12);
    assert!(last[4].is_infinite());
}

#[test]
fn thread_count_does_not_change_results() {
    let args = [
        "power", "--geometry", "sine", "--n", "15", "--runs", "8", "--epsilon-grid", "0.5", "--coeff", "dcor", "--m", "9",
        "--k", "1", "--seed", "4",
    ];
    let run = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_tdep")).args(args).env("TDEP_THREADS", threads).output().unwrap();
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run("1"), run("3"));
    let bad = Command::new(env!("CARGO_BIN_EXE_tdep")).args(args).env("TDEP_THREADS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
