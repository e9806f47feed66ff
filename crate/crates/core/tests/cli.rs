use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use srblab::cli::RunConfig;

fn srblab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srblab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of a CSV written by the tool (provenance and header skipped).
fn rows(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# {"));
    text.lines()
        .skip(2)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            for (k, v) in files(&p) {
                out.insert(format!("{}/{k}", p.file_name().unwrap().to_string_lossy()), v);
            }
        } else {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
        }
    }
    out
}

#[test]
fn constant_field_moves_linearly() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let o = srblab(&["simulate", "--system", "constant", "--set", "x0=[0.0, 0.0, 0.0]", "--set", "simulate.horizon=1", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&d.path().join("trajectory.csv"));
    assert_eq!(r.len(), 101);
    for row in &r {
        assert!((row[1] - row[0]).abs() < 1e-12);
        assert_eq!(row[4], 1.0);
    }
}

#[test]
fn saddle_matches_matrix_exponential() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let o = srblab(&["simulate", "--system", "saddle(1,2,3)", "--set", "x0=[0.5, 1.0, -1.0]", "--set", "simulate.horizon=2", "--out", out]);
    assert_eq!(code(&o), 0);
    for row in rows(&d.path().join("trajectory.csv")) {
        let t = row[0];
        let exact = [0.5 * t.exp(), (-2.0 * t).exp(), -(-3.0 * t).exp()];
        for k in 0..3 {
            assert!((row[k + 1] - exact[k]).abs() < 1e-7, "t {t}");
        }
    }
}

#[test]
fn unknown_system_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let o = srblab(&["simulate", "--system", "lorentz", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("registry") && err.contains("lorenz"), "{err}");
}

#[test]
fn ensembles_need_a_seed_and_configs_reject_unknown_keys() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    assert_eq!(code(&srblab(&["criteria", "--which", "nue", "--out", out])), 2);
    assert_eq!(code(&srblab(&["srb", "--out", out])), 2);
    let cfg = d.path().join("run.toml");
    std::fs::write(&cfg, "system = \"lorenz\"\n[nue]\nc_0 = 0.1\n").unwrap();
    assert_eq!(code(&srblab(&["criteria", "--which", "nue", "--seed", "1", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&srblab(&["criteria", "--which", "bogus"])), 2);
}

#[test]
fn nue_on_constant_field_fails() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let o = srblab(&["criteria", "--which", "nue", "--system", "constant", "--seed", "4", "--set", "ensemble.count=3", "--set", "nue.n=100", "--out", out]);
    assert_eq!(code(&o), 1);
    let r = json(&d.path().join("report_nue.json"));
    assert_eq!(r["pass_fraction"], 0.0);
    assert_eq!(r["seed"], 4);
    assert_eq!(r["provenance"]["tool"], "srblab");
    let running = rows(&d.path().join("running_nue.csv"));
    assert_eq!(running.len(), 100);
    assert_eq!(running[0].len(), 4);
}

#[test]
fn identity_on_linear_system() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let o = srblab(&[
        "criteria", "--which", "identity", "--system", "linear(0.2,1,0,0,-0.1,0,0,0,0.5)",
        "--set", "x0=[1.0, 0.0, 1.0]", "--set", "identity.n=20", "--set", "trace.warm=0", "--out", out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&d.path().join("identity.json"));
    assert!(r["residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn recurrence_without_equilibria_is_vacuous() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let o = srblab(&["criteria", "--which", "sr", "--system", "constant", "--seed", "2", "--set", "ensemble.count=2", "--set", "sr.horizon=5", "--out", out]);
    assert_eq!(code(&o), 0);
    let r = json(&d.path().join("report_sr.json"));
    assert_eq!(r["pass_fraction"], 1.0);
    assert!(r["notes"][0].as_str().unwrap().contains("vacuous"));
    let o = srblab(&["report", "--out", out]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("sr"));
    assert_eq!(json(&d.path().join("summary.json"))["reports"].as_array().unwrap().len(), 1);
}

#[test]
fn pliss_and_splitting_write_their_outputs() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let o = srblab(&["pliss", "--seed", "3", "--set", "pliss.n=300", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = rows(&d.path().join("trace.csv"));
    assert_eq!(trace.len(), 300);
    assert_eq!(trace[0].len(), 5);
    let h = json(&d.path().join("hyperbolic_times.json"));
    assert_eq!(h["N"], 300);
    assert!(!h["indices"].as_array().unwrap().is_empty());

    let o = srblab(&["splitting", "--seed", "3", "--out", out]);
    assert_eq!(code(&o), 0);
    let s = json(&d.path().join("splitting.json"));
    assert_eq!(s["d_cu"], 2);
    assert!(s["estimate"]["residual"].as_f64().unwrap() < 1e-3);
}

fn srb_args<'a>(out: &'a str, threads: &'a str) -> Vec<&'a str> {
    vec![
        "srb", "--seed", "11", "--threads", threads, "--out", out,
        "--set", "srb.orbits=4", "--set", "srb.horizon=300", "--set", "srb.grid=32",
        "--set", "srb.basin_count=6", "--set", "srb.basin_horizon=200",
        "--set", "srb.pushforward.enabled=true", "--set", "srb.pushforward.per_axis=4",
        "--set", "srb.pushforward.n_max=40", "--set", "srb.pushforward.reference_horizon=400",
    ]
}

#[test]
fn srb_pipeline_is_byte_identical_across_runs_and_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = srblab(&srb_args(a.path().to_str().unwrap(), "1"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = srblab(&srb_args(b.path().to_str().unwrap(), "4"));
    assert_eq!(code(&o), 0);
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.contains_key("clusters.json") && fa.contains_key("pushforward.json"));
    assert!(fa.contains_key("measures/measure_0.csv"));
    assert_eq!(fa, fb);
}

#[test]
fn bistable_field_has_two_clusters() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let o = srblab(&[
        "srb", "--system", "bistable", "--seed", "5", "--out", out, "--set", "srb.orbits=10",
        "--set", "srb.horizon=20", "--set", "srb.basin_count=20", "--set", "srb.basin_horizon=20",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&d.path().join("clusters.json"))["cluster_count"], 2);
    let b = json(&d.path().join("basins.json"));
    assert!(b["coverage"]["remainder"].as_f64().unwrap() < 0.05);
}

#[test]
fn lorenz_cluster_count_is_stable_under_refinement() {
    let mut counts = Vec::new();
    for grid in ["32", "64"] {
        let d = tempfile::tempdir().unwrap();
        let out = d.path().to_str().unwrap();
        let g = format!("srb.grid={grid}");
        let o = srblab(&[
            "srb", "--seed", "8", "--out", out, "--set", &g, "--set", "srb.orbits=5",
            "--set", "srb.horizon=1000", "--set", "srb.basin_count=4", "--set", "srb.basin_horizon=200",
        ]);
        assert_eq!(code(&o), 0);
        counts.push(json(&d.path().join("clusters.json"))["cluster_count"].clone());
    }
    assert_eq!(counts[0], counts[1]);
    assert_eq!(counts[0], 1);
}

#[test]
fn config_file_round_trips_and_sets_defaults() {
    let d = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        system: "constant".into(),
        seed: Some(9),
        out_dir: d.path().join("o").display().to_string(),
        ..Default::default()
    };
    cfg.ensemble.count = 2;
    cfg.sr.horizon = 5.0;
    let text = cfg.to_toml();
    assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    let path = d.path().join("run.toml");
    std::fs::write(&path, text).unwrap();
    let o = srblab(&["criteria", "--which", "sr", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&d.path().join("o/report_sr.json"));
    assert_eq!(r["seed"], 9);
    assert_eq!(r["per_orbit"].as_array().unwrap().len(), 2);
}

#[test]
fn system_definition_file_is_accepted() {
    let d = tempfile::tempdir().unwrap();
    let def = d.path().join("decay.toml");
    std::fs::write(
        &def,
        "name = \"decay\"\ndim = 3\nd_s = 1\nbox_lo = [-5.0, -5.0, -5.0]\nbox_hi = [5.0, 5.0, 5.0]\nequilibria = [[0.0, 0.0, 0.0]]\n\n\
         [[term]]\neq = 0\ncoeff = -1.0\npowers = [1, 0, 0]\n\n\
         [[term]]\neq = 1\ncoeff = -1.0\npowers = [0, 1, 0]\n\n\
         [[term]]\neq = 2\ncoeff = -1.0\npowers = [0, 0, 1]\n",
    )
    .unwrap();
    let out = d.path().join("o");
    let o = srblab(&[
        "simulate", "--system", def.to_str().unwrap(), "--set", "x0=[1.0, 2.0, -1.0]", "--set", "simulate.horizon=1",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let last = rows(&out.join("trajectory.csv")).pop().unwrap();
    assert!((last[1] - (-1f64).exp()).abs() < 1e-9);
    assert_eq!(code(&srblab(&["simulate", "--system", "missing.toml", "--out", out.to_str().unwrap()])), 2);
}
