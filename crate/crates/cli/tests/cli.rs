// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use std::fs;
use std::path::Path;

use common::{arg, featgeom, listing, run, run_ok, sha256_file};
use featgeom::npy::{read_matrix, NpyArray};
use serde_json::{json, Value};

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn gen_is_byte_identical_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let path = |name: &str| arg(&tmp.path().join(name));
    for name in ["a.npy", "b.npy"] {
        run_ok([
            "gen",
            "--kind",
            "circle2d",
            "--n",
            "1000",
            "--seed",
            "0",
            "--out",
            &path(name),
        ]);
    }
    run_ok([
        "gen",
        "--kind",
        "circle2d",
        "--n",
        "1000",
        "--seed",
        "1",
        "--out",
        &path("c.npy"),
    ]);
    let digest = |name: &str| sha256_file(&tmp.path().join(name));
    assert_eq!(digest("a.npy"), digest("b.npy"));
    assert_ne!(digest("a.npy"), digest("c.npy"));
    let x = read_matrix(&tmp.path().join("a.npy")).unwrap();
    assert_eq!((x.rows(), x.cols()), (1000, 2));
}

#[test]
fn manifest_records_resolved_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g.npy");
    let manifest = run_ok([
        "gen",
        "--kind",
        "gaussian2d",
        "--n",
        "10",
        "--seed",
        "4",
        "--out",
        &arg(&out),
    ]);
    assert_eq!(manifest, tmp.path().join("g.npy.manifest.json"));
    let m = read_json(&manifest);
    assert_eq!(m["tool"], "featgeom");
    assert_eq!(m["command"], "gen");
    assert_eq!(m["seed"], 4);
    assert_eq!(m["params"]["n"], 10);
    assert_eq!(m["params"]["kind"], "gaussian2d");
    assert_eq!(m["outputs"][0]["sha256"], sha256_file(&out));
}

#[test]
fn missing_input_exits_2_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = arg(&tmp.path().join("absent.npy"));
    let out = run([
        "probe",
        "--acts",
        &missing,
        "--labels",
        &missing,
        "--out",
        &arg(&tmp.path().join("p.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = run([
        "discover",
        "--acts",
        &missing,
        "--sae",
        &arg(&tmp.path().join("sae")),
        "--out",
        &arg(&tmp.path().join("report")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(listing(tmp.path()).is_empty(), "{:?}", listing(tmp.path()));
}

#[test]
fn invalid_arguments_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = arg(&tmp.path().join("x.npy"));
    let cases: [&[&str]; 5] = [
        &["gen", "--kind", "torus", "--out", &out],
        &["gen", "--bogus-flag", "--out", &out],
        &["gen", "--kind", "circle2d"],
        &["gen", "--kind", "circle2d", "--n", "0", "--out", &out],
        &[
            "cluster", "--sae", &out, "--method", "kmeans", "--out", &out,
        ],
    ];
    for args in cases {
        let result = run(args);
        assert_eq!(result.status.code(), Some(1), "{args:?}");
    }
    assert!(listing(tmp.path()).is_empty());
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(run(["--help"]).status.code(), Some(0));
    assert_eq!(run(["--version"]).status.code(), Some(0));
    assert_eq!(run(["gen", "--help"]).status.code(), Some(0));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    fs::write(
        &config,
        json!({"n": 50, "seed": 3, "kind": "gaussian2d"}).to_string(),
    )
    .unwrap();
    let out = tmp.path().join("x.npy");
    let manifest = run_ok([
        "--config",
        &arg(&config),
        "gen",
        "--n",
        "20",
        "--out",
        &arg(&out),
    ]);
    let x = read_matrix(&out).unwrap();
    assert_eq!(x.rows(), 20);
    let m = read_json(&manifest);
    assert_eq!(m["params"]["kind"], "gaussian2d");
    assert_eq!(m["seed"], 3);

    fs::write(&config, json!({"samples": 5}).to_string()).unwrap();
    let result = run([
        "--config",
        &arg(&config),
        "gen",
        "--out",
        &arg(&tmp.path().join("y.npy")),
    ]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn seed_defaults_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let path = |name: &str| tmp.path().join(name);
    let status = featgeom()
        .env("FEATGEOM_SEED", "11")
        .args(["gen", "--n", "30", "--out", &arg(&path("env.npy"))])
        .output()
        .unwrap();
    assert!(status.status.success());
    run_ok([
        "gen",
        "--n",
        "30",
        "--seed",
        "11",
        "--out",
        &arg(&path("flag.npy")),
    ]);
    run_ok(["gen", "--n", "30", "--out", &arg(&path("zero.npy"))]);
    assert_eq!(
        sha256_file(&path("env.npy")),
        sha256_file(&path("flag.npy"))
    );
    assert_ne!(
        sha256_file(&path("env.npy")),
        sha256_file(&path("zero.npy"))
    );
    assert_eq!(read_json(&path("zero.npy.manifest.json"))["seed"], 0);

    let bad = featgeom()
        .env("FEATGEOM_SEED", "eleven")
        .args(["gen", "--out", &arg(&path("bad.npy"))])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn replay_rewrites_and_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let acts = tmp.path().join("acts.npy");
    let points = arg(&acts);
    run_ok([
        "gen",
        "--kind",
        "planted_mixture2d",
        "--n",
        "400",
        "--seed",
        "2",
        "--out",
        &points,
    ]);
    let out = tmp.path().join("score.json");
    let manifest = run_ok([
        "score",
        "--points",
        &points,
        "--steps",
        "300",
        "--out",
        &arg(&out),
    ]);
    let digest = sha256_file(&out);

    fs::remove_file(&out).unwrap();
    assert!(run(["replay", &arg(&manifest)]).status.success());
    assert_eq!(sha256_file(&out), digest);
    assert!(run(["replay", "--verify", &arg(&manifest)])
        .status
        .success());

    // a changed input no longer reproduces
    run_ok([
        "gen",
        "--kind",
        "planted_mixture2d",
        "--n",
        "400",
        "--seed",
        "3",
        "--out",
        &points,
    ]);
    let result = run(["replay", "--verify", &arg(&manifest)]);
    assert_eq!(result.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&result.stderr).contains("acts.npy"));
    assert_eq!(sha256_file(&out), digest, "verify must not write");
}

#[test]
fn thread_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let points = arg(&tmp.path().join("c.npy"));
    run_ok(["gen", "--n", "500", "--seed", "5", "--out", &points]);
    let one = tmp.path().join("one.json");
    let two = tmp.path().join("two.json");
    run_ok([
        "--threads",
        "1",
        "score",
        "--points",
        &points,
        "--steps",
        "300",
        "--out",
        &arg(&one),
    ]);
    run_ok([
        "--threads",
        "2",
        "score",
        "--points",
        &points,
        "--steps",
        "300",
        "--out",
        &arg(&two),
    ]);
    assert_eq!(fs::read(one).unwrap(), fs::read(two).unwrap());
}

#[test]
fn clock_outputs_feed_the_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let path = |name: &str| arg(&tmp.path().join(name));
    run_ok([
        "gen",
        "--kind",
        "clock",
        "--n",
        "196",
        "--out",
        &path("clock.npy"),
    ]);
    let labels = NpyArray::load(&tmp.path().join("clock.labels.npy")).unwrap();
    assert_eq!(labels.shape, vec![196, 2]);
    run_ok([
        "probe",
        "--acts",
        &path("clock.npy"),
        "--labels",
        &path("clock.labels.npy"),
        "--out",
        &path("probe.json"),
    ]);
    run_ok([
        "intervene-sweep",
        "--acts",
        &path("clock.npy"),
        "--labels",
        &path("clock.labels.npy"),
        "--meta",
        &path("clock.meta.json"),
        "--probe",
        &path("probe.json"),
        "--out",
        &path("sweep.json"),
    ]);
    let sweep = read_json(&tmp.path().join("sweep.json"));
    assert_eq!(sweep["records"].as_array().unwrap().len(), 49 * 6);
    assert!(sweep["flip_rate"].as_f64().unwrap() >= 0.99);
    assert!(sweep["average_logit_difference"].as_f64().unwrap() < 0.0);
}

/// Plane (0 or 1) holding nearly all of a cluster's decoder mass, if any.
fn circle_plane(w_dec: &featgeom::numerics::Matrix, features: &[usize]) -> Option<usize> {
    let mass = |plane: usize| -> f64 {
        features
            .iter()
            .map(|&j| w_dec[(2 * plane, j)].powi(2) + w_dec[(2 * plane + 1, j)].powi(2))
            .sum()
    };
    let total: f64 = features
        .iter()
        .map(|&j| {
            (0..w_dec.rows())
                .map(|i| w_dec[(i, j)].powi(2))
                .sum::<f64>()
        })
        .sum();
    (0..2).find(|&p| mass(p) > 0.9 * total)
}

#[test]
fn discover_ranks_planted_circles_first() {
    let tmp = tempfile::tempdir().unwrap();
    let path = |name: &str| arg(&tmp.path().join(name));
    run_ok([
        "gen",
        "--kind",
        "two_circles_r10",
        "--n",
        "2048",
        "--out",
        &path("acts.npy"),
    ]);
    run_ok([
        "sae-train",
        "--acts",
        &path("acts.npy"),
        "--m",
        "64",
        "--out",
        &path("sae"),
    ]);
    let manifest = run_ok([
        "discover",
        "--acts",
        &path("acts.npy"),
        "--sae",
        &path("sae"),
        "--out",
        &path("report"),
    ]);
    assert_eq!(manifest, tmp.path().join("report/manifest.json"));

    let w_dec = read_matrix(&tmp.path().join("sae/W_d.npy")).unwrap();
    let clusters = read_json(&tmp.path().join("report/clusters.json"));
    let members: Vec<Vec<usize>> = serde_json::from_value(clusters["clusters"].clone()).unwrap();
    let ranking = read_json(&tmp.path().join("report/ranking.json"));
    let order: Vec<usize> = serde_json::from_value(ranking["by_product"].clone()).unwrap();

    let planes: Vec<Option<usize>> = order
        .iter()
        .map(|&id| circle_plane(&w_dec, &members[id]))
        .collect();
    let first_noise = planes
        .iter()
        .position(Option::is_none)
        .unwrap_or(planes.len());
    assert!(
        planes[first_noise..].iter().all(Option::is_none),
        "a circle cluster ranks below noise: {planes:?}"
    );
    let mut found: Vec<usize> = planes.iter().flatten().copied().collect();
    found.sort_unstable();
    found.dedup();
    assert_eq!(found, vec![0, 1], "both planted planes are ranked");
    assert!(tmp.path().join("report/top_cluster.svg").exists());
}
