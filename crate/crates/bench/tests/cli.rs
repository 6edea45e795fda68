use std::path::Path;
use std::process::{Command, Output};

fn expose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expose"))
        .args(args)
        .output()
        .expect("spawn expose")
}

fn ok(args: &[&str]) -> String {
    let out = expose(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn dump_config_lists_every_key() {
    let out = ok(&["--dump-config"]);
    for key in [
        "engine",
        "iterations",
        "horizon",
        "c_explore",
        "alpha",
        "gamma",
        "seed",
        "weight_clip",
        "no_importance_sampling",
        "no_baseline",
        "value_net_baseline",
        "algorithm1_mode",
        "value_estimator",
        "step_cap",
        "workers",
    ] {
        assert!(
            out.lines().any(|l| l.starts_with(&format!("{key} = "))),
            "{key}"
        );
    }
}

#[test]
fn malformed_config_exits_2_and_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "d.jsonl");
    ok(&[
        "gen-data", "--env", "hamcycle", "--count", "2", "--out", &data,
    ]);
    let cfg = path(dir.path(), "bad.cfg");
    std::fs::write(&cfg, "# fine\nalpha = 0.1\nthis line is wrong\n").unwrap();
    let out = expose(&[
        "run",
        "--env",
        "hamcycle",
        "--dataset",
        &data,
        "--config",
        &cfg,
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = expose(&[
        "run",
        "--env",
        "hamcycle",
        "--dataset",
        &data,
        "--set",
        "alpha=fast",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let nowhere = path(dir.path(), "nope.jsonl");
    let out = expose(&["run", "--env", "gridnav", "--dataset", &nowhere]);
    assert_eq!(out.status.code(), Some(3));

    let data = path(dir.path(), "d.jsonl");
    ok(&[
        "gen-data", "--env", "hamcycle", "--count", "2", "--out", &data,
    ]);
    let prior = path(dir.path(), "nope.bin");
    let out = expose(&[
        "run",
        "--env",
        "hamcycle",
        "--dataset",
        &data,
        "--prior",
        &prior,
    ]);
    assert_eq!(out.status.code(), Some(3));
    let cfg = path(dir.path(), "nope.cfg");
    let out = expose(&[
        "run",
        "--env",
        "hamcycle",
        "--dataset",
        &data,
        "--config",
        &cfg,
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn small_grid_pipeline_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let once = |tag: &str| {
        let (train, test, prior, log) = (
            path(d, &format!("{tag}train.jsonl")),
            path(d, &format!("{tag}test.jsonl")),
            path(d, &format!("{tag}prior.bin")),
            path(d, &format!("{tag}log.jsonl")),
        );
        ok(&[
            "gen-data", "--env", "gridnav", "--count", "10", "--seed", "4", "--out", &train,
        ]);
        ok(&[
            "gen-data", "--env", "gridnav", "--count", "3", "--seed", "5", "--out", &test,
        ]);
        ok(&[
            "train-prior",
            "--env",
            "gridnav",
            "--dataset",
            &train,
            "--out",
            &prior,
            "--epochs",
            "2",
        ]);
        let csv = ok(&[
            "run",
            "--env",
            "gridnav",
            "--dataset",
            &test,
            "--prior",
            &prior,
            "--engine",
            "expose",
            "--iterations",
            "5",
            "--deterministic",
            "--log",
            &log,
        ]);
        let bytes = |p: &str| std::fs::read(p).unwrap();
        (csv, bytes(&train), bytes(&test), bytes(&prior), bytes(&log))
    };
    let a = once("a");
    let b = once("b");
    assert_eq!(a, b);
    let mut lines = a.0.lines();
    assert_eq!(
        lines.next(),
        Some("env,engine,iterations,instances,successes,success_rate,stderr,seed,wall_ms")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..4], ["gridnav", "expose", "5", "3"]);
    assert_eq!(row[8], "0");
    assert_eq!(String::from_utf8(a.4).unwrap().lines().count(), 3);
}

#[test]
fn render_writes_both_maps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (data, stats, out) = (path(d, "g.jsonl"), path(d, "s.json"), path(d, "map"));
    ok(&[
        "gen-data", "--env", "gridnav", "--count", "1", "--out", &data,
    ]);
    ok(&[
        "run",
        "--env",
        "gridnav",
        "--dataset",
        &data,
        "--engine",
        "expose",
        "--iterations",
        "3",
        "--set",
        "step_cap=1",
        "--dump-stats",
        &stats,
    ]);
    ok(&[
        "render",
        "--dataset",
        &data,
        "--index",
        "0",
        "--stats",
        &stats,
        "--out",
        &out,
    ]);
    let ascii = std::fs::read_to_string(format!("{out}.txt")).unwrap();
    assert_eq!(ascii.lines().count(), 15);
    assert!(ascii.contains('A') && ascii.contains('G'));
    assert!(std::fs::read(format!("{out}.ppm"))
        .unwrap()
        .starts_with(b"P6\n"));
}

#[test]
fn ablate_reports_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "h.jsonl");
    ok(&[
        "gen-data",
        "--env",
        "hamcycle",
        "--count",
        "3",
        "--nodes",
        "6",
        "--sparsity",
        "0.6",
        "--out",
        &data,
    ]);
    let csv = ok(&[
        "ablate",
        "--env",
        "hamcycle",
        "--dataset",
        &data,
        "--set",
        "iterations=5",
        "--deterministic",
    ]);
    let engines: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(
        engines,
        [
            "expose",
            "expose-no-is",
            "expose-no-baseline",
            "expose-value-baseline",
            "expose-algorithm1"
        ]
    );
}
