use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn compamg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compamg"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_then_build_produces_a_component() {
    let dir = tempfile::tempdir().unwrap();
    let gen = compamg(
        &[
            "gen",
            "--dim",
            "2",
            "--n",
            "8",
            "--epsilon",
            "1",
            "--theta",
            "0",
            "--out",
            "lap.mtx",
        ],
        dir.path(),
    );
    assert_eq!(gen.status.code(), Some(0), "{}", stderr(&gen));
    assert!(fs::read_to_string(dir.path().join("lap.mtx"))
        .unwrap()
        .starts_with("%%MatrixMarket"));

    let build = compamg(
        &[
            "build",
            "lap.mtx",
            "--report",
            "log.json",
            "--coarse-size",
            "8",
        ],
        dir.path(),
    );
    assert_eq!(build.status.code(), Some(0), "{}", stderr(&build));
    let log: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("log.json")).unwrap()).unwrap();
    assert!(log["components"].as_u64().unwrap() >= 1);
    assert_eq!(log["n"].as_u64(), Some(49));
    assert!(log["steps"]
        .as_array()
        .unwrap()
        .iter()
        .all(|s| s["rho"].is_number()));
}

#[test]
fn missing_matrix_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = compamg(&["build", "no_such.mtx"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cannot open"), "{}", stderr(&out));
}

#[test]
fn bad_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = compamg(&["solve", "--n", "8", "--mode", "sideways"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = compamg(&["build", "--gamma", "1.5", "--n", "8"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = compamg(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_report_per_component_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = compamg(
        &[
            "solve",
            "--n",
            "16",
            "--epsilon",
            "0.001",
            "--theta",
            "0.5",
            "--target-rho",
            "0.001",
            "--coarse-size",
            "8",
            "--components-sweep",
            "1:3",
            "--mode",
            "pcg",
            "--report",
            "solve.json",
            "--history",
            "hist.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("solve.json")).unwrap()).unwrap();
    let reports = report["reports"].as_array().unwrap();
    let built = report["build"]["components"].as_u64().unwrap() as usize;
    assert_eq!(reports.len(), built.min(3));
    assert!(!reports.is_empty());

    let csv = fs::read_to_string(dir.path().join("hist.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,iter,relres"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 3));
    for (k, r) in reports.iter().enumerate() {
        let k = k + 1;
        assert_eq!(r["components"].as_u64(), Some(k as u64));
        assert_eq!(r["residual_history"][0].as_f64(), Some(1.0));
        let count = rows.iter().filter(|row| row[0] == k.to_string()).count();
        assert_eq!(count, r["iterations"].as_u64().unwrap() as usize + 1);
    }
}

#[test]
fn stationary_solve_from_settings_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        "# model problem\nn = 12\ndim = 2\nmode = stationary\nmax_iters = 5\ncoarse-size = 8\n",
    )
    .unwrap();
    // the file caps iterations at 5, which is too few; the flag restores enough
    let capped = compamg(&["solve", "--config", "run.cfg"], dir.path());
    assert_eq!(capped.status.code(), Some(1), "{}", stderr(&capped));
    let ok = compamg(
        &["solve", "--config", "run.cfg", "--max-iters", "2000"],
        dir.path(),
    );
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("mode=stationary"));
}

#[test]
fn check_passes_on_generated_problem() {
    let dir = tempfile::tempdir().unwrap();
    let out = compamg(
        &[
            "check",
            "--n",
            "12",
            "--epsilon",
            "0.01",
            "--theta",
            "0.3",
            "--coarse-size",
            "8",
            "--report",
            "check.json",
        ],
        dir.path(),
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}{}", stderr(&out));
    assert!(stdout.contains("PASS composite s.p.d."));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn aggregate_dump_covers_every_vertex() {
    let dir = tempfile::tempdir().unwrap();
    let out = compamg(
        &[
            "build",
            "--n",
            "10",
            "--coarse-size",
            "8",
            "--dump-aggregates",
            "agg.txt",
            "--report",
            "log.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let dump = fs::read_to_string(dir.path().join("agg.txt")).unwrap();
    let vertices: Vec<usize> = dump
        .lines()
        .map(|l| l.split(' ').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(vertices, (0..81).collect::<Vec<_>>());
}
