use std::path::Path;
use std::process::{Command, Output};

fn ncgs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncgs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

const QUADRATIC: &str = r#"{"problem": {"kind": "quadratic", "dim": 8}, "algorithm": "ncgs1", "horizon": 10, "seed": 7}"#;

fn lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn identical_runs_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "q.json", QUADRATIC);
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for out in [&a, &b] {
        let o = ncgs(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let rows = lines(&a);
    assert_eq!(rows.first().unwrap()["kind"], "header");
    assert_eq!(rows.len(), 12);
}

#[test]
fn footer_counts_one_gradient_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "q.json", QUADRATIC);
    let out = dir.path().join("t.jsonl");
    let o = ncgs(&[
        "run",
        "--config",
        &cfg,
        "--horizon",
        "100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let rows = lines(&out);
    let footer = rows.last().unwrap();
    assert_eq!(footer["kind"], "footer");
    assert_eq!(footer["fo"], 100);
}

#[test]
fn paired_head_to_head_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"problem": {"kind": "completion", "rows": 20, "cols": 20, "rank": 2},
            "algorithm": "ncgs1", "horizon": 15, "seed": 3, "timing": true}"#,
    );
    for algo in ["ncgs1", "fw"] {
        let out = dir.path().join(format!("{algo}.jsonl"));
        let o = ncgs(&[
            "run",
            "--config",
            &cfg,
            "--algo",
            algo,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let rows = lines(&out);
        assert_eq!(rows[0]["algorithm"], algo);
        let walls: Vec<f64> = rows[1..rows.len() - 1]
            .iter()
            .map(|r| r["wall_seconds"].as_f64().unwrap())
            .collect();
        assert!(walls.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "q.json", QUADRATIC);
    let trace = dir.path().join("t.jsonl");
    let csv = dir.path().join("t.csv");
    assert!(
        ncgs(&["run", "--config", &cfg, "--out", trace.to_str().unwrap()])
            .status
            .success()
    );
    let o = ncgs(&[
        "export",
        "--in",
        trace.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut csv_lines = text.lines();
    assert_eq!(
        csv_lines.next().unwrap(),
        "iter,epoch,wall_seconds,fo,sfo,ifo,lo,sq_grad_mapping,objective_value,flags"
    );
    let rows = lines(&trace);
    for (line, row) in csv_lines.zip(&rows[1..]) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(
            cells[0].parse::<u64>().unwrap(),
            row["iter"].as_u64().unwrap()
        );
        assert_eq!(
            cells[7].parse::<f64>().unwrap(),
            row["sq_grad_mapping"].as_f64().unwrap()
        );
        assert_eq!(
            cells[8].parse::<f64>().unwrap(),
            row["objective_value"].as_f64().unwrap()
        );
    }
}

#[test]
fn distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = ncgs(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(10));

    let bad = write_config(dir.path(), "bad.json", r#"{"algorithm": "ncgs1"}"#);
    assert_eq!(ncgs(&["run", "--config", &bad]).status.code(), Some(11));

    let mismatch = write_config(
        dir.path(),
        "m.json",
        r#"{"problem": {"kind": "quadratic"}, "algorithm": "svfw", "horizon": 5, "out": "x"}"#,
    );
    let o = ncgs(&["run", "--config", &mismatch]);
    assert_eq!(o.status.code(), Some(12));
    assert!(String::from_utf8_lossy(&o.stderr).contains("finite-sum"));

    let cfg = write_config(dir.path(), "q.json", QUADRATIC);
    let unwritable = dir.path().join("no").join("dir").join("t.jsonl");
    let o = ncgs(&[
        "run",
        "--config",
        &cfg,
        "--out",
        unwritable.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(13));

    let garbage = dir.path().join("g.jsonl");
    std::fs::write(&garbage, "{\"kind\":\"header\"}\n").unwrap();
    let o = ncgs(&[
        "export",
        "--in",
        garbage.to_str().unwrap(),
        "--out",
        dir.path().join("g.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(11));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}
