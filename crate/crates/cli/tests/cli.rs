use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use statrs::distribution::{ContinuousCDF, StudentsT};

fn riskagg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskagg")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_cmd(cmd: &str, config: &Path, out: &Path, seed: u64) -> Output {
    riskagg(&[
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
    ])
}

/// Data rows of a CSV output, skipping the provenance line.
fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

#[test]
fn project_orthant_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.json", r#"{"cone":{"d":2,"generators":[[1,0],[0,1]]},"points":[[-1,2]]}"#);
    let out = run_cmd("project", &cfg, &dir.path().join("o"), 1);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rec: serde_json::Value = serde_json::from_str(stdout.lines().nth(1).unwrap()).unwrap();
    let p: Vec<f64> = serde_json::from_value(rec["projection"].clone()).unwrap();
    assert!((p[0] - 0.0).abs() < 1e-12 && (p[1] - 2.0).abs() < 1e-12);
}

#[test]
fn classify_reference_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"family":{"family":"normal"},"mu":[0,0],"covariance":[[1,0],[0,1]],"beta":0.95,
            "points":[[-3,0],[3,3]]}"#,
    );
    let out = run_cmd("classify", &cfg, &dir.path().join("o"), 1);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let risk: Vec<bool> = stdout
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["risk"].as_bool().unwrap())
        .collect();
    assert_eq!(risk, vec![true, false]);
}

#[test]
fn malformed_points_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("pts.csv"), "prob,a,b\n0.5,1.0,2.0\n0.5,oops,1.0\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"family":{"family":"normal"},"mu":[0,0],"covariance":[[1,0],[0,1]],"beta":0.95,
            "points_file":"pts.csv"}"#,
    );
    let out = run_cmd("classify", &cfg, &dir.path().join("o"), 1);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_quota = write_config(dir.path(), "q.json", r#"{"dims":[5],"quotas":[0.1],"trials":1}"#);
    let out = run_cmd("prob-table", &bad_quota, &dir.path().join("o"), 1);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("infeasible"));
    let unknown = write_config(dir.path(), "u.json", r#"{"dimz":[5]}"#);
    assert_eq!(run_cmd("prob-table", &unknown, &dir.path().join("o"), 1).status.code(), Some(2));
    let missing = dir.path().join("absent.json");
    assert_eq!(run_cmd("prob-table", &missing, &dir.path().join("o"), 1).status.code(), Some(2));
}

#[test]
fn unreachable_target_is_a_solver_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", r#"{"dims":[3],"sets":2,"tau":1.0}"#);
    assert_eq!(run_cmd("stability", &cfg, &dir.path().join("o"), 1).status.code(), Some(3));
}

#[test]
fn prob_table_reproduces_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.json", r#"{"dims":[2,4],"trials":2,"samples":500}"#);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run_cmd("prob-table", &cfg, &a, 9).status.success());
    let out = riskagg(&[
        "prob-table",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
        "--seed",
        "9",
        "--jobs",
        "1",
    ]);
    assert!(out.status.success());
    for f in ["prob_table.csv", "prob_table_long.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let text = fs::read_to_string(a.join("prob_table.csv")).unwrap();
    assert!(text.starts_with("# riskagg version="));
    assert!(text.lines().next().unwrap().contains("master_seed=9"));

}

#[test]
fn tighter_quota_raises_nonrisk_probability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "p.json",
        r#"{"dims":[5],"trials":2,"samples":4000,"quotas":[1.0,0.5,0.3],"betas":[0.95,0.99]}"#,
    );
    let o = dir.path().join("o");
    assert!(run_cmd("prob-table", &cfg, &o, 4).status.success());
    let (_, rows) = read_table(&o.join("prob_table_long.csv"));
    let get = |trial: &str, q: &str, b: &str| -> (f64, f64) {
        let r = rows.iter().find(|r| r[1] == trial && r[2] == q && r[3] == b).unwrap();
        (r[4].parse().unwrap(), r[5].parse().unwrap())
    };
    for trial in ["0", "1"] {
        for b in ["0.95", "0.99"] {
            let mut prev = get(trial, "1", b);
            for q in ["0.5", "0.3"] {
                let cur = get(trial, q, b);
                assert!(cur.0 >= prev.0 - 2.0 * (cur.1 * cur.1 + prev.1 * prev.1).sqrt());
                prev = cur;
            }
        }
        for q in ["1", "0.5", "0.3"] {
            let lo = get(trial, q, "0.95");
            let hi = get(trial, q, "0.99");
            assert!(hi.0 >= lo.0 - 2.0 * (lo.1 * lo.1 + hi.1 * hi.1).sqrt());
        }
    }
}

#[test]
fn whole_space_makes_methods_indistinguishable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", r#"{"dims":[3],"sets":60,"n_risk":40,"whole_space":true}"#);
    let o = dir.path().join("o");
    assert!(run_cmd("stability", &cfg, &o, 5).status.success());
    let (_, rows) = read_table(&o.join("stability_sets.csv"));
    let gaps = |m: &str| -> Vec<f64> { rows.iter().filter(|r| r[3] == m).map(|r| r[5].parse().unwrap()).collect() };
    let a = gaps("aggregation");
    let b = gaps("basic-risk-count");
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0), n)
    };
    let ((ma, va, na), (mb, vb, nb)) = (stats(&a), stats(&b));
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t.abs()));
    assert!(p > 0.01, "t = {t}, p = {p}");
    // nothing is aggregated, so the effective size is the risk target
    let eff: Vec<&Vec<String>> = rows.iter().filter(|r| r[3] == "basic-effective").collect();
    assert!(eff.iter().all(|r| r[4] == "40"));
}

#[test]
fn reduction_errors_are_nonnegative() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "r.json", r#"{"dims":[4],"sizes":[100,200],"sets":8}"#);
    let o = dir.path().join("o");
    assert!(run_cmd("reduction-error", &cfg, &o, 6).status.success());
    let (header, rows) = read_table(&o.join("reduction_sets.csv"));
    assert_eq!(header[5], "error");
    for r in &rows {
        let e: f64 = r[5].parse().unwrap();
        let prop: f64 = r[6].parse().unwrap();
        assert!(e >= -1e-9, "{e}");
        assert!((0.0..1.0).contains(&prop));
    }
    let (h, wide) = read_table(&o.join("reduction_error.csv"));
    assert_eq!(h, vec!["d", "trial", "n", "beta=0.95", "beta=0.99"]);
    assert_eq!(wide.len(), 2);
}

#[test]
fn synth_data_feeds_a_scenario_source() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "g.json", r#"{"scenarios":{"d":4,"n":3000},"returns":null}"#);
    let data = dir.path().join("data");
    assert!(run_cmd("synth-data", &cfg, &data, 2).status.success());
    assert!(!data.join("returns.csv").exists());
    let p = write_config(
        dir.path(),
        "p.json",
        &format!(
            r#"{{"source":{{"kind":"scenarios","path":"{}"}},"dims":[3],"trials":2,"samples":500}}"#,
            data.join("scenarios.csv").display()
        ),
    );
    let o = dir.path().join("o");
    let out = run_cmd("prob-table", &p, &o, 2);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_table(&o.join("prob_table.csv"));
    assert_eq!(rows.len(), 2);
}
