use std::path::Path;
use std::process::Command;

use rivmpl::problem::{gen_data_pca, make_group_pca, CompositeProblem};
use rivmpl::SolverConfig;

fn bench() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rivmpl-bench"));
    c.env_remove("RIVMPL_THREADS");
    c
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn gpca_two_trials_writes_traces_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gpca.cfg");
    std::fs::write(
        &cfg,
        "# group-sparse PCA\nproblem = gpca\nm = 20\nn = 100\nr = 3\nlambda = 2.0\nrho = 0.5\ntrials = 2\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = bench()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .env("RIVMPL_THREADS", "2")
        .status()
        .unwrap();
    assert!(status.success());
    for t in 0..2 {
        let trace = read(&out.join(format!("trace_{t}.csv")));
        let mut lines = trace.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,obj,vnorm,alpha,jk,inner_iters,beta,mu,feas_err,time_ms"
        );
        assert!(lines.count() > 0);
    }
    let summary: serde_json::Value =
        serde_json::from_str(&read(&out.join("summary.json"))).unwrap();
    assert_eq!(summary["problem"], "gpca");
    assert_eq!(summary["trials"].as_array().unwrap().len(), 2);
    for key in [
        "objective",
        "time_s",
        "iterations",
        "nsub",
        "inner_mean",
        "feas_err",
        "riem_residual",
        "lin_residual",
        "row_sparsity",
        "infeasibility",
    ] {
        assert!(summary["mean"][key].is_number(), "missing {key}");
    }
    let rs = summary["mean"]["row_sparsity"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rs));
}

#[test]
fn trace_objective_matches_solver_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let status = bench()
        .args([
            "--problem",
            "gpca",
            "--seed",
            "4",
            "--max-outer",
            "30",
            "--deterministic",
            "--out",
            out.to_str().unwrap(),
            "--set",
            "m = 20",
            "--set",
            "n = 60",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let b = gen_data_pca(20, 60, 4).unwrap();
    let p = make_group_pca(&b, 2.0, 0.5, 3).unwrap();
    let x0 = p.manifold().random_point(4);
    let cfg = SolverConfig {
        max_outer: 30,
        timing: false,
        ..Default::default()
    };
    let res = rivmpl::run(&p, &x0, &cfg).unwrap();
    let trace = read(&out.join("trace_0.csv"));
    let objs: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let expected: Vec<f64> = res.trace.iter().map(|t| t.objective).collect();
    assert_eq!(objs, expected);
}

#[test]
fn fixed_seed_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let ok = bench()
            .args([
                "--problem",
                "ssc",
                "--seed",
                "7",
                "--trials",
                "1",
                "--deterministic",
                "--out",
                out.to_str().unwrap(),
                "--set",
                "n = 30",
            ])
            .status()
            .unwrap()
            .success();
        assert!(ok);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["trace_0.csv", "summary.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap()
        );
    }
    let summary: serde_json::Value = serde_json::from_str(&read(&a.join("summary.json"))).unwrap();
    let nmi = summary["mean"]["nmi"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&nmi));
}

#[test]
fn malformed_config_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "problem = ssc\nn = -5\n").unwrap();
    let out = dir.path().join("never");
    let o = bench()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("n"));
    assert!(!out.exists());

    let o = bench()
        .args(["--problem", "psd", "--data", "/no/such/matrix.csv", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(!out.exists());

    let o = bench()
        .args(["--problem", "ssc", "--out"])
        .arg(&out)
        .env("RIVMPL_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(!out.exists());
}

#[test]
fn data_file_replaces_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let a = rivmpl::problem::gen_data_psd_type1(6, 3, 2);
    let path = dir.path().join("a.csv");
    let text: String = a
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .map(|v| format!("{v:e}"))
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect();
    std::fs::write(&path, text).unwrap();
    let out = dir.path().join("o");
    let status = bench()
        .args([
            "--problem",
            "psd",
            "--max-outer",
            "20",
            "--set",
            "r = 1",
            "--data",
        ])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&read(&out.join("summary.json"))).unwrap();
    assert!(summary["mean"]["reconstruction_error"].is_number());
}
