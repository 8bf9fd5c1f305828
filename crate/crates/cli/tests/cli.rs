use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn tvmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvmix")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Six years of weekly Gaussian log returns.
fn weekly_prices(dir: &Path) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.001, 0.02).unwrap();
    let mut date = chrono::NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    let mut price = 50.0f64;
    let mut text = String::from("Date,Adj Close\n");
    for _ in 0..(6 * 52) {
        price *= f64::exp(noise.sample(&mut rng));
        text.push_str(&format!("{date},{price:.8}\n"));
        date += chrono::Duration::days(7);
    }
    let path = dir.join("prices.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn no_subcommand_prints_usage_and_exits_1() {
    let o = tvmix(&[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(code(&tvmix(&["--help"])), 0);
    assert_eq!(code(&tvmix(&["--version"])), 0);
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(code(&tvmix(&["fit", "--model", "m9", "--input", "x.csv"])), 1);
    assert_eq!(code(&tvmix(&["var"])), 1);
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = tvmix(&["--out", s(dir.path()), "fit", "--model", "m2", "--input", "does-not-exist.csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn model4_requires_the_mcem_flag() {
    let dir = tempfile::tempdir().unwrap();
    let input = weekly_prices(dir.path());
    let o = tvmix(&["--out", s(dir.path()), "fit", "--model", "m4", "--group", "month", "--input", s(&input), "--macro", "p.csv"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--mcem"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"em": {"max_iter": 10}, "typo": 1}"#).unwrap();
    let input = weekly_prices(dir.path());
    let o = tvmix(&["--config", s(&cfg), "--out", s(dir.path()), "returns", "--input", s(&input)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn outputs_carry_a_provenance_header() {
    let dir = tempfile::tempdir().unwrap();
    let input = weekly_prices(dir.path());
    let out = dir.path().join("o");
    let o = tvmix(&["--seed", "17", "--out", s(&out), "returns", "--input", s(&input), "--group", "year"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("grouped.csv")).unwrap();
    let header: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
    assert!(header[0].starts_with("# command: ") && header[0].contains("returns"));
    assert_eq!(header[1], "# seed: 17");
    let hash = header[2].strip_prefix("# config_sha256: ").unwrap();
    assert_eq!(hash.len(), 64);

    // same effective config (explicit defaults) gives the same hash
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, "{}").unwrap();
    let out2 = dir.path().join("o2");
    tvmix(&["--config", s(&cfg), "--out", s(&out2), "returns", "--input", s(&input)]);
    let again = std::fs::read_to_string(out2.join("returns.csv")).unwrap();
    assert!(again.contains(&format!("# config_sha256: {hash}")));
}

#[test]
fn grouped_file_refits_to_the_same_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let input = weekly_prices(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&tvmix(&["--out", s(&a), "returns", "--input", s(&input), "--group", "year"])), 0);
    assert_eq!(code(&tvmix(&["--out", s(&a), "fit", "--model", "m2", "--input", s(&input)])), 0);
    let grouped = a.join("grouped.csv");
    let o = tvmix(&["--out", s(&b), "fit", "--model", "m2", "--kind", "grouped", "--input", s(&grouped)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let body = |p: PathBuf| -> String {
        std::fs::read_to_string(p).unwrap().lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
    };
    let (pa, pb) = (body(a.join("params.csv")), body(b.join("params.csv")));
    assert!(pa.starts_with("parameter,value,std_error\nmu,"));
    // the grouped file holds 15 significant digits, so the refit agrees to
    // optimizer precision rather than bit for bit
    for (la, lb) in pa.lines().zip(pb.lines()).skip(1) {
        let (na, va) = la.split_once(',').unwrap();
        let (nb, vb) = lb.split_once(',').unwrap();
        assert_eq!(na, nb);
        let (x, y): (f64, f64) = (va.trim_end_matches(',').parse().unwrap(), vb.trim_end_matches(',').parse().unwrap());
        assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-3), "{la} vs {lb}");
    }
    assert_eq!(pa.lines().count(), pb.lines().count());
}

#[test]
fn var_reports_and_refuses_expected_shortfall() {
    let dir = tempfile::tempdir().unwrap();
    let input = weekly_prices(dir.path());
    let out = dir.path().join("o");
    assert_eq!(code(&tvmix(&["--out", s(&out), "fit", "--model", "m1", "--input", s(&input)])), 0);
    let fit = out.join("fit.json");
    let o = tvmix(&["--out", s(&out), "var", "--fit", s(&fit), "--levels", "0.01,0.05", "--expected-shortfall"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("expected shortfall refused"));
    let text = std::fs::read_to_string(out.join("var.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "interval,level,var");
    assert_eq!(rows.len(), 1 + 6 * 2);
}

#[test]
fn unconverged_fit_is_a_numerical_failure_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let input = weekly_prices(dir.path());
    let out = dir.path().join("o");
    assert_eq!(code(&tvmix(&["--out", s(&out), "fit", "--model", "m2", "--input", s(&input)])), 0);
    let mut record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    record["fit"]["converged"][2] = serde_json::Value::Bool(false);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, record.to_string()).unwrap();
    let diag = dir.path().join("d");
    let o = tvmix(&["--out", s(&diag), "var", "--fit", s(&bad)]);
    assert_eq!(code(&o), 3);
    let d: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(diag.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(d["diagnostics"]["exit_code"], 3);
    assert!(d["provenance"]["config_sha256"].is_string());
}

#[test]
fn simulate_writes_table_layout_and_json_summary() {
    let dir = tempfile::tempdir().unwrap();
    let design = dir.path().join("design.json");
    std::fs::write(
        &design,
        r#"{
            "model": "m1", "k": 1, "n_i": 100, "replicates": 6, "seed": 1,
            "true_params": {
                "gaussian": {"mu": 0.0, "sigma": 1.0},
                "cauchy": {"theta": 0.0, "delta": 1.0},
                "weights": {"kind": "constant", "alpha": 0.9}
            }
        }"#,
    )
    .unwrap();
    let out = dir.path().join("csv");
    let o = tvmix(&["--out", s(&out), "simulate", "--design", s(&design)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("parameters.csv")).unwrap();
    assert!(text.contains("# seed: 1\n"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "parameter,true,mean,se,mse");
    let names: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(names, ["mu", "sigma", "theta", "delta", "alpha"]);

    let json = dir.path().join("json");
    let o = tvmix(&["--seed", "5", "--format", "json", "--out", s(&json), "simulate", "--design", s(&design)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json.join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["provenance"]["seed"], 5);
    assert_eq!(v["summary"]["replicates"], 6);
}
