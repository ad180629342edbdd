use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn sls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sls")).args(args).output().expect("failed to start sls")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn config(n: usize, x_max: f64) -> Value {
    json!({
        "system": { "chain": { "n": n, "alpha": 0.4, "rho": 1.0 } },
        "bounds": { "box": { "w_max": 1.0, "x_max": x_max, "u_max": 4.0 } },
        "T": 4,
        "d": 3,
        "simulation": { "steps": 40, "scenario": { "kind": "push", "node": 0, "magnitude": 3.0, "duration": 10 } },
        "saturation": { "u_max": 0.5 }
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn read(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Drops the `#` metadata lines.
fn csv_body(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap().lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

fn synth(dir: &Path, cfg: &Path, extra: &[&str]) -> (Output, PathBuf) {
    let out = dir.join(format!("synth{}", extra.join("_").replace('-', "")));
    let mut args = vec!["synth", s(cfg), "--out", s(&out)];
    args.extend_from_slice(extra);
    (sls(&args), out)
}

#[test]
fn synth_writes_round_trippable_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config(6, 1.6));
    let (out, dir) = synth(tmp.path(), &cfg, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("cost "));
    for name in ["phi.json", "certificate.json"] {
        let text = std::fs::read_to_string(dir.join(name)).unwrap();
        let again = if name == "phi.json" {
            let v: sls_core::FirResponse = sls_core::json::from_json(&text).unwrap();
            sls_core::json::to_json(&v).unwrap()
        } else {
            let v: sls_core::DualCertificate = sls_core::json::from_json(&text).unwrap();
            sls_core::json::to_json(&v).unwrap()
        };
        assert_eq!(text.trim_end(), again, "{name}");
    }
    let summary = read(&dir.join("synth.json"));
    assert_eq!(summary["status"], "optimal");
    for i in 0..6 {
        assert!(dir.join(format!("compensators/node_{i}.json")).is_file());
    }
}

#[test]
fn pinned_state_is_infeasible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config(4, 0.0));
    let (out, dir) = synth(tmp.path(), &cfg, &[]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("state"));
    assert_eq!(read(&dir.join("synth.json"))["status"], "infeasible");
}

#[test]
fn distributed_mode_matches_centralized() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config(5, 1.3));
    let (a, da) = synth(tmp.path(), &cfg, &[]);
    let (b, db) = synth(tmp.path(), &cfg, &["--mode", "distributed", "--eps", "1e-4", "--seed", "3"]);
    assert_eq!(code(&a), 0);
    assert_eq!(code(&b), 0, "{}", String::from_utf8_lossy(&b.stderr));
    let ca = read(&da.join("synth.json"))["cost"].as_f64().unwrap();
    let cb = read(&db.join("synth.json"))["cost"].as_f64().unwrap();
    assert!((ca - cb).abs() / ca <= 1e-3, "{ca} vs {cb}");
    let trace = std::fs::read_to_string(db.join("trace.csv")).unwrap();
    assert!(trace.starts_with("# "));
    assert!(trace.contains("round,primal_residual"));
}

#[test]
fn identical_runs_give_identical_artifacts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config(5, 1.3));
    let (_, a) = synth(tmp.path(), &cfg, &["--mode", "distributed"]);
    let b = tmp.path().join("again");
    let out = sls(&["synth", s(&cfg), "--mode", "distributed", "--out", s(&b)]);
    assert_eq!(code(&out), 0);
    for name in ["phi.json", "certificate.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn verify_accepts_certified_and_rejects_tightened_bounds() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config(5, 1.3));
    let (_, dir) = synth(tmp.path(), &cfg, &[]);
    let phi = dir.join("phi.json");
    let vdir = tmp.path().join("v");
    let out = sls(&["verify", s(&cfg), "--phi", s(&phi), "--out", s(&vdir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read(&vdir.join("verify.json"));
    assert!(report["min_slack"].as_f64().unwrap() >= -1e-6);
    let (peak, bound) = (report["simulated_peak"].as_f64().unwrap(), report["bound"].as_f64().unwrap());
    assert!((peak - bound).abs() <= 1e-4 * bound, "{peak} vs {bound}");
    for name in ["slack.csv", "worst_case_w.csv", "worst_case_trajectory.csv"] {
        let text = std::fs::read_to_string(vdir.join(name)).unwrap();
        assert!(text.starts_with("# command: verify"), "{name}");
    }

    let tight = write_config(tmp.path(), "tight.json", &config(5, 0.65));
    let out = sls(&["verify", s(&tight), "--phi", s(&phi), "--out", s(&tmp.path().join("v2"))]);
    assert_eq!(code(&out), 4);
    let report = read(&tmp.path().join("v2/verify.json"));
    assert!(!report["violated_rows"].as_array().unwrap().is_empty());
}

#[test]
fn corrupt_inputs_exit_with_code_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config(4, 2.0));
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{\"T\": 4, \"phi_x\": [").unwrap();
    let out = sls(&["verify", s(&cfg), "--phi", s(&bad), "--out", s(&tmp.path().join("v"))]);
    assert_eq!(code(&out), 2);

    let mut typo = config(4, 2.0);
    typo["horizon"] = json!(4);
    let typo = write_config(tmp.path(), "typo.json", &typo);
    assert_eq!(code(&sls(&["synth", s(&typo)])), 2);

    let mut zero_t = config(4, 2.0);
    zero_t["T"] = json!(0);
    let zero_t = write_config(tmp.path(), "zero.json", &zero_t);
    assert_eq!(code(&sls(&["synth", s(&zero_t)])), 2);

    let mut missing = config(4, 2.0);
    missing["system"] = json!({ "file": "nowhere.json" });
    let missing = write_config(tmp.path(), "missing.json", &missing);
    assert_eq!(code(&sls(&["synth", s(&missing)])), 2);

    assert_eq!(code(&sls(&["synth"])), 2);
}

#[test]
fn simulate_compares_naive_and_compensated_loops() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config(10, 1.6));
    let (out, dir) = synth(tmp.path(), &cfg, &[]);
    assert_eq!(code(&out), 0);
    let phi = dir.join("phi.json");
    let comp = dir.join("compensators");

    let sdir = tmp.path().join("sat");
    let out = sls(&["simulate", s(&cfg), "--phi", s(&phi), "--compensators", s(&comp), "--out", s(&sdir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("energy ratio"));
    let summary = read(&sdir.join("simulate.json"));
    assert!(summary["naive_saturation_steps"].as_u64().unwrap() > 0);
    assert!(summary["energy_ratio"].as_f64().unwrap() <= 1.0);

    let mut wide = config(10, 1.6);
    wide["saturation"]["u_max"] = json!(1e6);
    let wide = write_config(tmp.path(), "wide.json", &wide);
    let wdir = tmp.path().join("wide");
    assert_eq!(code(&sls(&["simulate", s(&wide), "--phi", s(&phi), "--compensators", s(&comp), "--out", s(&wdir)])), 0);
    // the two realizations agree up to floating-point round-off
    let (a, b) = (csv_body(&wdir.join("naive.csv")), csv_body(&wdir.join("compensated.csv")));
    assert_eq!(a.lines().count(), b.lines().count());
    for (la, lb) in a.lines().zip(b.lines()).skip(1) {
        for (x, y) in la.split(',').zip(lb.split(',')) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!((x - y).abs() <= 1e-9, "{la}\n{lb}");
        }
    }

    let mut quiet = config(10, 1.6);
    quiet["simulation"]["scenario"] = json!({ "kind": "zero" });
    let quiet = write_config(tmp.path(), "quiet.json", &quiet);
    let qdir = tmp.path().join("quiet");
    assert_eq!(code(&sls(&["simulate", s(&quiet), "--phi", s(&phi), "--compensators", s(&comp), "--out", s(&qdir)])), 0);
    for name in ["naive.csv", "compensated.csv"] {
        for line in csv_body(&qdir.join(name)).lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            assert!(cells[1..].iter().all(|c| c.parse::<f64>().map_or(*c == "0", |v| v == 0.0)), "{line}");
        }
    }
}

#[test]
fn missing_compensators_fall_back_with_a_note() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &config(5, 1.3));
    let (_, dir) = synth(tmp.path(), &cfg, &[]);
    let comp = dir.join("compensators");
    std::fs::remove_file(comp.join("node_0.json")).unwrap();
    let sdir = tmp.path().join("sim");
    let out = sls(&["simulate", s(&cfg), "--phi", s(&dir.join("phi.json")), "--compensators", s(&comp), "--out", s(&sdir)]);
    assert_eq!(code(&out), 0);
    assert_eq!(read(&sdir.join("simulate.json"))["fallback_nodes"], json!([0]));
    assert!(std::fs::read_to_string(sdir.join("compensated.csv")).unwrap().contains("# naive_fallback_nodes: [0]"));
}

#[test]
fn chain_gen_output_loads_as_a_system_file() {
    let tmp = TempDir::new().unwrap();
    let out = sls(&["chain-gen", "--n", "4", "--out", s(tmp.path())]);
    assert_eq!(code(&out), 0);
    let mut cfg = config(4, 2.0);
    cfg["system"] = json!({ "file": "system.json" });
    let cfg = write_config(tmp.path(), "c.json", &cfg);
    let (out, _) = synth(tmp.path(), &cfg, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["chain10.json", "chain10_saturation.json"] {
        let text = std::fs::read_to_string(root.join(name)).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["T"], 4, "{name}");
        assert_eq!(v["d"], 3, "{name}");
    }
}
