use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn misfit(args: &[&str], cfg: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_misfit"));
    c.args(args);
    if let Some(p) = cfg {
        c.arg("--config").arg(p);
    }
    c.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn check_normal_pairs_holds() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "normal_pairs.cfg", "scenario.name = normal_pairs\n");
    let o = misfit(&["check", "--expect", "holds"], Some(&cfg));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("consistency_score") && out.contains("holds") && !out.contains("fails"), "{out}");
}

#[test]
fn nonsymmetric_simulate_with_expect_holds_exits_three() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "ns.cfg", "scenario.name = exp_pairs_nonsymmetric\nscenario.n = 100\nscenario.reps = 2\n");
    let out = d.path().join("out");
    let o = misfit(&["simulate", "--expect", "holds", "--out", out.to_str().unwrap()], Some(&cfg));
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("conditions.csv")).unwrap();
    assert!(csv.starts_with("condition,lambda_point,residual,error_estimate,verdict\n"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",fails")));
}

#[test]
fn simulate_outputs_are_deterministic_and_stable() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "exp_pairs.cfg", "scenario.name = exp_pairs_symmetric\nscenario.n = 200\n");
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = d.path().join(format!("d{k}"));
        let o = misfit(&["simulate", "--seed", "42", "--reps", "5", "--out", out.to_str().unwrap()], Some(&cfg));
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        runs.push(out);
    }
    let a = fs::read(runs[0].join("estimates.csv")).unwrap();
    assert_eq!(a, fs::read(runs[1].join("estimates.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("rep,psi_hat,lambda_hat_1,lambda_hat_2,converged,sandwich_se\n"));
    assert_eq!(text.lines().count(), 6);

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(runs[0].join("summary.json")).unwrap()).unwrap();
    let mut keys: Vec<&str> = summary.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["bias", "degraded", "mean_psi_hat", "mean_sandwich_se", "n", "reps", "scenario", "sd", "seed", "verdicts"]);
    assert_eq!(summary["seed"], 42);
    assert_eq!(summary["reps"], 5);
    assert_eq!(summary["verdicts"]["consistency_score"], "holds");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(runs[0].join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
    assert!(manifest["end_unix_secs"].as_f64().unwrap() >= manifest["start_unix_secs"].as_f64().unwrap());
}

#[test]
fn digest_is_stable_under_key_reordering() {
    let d = tempfile::tempdir().unwrap();
    let a = write(d.path(), "a.cfg", "scenario.name = rotation_check\nrotation.probes = 5\n");
    let b = write(d.path(), "b.cfg", "# reordered\nrotation.probes = 5\n\nscenario.name = rotation_check\n");
    let mut digests = Vec::new();
    for (k, cfg) in [a, b].iter().enumerate() {
        let out = d.path().join(format!("o{k}"));
        let o = misfit(&["simulate", "--out", out.to_str().unwrap()], Some(cfg));
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        digests.push(m["config_digest"].as_str().unwrap().to_string());
    }
    assert_eq!(digests[0], digests[1]);
    assert_eq!(digests[0].len(), 64);
}

#[test]
fn usage_and_config_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let good = write(d.path(), "g.cfg", "scenario.name = normal_pairs\n");
    assert_eq!(code(&misfit(&["simulate", "--bogus"], Some(&good))), 1);
    assert_eq!(code(&misfit(&["check"], None)), 1);
    let bad = write(d.path(), "b.cfg", "scenario.name = normal_pairs\nscenario.reps = 0\n");
    assert_eq!(code(&misfit(&["check"], Some(&bad))), 1);
    let unknown = write(d.path(), "u.cfg", "scenario.name = normal_pairs\nmixing.true.kind = cauchy\n");
    assert_eq!(code(&misfit(&["check"], Some(&unknown))), 1);
    let glm = write(d.path(), "glm.cfg", "scenario.name = glm_dispersion\n");
    assert_eq!(code(&misfit(&["orthogonalize"], Some(&glm))), 1);
}

#[test]
fn fit_and_orthogonalize() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "e.cfg", "scenario.name = exp_pairs_symmetric\n");
    // pairs with strongly varying pair effects, rates 1.5 gamma and gamma / 1.5
    let mut text = String::from("y1,y0\n");
    for i in 1..=60 {
        let g = (2.0 * (i as f64).sin()).exp();
        let u1 = (i as f64 * 0.618_033_988_7).fract();
        let u0 = (i as f64 * 0.414_213_562_4 + 0.3).fract();
        text.push_str(&format!("{},{}\n", -u1.ln() / (1.5 * g), -u0.ln() * 1.5 / g));
    }
    let data = write(d.path(), "d.csv", &text);
    let o = misfit(&["fit", "--data", data.to_str().unwrap()], Some(&cfg));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["psi_hat"].as_f64().unwrap() > 0.0);
    // a single pair leaves the gamma shape unidentified
    let one = write(d.path(), "one.csv", "1.0,2.0\n");
    assert_eq!(code(&misfit(&["fit", "--data", one.to_str().unwrap()], Some(&cfg))), 2);

    let ns = write(d.path(), "ns.cfg", "scenario.name = exp_pairs_nonsymmetric\nmixing.assumed.kind = point_mass\northogonalize.psi_grid = 1,2,4\northogonalize.lambda0 = 2\n");
    let out = d.path().join("orth");
    let o = misfit(&["orthogonalize", "--out", out.to_str().unwrap()], Some(&ns));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("orthogonalize.csv")).unwrap();
    let rows: Vec<Vec<f64>> =
        table.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!((r[1] - 2.0 / r[0].sqrt()).abs() < 1e-6 && r[2].abs() < 1e-6, "{r:?}");
    }
}
