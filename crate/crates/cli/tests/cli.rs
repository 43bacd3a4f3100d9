use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn semdup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semdup"))
        .env_remove("SEMDUP_THREADS")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn missing_required_argument_is_a_usage_error() {
    let o = semdup(&["null"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--d"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "# null run\nd = 3\nmc_replicates = 30\nn_grid = 64,128\nseed = 5\n").unwrap();
    let out = dir.path().join("out");
    let o = semdup(&["--config", &s(&cfg), "--output-dir", &s(&out), "null", "--d", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let resolved = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(resolved.contains("d = 5\n"));
    assert!(resolved.contains("seed = 5\n"));
    assert!(resolved.contains("n-grid = 64,128\n"));
    assert_eq!(json(out.join("summary.json"))["d"], 5);
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_semdup"))
            .env("SEMDUP_THREADS", v)
            .args(["--output-dir", &s(dir.path()), "null", "--d", "2", "--n-grid", "32", "--mc-replicates", "30"])
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("2")), 0);
    assert_eq!(json(dir.path().join("run.meta"))["threads"], 2);
    assert_eq!(code(&run("many")), 2);
}

#[test]
fn nnstats_ladder_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    assert_eq!(code(&semdup(&["--output-dir", &d, "--seed", "4", "gen", "--kind", "uniform", "--d", "8", "--n", "16384", "--out", "u.bin"])), 0);
    let input = s(&dir.path().join("u.bin"));
    let out = dir.path().join("ladder");
    let o = semdup(&["--output-dir", &s(&out), "nnstats", "--input", &input, "--sizes", "1024,2048,4096,8192,16384"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let b = json(out.join("breakdown.json"));
    let slope = b["powerlaw_fit"]["slope"].as_f64().unwrap();
    assert!((slope + 0.25).abs() <= 0.05, "{slope}");
    assert!(b["breakdown_n"].is_null());
    assert!(out.join("ladder.csv").exists());

    let o = semdup(&["--output-dir", &s(&out), "nnstats", "--input", &input, "--sizes", "1024,32768"]);
    assert_eq!(code(&o), 2);
    let o = semdup(&["--output-dir", &s(&out), "nnstats", "--input", &s(&dir.path().join("nope.bin"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn matryoshka_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    assert_eq!(code(&semdup(&["--output-dir", &d, "gen", "--kind", "uniform", "--d", "767", "--n", "512", "--out", "m.bin"])), 0);
    let out = dir.path().join("m");
    let o = semdup(&[
        "--output-dir", &s(&out), "nnstats", "--input", &s(&dir.path().join("m.bin")), "--sizes", "256,512", "--matryoshka", "128",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(out.join("breakdown.json"))["dim"], 128);
}

#[test]
fn keff_saturation_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    assert_eq!(code(&semdup(&["--output-dir", &d, "gen", "--kind", "uniform", "--d", "16", "--n", "1000", "--out", "r.bin"])), 0);
    let r = s(&dir.path().join("r.bin"));
    let o = semdup(&["--output-dir", &d, "keff", "--stream", &r, "--reference", &r, "--n-meas", "1000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let k = json(dir.path().join("keff.json"));
    assert_eq!(k["k_eff_hat"], "inf");
    assert_eq!(k["flags"]["saturated_low"], true);
    let o = semdup(&["--output-dir", &d, "keff", "--stream", &r, "--reference", &r, "--n-meas", "1000", "--m-plus=-1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn fit_recovers_planted_law() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("split,loss,pool_size,compute\n");
    for c in [1.0f64, 10.0, 100.0, 1000.0] {
        let l_inf = 2.0 + 10.0 * c.powf(-0.3);
        csv.push_str(&format!("eval,{l_inf},inf,{c}\n"));
        for k in [1e3f64, 1e4, 1e5, 1e6] {
            let l = l_inf * (1.0 + 2.0 * c.powf(0.8) / k);
            csv.push_str(&format!("eval,{l},{k},{c}\n"));
        }
    }
    let runs = dir.path().join("runs.csv");
    fs::write(&runs, &csv).unwrap();
    let out = dir.path().join("fit");
    let o = semdup(&["--output-dir", &s(&out), "fit", "--runs", &s(&runs), "--predict", "C=10,K=5e3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let plane = &json(out.join("fit.json"))["eval"]["plane"];
    assert!((plane["a"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!((plane["beta"].as_f64().unwrap() - 0.8).abs() < 1e-6);
    assert!((plane["gamma"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    let pred = fs::read_to_string(out.join("predictions.csv")).unwrap();
    let rows: Vec<&str> = pred.lines().collect();
    assert_eq!(rows.len(), 2);
    let got: f64 = rows[1].rsplit(',').next().unwrap().parse().unwrap();
    let want = (2.0 + 10.0 * 10f64.powf(-0.3)) * (1.0 + 2.0 * 10f64.powf(0.8) / 5e3);
    assert!((got - want).abs() / want < 1e-6, "{got} vs {want}");

    let no_base: String = csv.lines().filter(|l| !l.contains(",inf,")).map(|l| format!("{l}\n")).collect();
    fs::write(&runs, no_base).unwrap();
    assert_eq!(code(&semdup(&["--output-dir", &s(&out), "fit", "--runs", &s(&runs)])), 2);
}

#[test]
fn simulate_without_redundancy_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    let o = semdup(&["--output-dir", &d, "simulate", "--rho", "0", "--replicates", "30", "--k-grid", "4", "--n-grid", "16", "--demo-samples", "200"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let curve = fs::read_to_string(dir.path().join("hutter.csv")).unwrap();
    for line in curve.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[4].parse::<f64>().unwrap(), 0.0, "{line}");
    }
    let o = semdup(&["--output-dir", &d, "simulate", "--replicates", "29"]);
    assert_eq!(code(&o), 2);
}
