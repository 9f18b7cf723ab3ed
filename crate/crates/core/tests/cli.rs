use std::path::Path;
use std::process::Command;

use msic::cli::{raw_path, ModelFile};
use msic::data::norm2;
use msic::fit::{fit, FitConfig, Method};
use msic::io::read_dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn msic(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_msic")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, format!("schema_version = 1\n{body}")).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[experiment]\npreset = \"exptA\"\nn = 250\nseed = 1\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(msic(&["simulate", "--config", &cfg, "--out", s(&a)]).status.success());
    assert!(msic(&["simulate", "--config", &cfg, "--out", s(&b)]).status.success());
    let da = std::fs::read(a.join("data.csv")).unwrap();
    assert_eq!(da, std::fs::read(b.join("data.csv")).unwrap());
    assert_eq!(String::from_utf8(da).unwrap().lines().count(), 251);
    let truth = std::fs::read_to_string(a.join("truth.csv")).unwrap();
    assert!(truth.starts_with("b,t,c\n"));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert!(summary["cure_prop"].as_f64().unwrap() > 0.0);
    // a different seed on the command line changes the draw
    let c = dir.path().join("c");
    assert!(msic(&["simulate", "--config", &cfg, "--out", s(&c), "--seed", "2"]).status.success());
    assert_ne!(std::fs::read(a.join("data.csv")).unwrap(), std::fs::read(c.join("data.csv")).unwrap());
}

#[test]
fn large_sample_censoring_of_design_b() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[experiment]\npreset = \"exptB\"\ncensor_rate = 0.4\nn = 100000\nseed = 5\n");
    assert!(msic(&["simulate", "--config", &cfg, "--out", s(dir.path())]).status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!((summary["censor_rate"].as_f64().unwrap() - 0.4902).abs() < 0.01);
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[experiment]\npreset = \"exptA\"\nsample_size = 10\n");
    let out = msic(&["simulate", "--config", &cfg, "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sample_size"));
}

#[test]
fn unknown_method_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = msic(&["fit", "--config", &cfg, "--data", "x.csv", "--out", "m.json", "--method", "sic"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(msic(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn missing_data_file_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let missing = dir.path().join("none.csv");
    let out = msic(&["fit", "--config", &cfg, "--data", s(&missing), "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_round_trips_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[experiment]\npreset = \"exptA\"\nn = 200\nseed = 3\n");
    assert!(msic(&["simulate", "--config", &cfg, "--out", s(dir.path())]).status.success());
    let data = dir.path().join("data.csv");
    let model = dir.path().join("model.json");
    let out = msic(&["fit", "--config", &cfg, "--data", s(&data), "--out", s(&model), "--method", "msic"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let saved = ModelFile::load(&model).unwrap();
    assert_eq!(saved.method, Method::Msic);
    assert!(saved.bandwidth.unwrap() > 0.0);
    let cols = vec!["x1".to_string(), "x4".to_string()];
    let ds = read_dataset(&data, Some(&cols)).unwrap();
    let mem = fit(&ds, Method::Msic, &FitConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..100 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        assert!((saved.params.incidence(&x) - mem.incidence(&x)).abs() <= 1e-12);
    }

    let eval = dir.path().join("eval.json");
    let out = msic(&["evaluate", "--config", &cfg, "--model", s(&model), "--data", s(&data), "--out", s(&eval)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(eval).unwrap()).unwrap();
    assert!(v["prediction_error"].as_f64().unwrap().is_finite());
    assert!(v["mse_grid"].as_f64().unwrap() < 0.1);
}

#[test]
fn lc_reports_normalized_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "method = \"lc\"\n[experiment]\npreset = \"exptA\"\nn = 250\nseed = 4\n");
    assert!(msic(&["simulate", "--config", &cfg, "--out", s(dir.path())]).status.success());
    let model = dir.path().join("lc.json");
    let out = msic(&["fit", "--config", &cfg, "--data", s(&dir.path().join("data.csv")), "--out", s(&model)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = ModelFile::load(&model).unwrap();
    assert_eq!(m.method, Method::Lc);
    assert!((norm2(m.params.gamma.as_slice()) - 1.0).abs() < 1e-12);
    assert_eq!(m.params.gamma_raw.as_ref().unwrap().len(), 5);
}

#[test]
fn replicate_smoke_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[experiment]\npreset = \"exptA\"\nn = 100\nseed = 9\n[study]\nmethods = [\"lc\", \"msic\"]\nreplications = 4\nmultipliers = [1.0]\n",
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(msic(&["replicate", "--config", &cfg, "--out", s(&a)]).status.success());
    assert!(msic(&["replicate", "--config", &cfg, "--out", s(&b), "--workers", "2"]).status.success());
    let summary = std::fs::read_to_string(&a).unwrap();
    assert_eq!(summary, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(
        lines[0],
        "expt,size,lambda_c,method,mse_mean,mse_variance,gamma_bias,gamma_variance,beta_bias,beta_variance"
    );
    assert_eq!(lines.len(), 3);
    let raw = std::fs::read_to_string(raw_path(&a)).unwrap();
    assert_eq!(raw.lines().count(), 1 + 8);

    // a single multiplier of 1 reproduces the msic row of replicate
    let bw = dir.path().join("bw.csv");
    assert!(msic(&["bw-sensitivity", "--config", &cfg, "--out", s(&bw)]).status.success());
    let bw = std::fs::read_to_string(bw).unwrap();
    let bw_mse: f64 = bw.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let msic_mse: f64 = lines[2].split(',').nth(4).unwrap().parse().unwrap();
    assert_eq!(bw_mse, msic_mse);
}

#[test]
fn bw_sensitivity_sorted_by_multiplier() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[experiment]\npreset = \"exptA\"\nn = 80\nseed = 2\n[study]\nreplications = 2\nmultipliers = [2.0, 0.5, 1.0]\n",
    );
    let out = dir.path().join("bw.csv");
    assert!(msic(&["bw-sensitivity", "--config", &cfg, "--out", s(&out)]).status.success());
    let text = std::fs::read_to_string(out).unwrap();
    let ms: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(ms, vec![0.5, 1.0, 2.0]);
}

#[test]
fn bootstrap_writes_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "method = \"lc\"\n[experiment]\npreset = \"exptA\"\nn = 150\nseed = 6\n[bootstrap]\nresamples = 10\nlevel = 0.9\n",
    );
    assert!(msic(&["simulate", "--config", &cfg, "--out", s(dir.path())]).status.success());
    let out = dir.path().join("ci.json");
    let res = msic(&["bootstrap", "--config", &cfg, "--data", s(&dir.path().join("data.csv")), "--out", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["gamma"].as_array().unwrap().len(), 4);
    for pair in v["beta"].as_array().unwrap() {
        assert!(pair[0].as_f64().unwrap() <= pair[1].as_f64().unwrap());
    }
}
