use std::path::Path;
use std::process::{Command, Output};

use volmix::evaluation::read_report;
use volmix::marketdata::{load_attention, load_daily, load_intraday, load_monthly, read_daily_frame};

fn volmix(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volmix"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = volmix(dir, args);
    assert!(
        out.status.success(),
        "volmix {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn small_scenario(dir: &Path, seed: &str) {
    ok(dir, &["simulate", "--seed", seed, "--months", "30", "--days-per-month", "15"]);
}

fn upstream(dir: &Path) {
    ok(dir, &["rv"]);
    ok(dir, &["pca"]);
    ok(dir, &["midas-fit", "--lags", "6"]);
}

#[test]
fn simulate_writes_loadable_files() {
    let dir = tempfile::tempdir().unwrap();
    small_scenario(dir.path(), "3");
    let p = dir.path();
    let intraday = load_intraday(p.join("intraday.csv")).unwrap();
    assert_eq!(intraday.days().count(), 30 * 15 + 1);
    assert_eq!(load_daily(p.join("daily.csv")).unwrap().len(), 450);
    assert_eq!(load_monthly(p.join("monthly.csv")).unwrap().len(), 30);
    assert_eq!(load_attention(p.join("attention.csv")).unwrap().len(), 450);
    assert!(p.join("truth.json").exists());
}

#[test]
fn simulate_depends_only_on_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    small_scenario(a.path(), "5");
    small_scenario(b.path(), "5");
    small_scenario(c.path(), "6");
    let read = |d: &Path| std::fs::read(d.join("intraday.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_ne!(read(a.path()), read(c.path()));
}

#[test]
fn rv_rows_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    small_scenario(dir.path(), "1");
    ok(dir.path(), &["rv"]);
    let first = std::fs::read(dir.path().join("rv.csv")).unwrap();
    let frame = read_daily_frame(dir.path().join("rv.csv")).unwrap();
    assert_eq!(frame.dates.len(), 450);
    ok(dir.path(), &["rv"]);
    assert_eq!(std::fs::read(dir.path().join("rv.csv")).unwrap(), first);
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rv.json")).unwrap()).unwrap();
    assert!(sidecar["lambda"].as_f64().unwrap() > 1.0);
    assert_eq!(sidecar["lambda_days"], 405);
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = volmix(dir.path(), &["rv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("intraday.csv"), "{err}");
}

#[test]
fn malformed_row_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("intraday.csv"),
        "date,time_min,price\n2020-01-02,5,100\n2020-01-02,10,-3\n",
    )
    .unwrap();
    let out = volmix(dir.path(), &["rv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn midas_fit_covers_days_after_warm_up() {
    let dir = tempfile::tempdir().unwrap();
    small_scenario(dir.path(), "2");
    upstream(dir.path());
    let h = read_daily_frame(dir.path().join("h.csv")).unwrap();
    let rv = read_daily_frame(dir.path().join("rv.csv")).unwrap();
    // six warm-up months of 15 days; the simulated seed day gives the first month its first return
    assert_eq!(h.dates.len(), rv.dates.len() - 6 * 15);
    assert_eq!(h.dates.last(), rv.dates.last());
    assert!(h.table.require("h").unwrap().iter().all(|v| *v > 0.0));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("midas_fit.json")).unwrap()).unwrap();
    assert_eq!(fit["spec"]["covariates"], 2);
    assert_eq!(fit["spec"]["lags"], 6);
}

#[test]
fn too_many_lags_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    small_scenario(dir.path(), "2");
    ok(dir.path(), &["rv"]);
    ok(dir.path(), &["pca"]);
    let out = volmix(dir.path(), &["midas-fit", "--lags", "40"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lag"));
}

#[test]
fn flag_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    small_scenario(dir.path(), "2");
    ok(dir.path(), &["rv"]);
    ok(dir.path(), &["pca"]);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# too long for 30 months\nlags = 40\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(volmix(dir.path(), &["midas-fit", "--config", cfg]).status.code(), Some(2));
    ok(dir.path(), &["midas-fit", "--config", cfg, "--lags", "6"]);
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "lags 6\n").unwrap();
    assert_eq!(
        volmix(dir.path(), &["midas-fit", "--config", bad.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn train_predict_evaluate_and_ablate() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    small_scenario(p, "4");
    upstream(p);
    let quick = ["--epochs", "3", "--set", "lags=6"];
    ok(p, &[&["train", "--group", "G2"][..], &quick].concat());
    ok(p, &["predict", "--set", "lags=6"]);
    ok(p, &["evaluate", "--with-baseline"]);
    let pred = read_daily_frame(p.join("pred.csv")).unwrap();
    assert_eq!(pred.table.names(), ["rv_true", "rv_pred"]);
    let rows = read_report(p.join("report.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].group.as_str(), rows[1].model.as_str()), ("G2", "persistence"));
    assert_eq!(rows[0].n, pred.dates.len());

    ok(p, &[&["ablate"][..], &quick].concat());
    let first = std::fs::read(p.join("report.csv")).unwrap();
    let rows = read_report(p.join("report.csv")).unwrap();
    let groups: Vec<&str> = rows.iter().map(|r| r.group.as_str()).collect();
    assert_eq!(groups, ["G1", "G2", "G3", "G4"]);
    for g in ["G1", "G2", "G3", "G4"] {
        assert!(p.join(format!("weights_{g}.json")).exists());
        assert!(p.join(format!("pred_{g}.csv")).exists());
    }
    ok(p, &[&["ablate"][..], &quick].concat());
    assert_eq!(std::fs::read(p.join("report.csv")).unwrap(), first);
}

#[test]
fn perfect_predictions_score_zero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("pred.csv"),
        "date,rv_true,rv_pred\n2020-01-02,1.5,1.5\n2020-01-03,0.7,0.7\n2020-01-06,2.0,2.0\n",
    )
    .unwrap();
    ok(dir.path(), &["evaluate"]);
    let rows = read_report(dir.path().join("report.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].mse, rows[0].mae, rows[0].hmse, rows[0].mape), (0.0, 0.0, 0.0, 0.0));
    assert_eq!(rows[0].r2log, 1.0);
    let text = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(text.starts_with("model,group,n,mse,hmse,mae,mape,qlike,r2log\n"));
}

#[test]
fn diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    small_scenario(p, "4");
    upstream(p);
    let out = volmix(p, &["train", "--lr", "1e6", "--epochs", "20", "--set", "lags=6"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_setting_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = volmix(dir.path(), &["rv", "--set", "colour=red"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn midas_fit_tracks_the_true_long_run_component() {
    // macro PCs match the latent factors only up to rotation, so compare tau rather than theta
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["simulate", "--seed", "1"]);
    ok(p, &["rv"]);
    ok(p, &["pca"]);
    ok(p, &["midas-fit", "--seed", "1"]);
    let truth = volmix::simlab::Truth::load(p.join("truth.json")).unwrap();
    let h = read_daily_frame(p.join("h.csv")).unwrap();
    let fitted = h.table.require("tau").unwrap();
    let mut pairs = Vec::new();
    for (i, d) in h.dates.iter().enumerate() {
        let k = truth.dates.iter().position(|x| x == d).unwrap();
        pairs.push((fitted[i].ln(), truth.tau[k - truth.first_modeled_day].ln()));
    }
    let n = pairs.len() as f64;
    let (mx, my) = (
        pairs.iter().map(|p| p.0).sum::<f64>() / n,
        pairs.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let sxy: f64 = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pairs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let syy: f64 = pairs.iter().map(|(_, y)| (y - my).powi(2)).sum();
    let corr = sxy / (sxx * syy).sqrt();
    assert!(corr > 0.8, "correlation of log tau {corr}");
}
