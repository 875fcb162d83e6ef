#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{write_fixture, Mode, XyzServer};
use geoseg::dataset::Manifest;

fn geoseg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoseg"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("GEOSEG_CACHE_DIR")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(o));
}

#[test]
fn grid_writes_every_tile() {
    let server = XyzServer::start(Mode::Ok);
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &server.url);
    let o = geoseg(&["grid", "--config", "config.toml"], dir.path());
    ok(&o);
    assert!(stderr(&o).contains("geoseg grid: ok: 9 tiles (9 selected)"), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("out/grid.geojson")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["features"].as_array().unwrap().len(), 9);
    assert_eq!(server.hits(), 0);
}

#[test]
fn evaluate_ground_truth_against_itself() {
    let server = XyzServer::start(Mode::Ok);
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &server.url);
    ok(&geoseg(&["build", "--config", "config.toml"], dir.path()));
    let o = geoseg(
        &["evaluate", "--config", "config.toml", "--pred-dir", "out/masks", "--out", "report"],
        dir.path(),
    );
    ok(&o);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report/metrics.json")).unwrap()).unwrap();
    for c in v["classes"].as_array().unwrap() {
        assert_eq!(c["iou"], 1.0, "{c}");
        assert_eq!(c["iou_200"], 1.0, "{c}");
        assert_eq!(c["area_ratio"], 1.0, "{c}");
    }
    let csv = std::fs::read_to_string(dir.path().join("report/metrics.csv")).unwrap();
    assert!(csv.starts_with("class_id,class_name,model_area,gt_area,iou,iou_200,f1,"));
    assert!(dir.path().join("report/confusion.csv").is_file());
}

#[test]
fn clean_writes_cleaned_masks() {
    let server = XyzServer::start(Mode::Ok);
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &server.url);
    ok(&geoseg(&["build", "--config", "config.toml"], dir.path()));
    let o = geoseg(&["clean", "--config", "config.toml", "--pred-dir", "out/masks"], dir.path());
    ok(&o);
    for id in 0..9 {
        assert!(dir.path().join(format!("out/masks/cleaned/mask_{id}_2023.png")).is_file());
        assert!(dir.path().join(format!("out/masks/cleaned/mask_{id}_2023.pgw")).is_file());
    }
}

#[test]
fn missing_config_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let o = geoseg(&["grid", "--config", "nope.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.toml"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(geoseg(&["grid", "--config", "c.toml", "--bogus"], dir.path()).status.code(), Some(1));
    assert_eq!(geoseg(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(geoseg(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(geoseg(&["--version"], dir.path()).status.code(), Some(0));
}

#[test]
fn unreachable_provider_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_fixture(dir.path(), "http://127.0.0.1:9/{z}/{x}/{y}.png");
    let text = std::fs::read_to_string(&path).unwrap().replace("tag = \"2023\"", "tag = \"2023\"\nmax_retries = 0");
    std::fs::write(&path, text).unwrap();
    let o = geoseg(&["fetch", "--config", "config.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn bad_ground_truth_exits_three() {
    let server = XyzServer::start(Mode::Ok);
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &server.url);
    std::fs::write(dir.path().join("gt.geojson"), "{ not json").unwrap();
    let o = geoseg(&["groundtruth", "--config", "config.toml"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn dry_run_touches_nothing() {
    let server = XyzServer::start(Mode::Ok);
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &server.url);
    let before: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    let o = geoseg(&["build", "--config", "config.toml", "--dry-run"], dir.path());
    ok(&o);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("9"), "{stdout}");
    assert_eq!(server.hits(), 0);
    let after: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(before, after);
}

#[test]
fn manual_stages_match_build() {
    let server = XyzServer::start(Mode::Ok);
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &server.url);
    for stage in ["grid", "fetch", "groundtruth", "rasterize"] {
        ok(&geoseg(&[stage, "--config", "config.toml", "--out", "manual", "--jobs", "2"], dir.path()));
    }
    ok(&geoseg(&["build", "--config", "config.toml", "--out", "auto"], dir.path()));
    let manual = Manifest::read(&dir.path().join("manual")).unwrap();
    let auto = Manifest::read(&dir.path().join("auto")).unwrap();
    assert_eq!(manual.without_timestamp(), auto.without_timestamp());
    for id in 0..9 {
        let name = format!("masks/mask_{id}_2023.png");
        assert_eq!(
            std::fs::read(dir.path().join("manual").join(&name)).unwrap(),
            std::fs::read(dir.path().join("auto").join(&name)).unwrap()
        );
    }
}
