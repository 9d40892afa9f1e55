use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

fn birdsong(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_birdsong"))
        .current_dir(dir)
        .env_remove("BIRDSONG_CACHE")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn fetch_with_zero_limit_is_a_noop() {
    let dir = tempfile::tempdir().unwrap();
    let o = birdsong(dir.path(), &["fetch", "--species", "Grey Butcherbird", "--limit", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!dir.path().join("data/manifest.csv").exists());
}

#[test]
fn fetch_from_unreachable_host_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    let o = birdsong(dir.path(), &["fetch", "--species", "Grey Butcherbird", "--limit", "3", "--base-url", &url]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("data/manifest.csv").exists());
}

#[test]
fn unknown_model_kind_exits_1_without_artifact() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("birdsong.toml"), "[model]\nkind = \"svm\"\n").unwrap();
    let o = birdsong(dir.path(), &["train"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("svm"), "{}", stderr(&o));
    assert!(!dir.path().join("output/model.bsng").exists());
}

#[test]
fn missing_artifacts_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = birdsong(dir.path(), &["evaluate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("birdsong train"), "{}", stderr(&o));
    let o = birdsong(dir.path(), &["preprocess"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("manifest"), "{}", stderr(&o));
    let o = birdsong(dir.path(), &["predict", "nothing.wav"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn flags_override_environment_and_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("birdsong.toml"), "seed = 3\n[paths]\ncache_dir = \"from-config\"\n").unwrap();
    let show = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_birdsong"));
        cmd.current_dir(dir.path()).env_remove("BIRDSONG_CACHE").arg("config").args(extra);
        if let Some(v) = env {
            cmd.env("BIRDSONG_CACHE", v);
        }
        stdout(&cmd.output().unwrap())
    };
    let base = show(&[], None);
    assert!(base.contains("seed = 3"));
    assert!(base.contains("from-config"));
    assert!(show(&["--seed", "9"], None).contains("seed = 9"));
    assert!(show(&[], Some("from-env")).contains("from-env"));
    let both = show(&["--cache-dir", "from-flag"], Some("from-env"));
    assert!(both.contains("from-flag") && !both.contains("from-env"));
}

#[test]
fn synthetic_corpus_through_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |args: &[&str]| {
        let o = birdsong(d, args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        stdout(&o)
    };
    run(&["synth", "--per-species", "10", "--duration", "4"]);
    std::fs::write(
        d.join("birdsong.toml"),
        "[model]\nkind = \"forest\"\nn_trees = 25\n\n[[plans]]\nname = \"2s\"\nwindow_s = 2.0\n\n\
         [[plans]]\nname = \"2s-hp\"\nwindow_s = 2.0\n[plans.transforms]\nhighpass_hz = 1500.0\n",
    )
    .unwrap();
    let pre = run(&["--jobs", "1", "preprocess"]);
    assert!(pre.starts_with("100 clips"), "{pre}");
    assert!(pre.contains("Rapid Triller"));
    run(&["train"]);
    let report = run(&["evaluate"]);
    assert!(report.contains("audio accuracy"), "{report}");
    assert!(d.join("output/confusion.csv").exists());
    let cv = run(&["evaluate", "--cv", "--folds", "3"]);
    assert!(cv.contains("fold 3"), "{cv}");
    let ablation = run(&["ablate"]);
    assert!(ablation.contains("2s-hp"), "{ablation}");
    let predicted = run(&["predict", "data/audio/syn2004.wav"]);
    let first = predicted.lines().nth(1).unwrap();
    assert!(first.ends_with("Rapid Triller"), "{predicted}");
}
