use std::path::Path;
use std::process::{Command, Output};

use ordeg::degrade::DatasetManifest;

fn ordeg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ordeg"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((s(p.strip_prefix(root).unwrap()), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn scenes(dir: &Path) -> String {
    let clean = dir.join("clean");
    let o = ordeg(&[
        "scenes",
        "--out",
        &s(&clean),
        "--count",
        "2",
        "--size",
        "160",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    s(&clean)
}

#[test]
fn help_for_every_command() {
    for cmd in [
        vec!["--help"],
        vec!["scenes", "--help"],
        vec!["synth", "--help"],
        vec!["train", "--help"],
        vec!["eval", "--help"],
        vec!["predict", "--help"],
        vec!["cfpg-demo", "--help"],
    ] {
        let o = ordeg(&cmd);
        assert_eq!(o.status.code(), Some(0), "{cmd:?}");
        assert!(!o.stdout.is_empty());
    }
    assert_eq!(ordeg(&[]).status.code(), Some(2));
    assert_eq!(ordeg(&["bogus"]).status.code(), Some(2));
}

#[test]
fn synth_is_deterministic_and_handles_empty_runs() {
    let dir = tempfile::tempdir().unwrap();
    let clean = scenes(dir.path());
    let (a, b, e) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("e"),
    );
    for out in [&a, &b] {
        let o = ordeg(&[
            "synth",
            "--input",
            &clean,
            "--out",
            &s(out),
            "--count",
            "5",
            "--seed",
            "4",
            "--patch",
            "96",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(tree(&a), tree(&b));
    assert_eq!(
        DatasetManifest::read(&a.join("manifest.jsonl"))
            .unwrap()
            .len(),
        5
    );

    let o = ordeg(&[
        "synth",
        "--input",
        &clean,
        "--out",
        &s(&e),
        "--count",
        "0",
        "--patch",
        "96",
    ]);
    assert!(o.status.success());
    assert!(DatasetManifest::read(&e.join("manifest.jsonl"))
        .unwrap()
        .is_empty());
}

#[test]
fn zero_mixture_gives_single_types() {
    let dir = tempfile::tempdir().unwrap();
    let clean = scenes(dir.path());
    let out = dir.path().join("d");
    let o = ordeg(&[
        "synth",
        "--input",
        &clean,
        "--out",
        &s(&out),
        "--count",
        "12",
        "--mixture",
        "0",
        "--patch",
        "96",
    ]);
    assert!(o.status.success());
    let m = DatasetManifest::read(&out.join("manifest.jsonl")).unwrap();
    assert!(m.records.iter().all(|r| r.active_types().len() == 1));
}

#[test]
fn train_eval_predict_round() {
    let dir = tempfile::tempdir().unwrap();
    let clean = scenes(dir.path());
    let data = dir.path().join("data");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"train": {"hidden": [32], "d": 32, "epochs": 3}}"#).unwrap();
    assert!(ordeg(&[
        "synth",
        "--input",
        &clean,
        "--out",
        &s(&data),
        "--count",
        "16",
        "--patch",
        "96"
    ])
    .status
    .success());
    let ckpt = dir.path().join("model.json");
    let o = ordeg(&[
        "train",
        "--config",
        &s(&cfg),
        "--data",
        &s(&data),
        "--out",
        &s(&ckpt),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(dir.path().join("model.loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);

    let report = dir.path().join("report.json");
    let csv = dir.path().join("report.csv");
    let o = ordeg(&[
        "eval",
        "--ckpt",
        &s(&ckpt),
        "--data",
        &s(&data),
        "--report",
        &s(&report),
        "--csv",
        &s(&csv),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for k in [
        "records", "type_acc", "mae", "mae_norm", "srocc", "pcc", "per_type",
    ] {
        assert!(v.get(k).is_some(), "{k}");
    }
    assert_eq!(v["records"], 16);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 6);

    let m = DatasetManifest::read(&data.join("manifest.jsonl")).unwrap();
    let img = s(&m.resolve(&m.records[0].lq_path));
    let o = ordeg(&[
        "predict",
        "--ckpt",
        &s(&ckpt),
        "--image",
        &img,
        "--json",
        "--top-k",
        "all",
    ]);
    assert!(o.status.success());
    let p: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for t in ["Blur", "Downsample", "Noisy", "JPEG"] {
        assert!(p[t]["present"].is_boolean());
    }
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = s(&dir.path().join("missing.json"));
    let data = s(dir.path());
    let out = s(&dir.path().join("m.json"));
    assert_eq!(
        ordeg(&["train", "--config", &missing, "--data", &data, "--out", &out])
            .status
            .code(),
        Some(2)
    );

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"format_version\": 1}").unwrap();
    let img = dir.path().join("x.png");
    ordeg::imageio::save_png(&ordeg::scene::render(0, 96, 96), &img).unwrap();
    assert_eq!(
        ordeg(&["predict", "--ckpt", &s(&bad), "--image", &s(&img)])
            .status
            .code(),
        Some(5)
    );
    let nowhere = s(&dir.path().join("nope.png"));
    assert_eq!(
        ordeg(&[
            "synth",
            "--input",
            &nowhere,
            "--out",
            &s(&dir.path().join("o"))
        ])
        .status
        .code(),
        Some(3)
    );
    assert_eq!(
        ordeg(&[
            "eval",
            "--ckpt",
            &s(&bad),
            "--data",
            &data,
            "--report",
            &out,
            "--top-k",
            "0"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn cfpg_demo_compares_modes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = ordeg(&[
        "cfpg-demo",
        "--eta-par",
        "0.6",
        "--eta-perp",
        "0.6",
        "--out",
        &s(&out),
        "--compare",
    ]);
    assert!(o.status.success());
    let text =
        String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr);
    let dev: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("max deviation: "))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(dev <= 1e-10);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("step,x,y,mode"));
    assert_eq!(csv.lines().count(), 1 + 2 * 51);
}
