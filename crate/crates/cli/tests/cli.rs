use std::path::Path;
use std::process::{Command, Output};

fn tml(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tml"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = tml(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn synth_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--preset", "crossing", "--seed", "7", "--out", "a.json"]);
    ok(d.path(), &["synth", "--preset", "crossing", "--seed", "7", "--out", "b.json"]);
    let read = |f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_eq!(read("a.gt.json"), read("b.gt.json"));
    ok(d.path(), &["synth", "--preset", "crossing", "--seed", "8", "--out", "c.json"]);
    assert_ne!(read("a.gt.json"), read("c.gt.json"));
}

#[test]
fn tracking_ground_truth_scores_100() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--preset", "wander", "--people", "3", "--seed", "2", "--out", "s.json"]);
    ok(d.path(), &["track", "s.gt.json", "--out", "t.json"]);
    let table = ok(d.path(), &["eval", "--gt", "s.gt.json", "--pred", "t.json", "--report", "r.json"]);
    let total = table.lines().find(|l| l.starts_with("MOTA")).unwrap();
    assert!(total.trim_end().ends_with("100.0"), "{table}");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["total"]["mota"], 100.0);
    assert!(d.path().join("t.refinement.json").exists());
}

#[test]
fn flow_fixes_the_crossing_switch() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--seed", "3", "--speed", "16", "--frames", "8", "--out", "s.json"]);
    ok(d.path(), &["track", "s.json", "--flow-gt", "s.gt.json", "--out", "flow.json"]);
    ok(d.path(), &["track", "s.json", "--alpha", "0", "--out", "dist.json"]);
    let idsw = |pred: &str| {
        ok(d.path(), &["eval", "--gt", "s.gt.json", "--pred", pred, "--report", "r.json"]);
        let r: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("r.json")).unwrap()).unwrap();
        r["total"]["counts"]["id_switches"].as_u64().unwrap()
    };
    assert_eq!(idsw("flow.json"), 0);
    assert!(idsw("dist.json") > 0);
}

#[test]
fn encode_writes_layout_byte() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--out", "s.json"]);
    ok(d.path(), &["encode", "--input", "s.gt.json", "--t1", "5", "--t2", "4", "--layout", "accumulated", "--out", "a.tmlf"]);
    ok(d.path(), &["encode", "--input", "s.gt.json", "--t1", "5", "--t2", "4", "--out", "i.tmlf"]);
    let a = std::fs::read(d.path().join("a.tmlf")).unwrap();
    let i = std::fs::read(d.path().join("i.tmlf")).unwrap();
    assert_eq!(&a[..4], b"TMLF");
    assert_eq!((a[6], i[6]), (1, 0));
    assert_eq!(a.len(), 17 + 2 * 256 * 192 * 4);
    assert_eq!(i.len(), 17 + 28 * 256 * 192 * 4);
}

#[test]
fn parallel_tracking_matches_sequential() {
    let d = tempfile::tempdir().unwrap();
    let mut inputs = Vec::new();
    for s in 0..4 {
        let f = format!("in{s}.json");
        ok(d.path(), &["synth", "--preset", "wander", "--jitter", "1", "--seed", &s.to_string(), "--out", &f]);
        inputs.push(f);
    }
    let mut one: Vec<&str> = vec!["track", "--out", "seq", "--jobs", "1"];
    one.extend(inputs.iter().map(String::as_str));
    ok(d.path(), &one);
    let mut four: Vec<&str> = vec!["track", "--out", "par", "--jobs", "4"];
    four.extend(inputs.iter().map(String::as_str));
    ok(d.path(), &four);
    for f in &inputs {
        assert_eq!(
            std::fs::read(d.path().join("seq").join(f)).unwrap(),
            std::fs::read(d.path().join("par").join(f)).unwrap()
        );
    }
}

#[test]
fn augment_writes_manifest() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--preset", "wander", "--out", "s.json"]);
    ok(d.path(), &["augment", "--input", "s.gt.json", "--out", "aug", "--samples", "5", "--crop", "96", "128"]);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("aug/manifest.json")).unwrap()).unwrap();
    let samples = m["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 5);
    for s in samples {
        let stride = s["t2"].as_u64().unwrap() - s["t1"].as_u64().unwrap();
        assert!((1..=4).contains(&stride));
        assert!(d.path().join("aug").join(s["file"].as_str().unwrap()).exists());
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("run.toml"), "[scene]\nmotion = \"static\"\nframes = 4\n").unwrap();
    ok(d.path(), &["--config", "run.toml", "synth", "--frames", "3", "--out", "s.json"]);
    let gt: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("s.gt.json")).unwrap()).unwrap();
    let frames = gt["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 3);
    assert_eq!(frames[0]["poses"], frames[2]["poses"]);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(tml(d.path(), &["bogus"]).status.code(), Some(1));
    assert_eq!(tml(d.path(), &["encode", "--input", "x.json"]).status.code(), Some(1));
    assert_eq!(tml(d.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(tml(d.path(), &["eval", "--gt", "missing.json", "--pred", "m.json"]).status.code(), Some(2));

    std::fs::write(d.path().join("bad.json"), "{\"format\": \"tml-annotations\", \"version\": 1}").unwrap();
    let out = tml(d.path(), &["track", "bad.json", "--out", "t.json"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("missing field"), "{err}");

    assert_eq!(tml(d.path(), &["synth", "--people", "40", "--out", "s.json"]).status.code(), Some(3));
    std::fs::write(d.path().join("run.toml"), "[score]\nalpha = 7\n").unwrap();
    // the whole configuration is checked, even sections the command does not use
    assert_eq!(tml(d.path(), &["--config", "run.toml", "synth", "--out", "s.json"]).status.code(), Some(3));
    ok(d.path(), &["synth", "--out", "s.json"]);
    assert_eq!(tml(d.path(), &["--config", "run.toml", "track", "s.json", "--out", "t.json"]).status.code(), Some(3));
    assert_eq!(tml(d.path(), &["--config", "nowhere.toml", "synth", "--out", "s.json"]).status.code(), Some(2));
}
