use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use granalign::fmat::Matrix;
use granalign::{ndjson, AlignedUnit};
use sha2::{Digest, Sha256};

fn granalign(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_granalign"));
    cmd.args(args).env_remove("GRANALIGN_SEED").env("RUST_LOG", "error");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_align_inputs(dir: &Path) {
    fs::write(dir.join("s.txt"), "<blank>\np\na\n").unwrap();
    fs::write(
        dir.join("t.ndjson"),
        "{\"word\":\"pa\",\"phonemes\":[\"p\",\"a\"]}\n{\"word\":\"a\",\"phonemes\":[\"a\"]}\n",
    )
    .unwrap();
    // Frames: blank p p blank a a blank a
    let path = [0usize, 1, 1, 0, 2, 2, 0, 2];
    let mut lp = Vec::new();
    for &k in &path {
        for v in 0..3 {
            lp.push(if v == k { 0.9f64.ln() } else { 0.05f64.ln() });
        }
    }
    Matrix::from_f64(path.len(), 3, &lp).unwrap().write(dir.join("e.fmat")).unwrap();
}

#[test]
fn align_writes_units_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_align_inputs(d);
    let out = d.join("p.ndjson");
    let words = d.join("w.ndjson");
    let o = granalign(
        &[
            "align", "--emissions", p(&d.join("e.fmat")), "--symbols", p(&d.join("s.txt")), "--target",
            p(&d.join("t.ndjson")), "--out", p(&out), "--words-out", p(&words),
        ],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let units: Vec<AlignedUnit> = ndjson::read(&out).unwrap();
    let spans: Vec<(String, f64, f64)> = units.iter().map(|u| (u.label.clone(), u.start_s, u.end_s)).collect();
    assert_eq!(spans.len(), 3);
    assert_eq!(spans[0].0, "p");
    assert!((spans[0].1 - 0.02).abs() < 1e-12 && (spans[0].2 - 0.06).abs() < 1e-12);
    assert!((spans[2].1 - 0.14).abs() < 1e-12 && (spans[2].2 - 0.16).abs() < 1e-12);
    let w: Vec<AlignedUnit> = ndjson::read(&words).unwrap();
    assert_eq!(w.len(), 2);

    let m = manifest(&d.join("p.ndjson.manifest.json"));
    assert_eq!(m["subcommand"], "align");
    assert_eq!(m["flags"]["frame_dur"], 0.02);
    let inputs = m["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 3);
    for i in inputs {
        let bytes = fs::read(i["path"].as_str().unwrap()).unwrap();
        assert_eq!(i["sha256"], hex::encode(Sha256::digest(&bytes)));
    }
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
    assert!(m["timestamps"]["finished_unix_s"].as_f64().unwrap() >= m["timestamps"]["started_unix_s"].as_f64().unwrap());

    let sylls = d.join("syl.ndjson");
    let o = granalign(
        &["syllabify", "--phones", p(&out), "--words", p(&d.join("t.ndjson")), "--out", p(&sylls)],
        &[],
    );
    assert!(o.status.success());
    let s: Vec<AlignedUnit> = ndjson::read(&sylls).unwrap();
    assert_eq!(s.iter().map(|u| u.label.as_str()).collect::<Vec<_>>(), ["pa", "a"]);
}

#[test]
fn exit_codes() {
    let o = granalign(&["train", "--help"], &[]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));

    assert_eq!(granalign(&["train", "--data", "x", "--out", "y", "--bogus"], &[]).status.code(), Some(64));
    assert_eq!(granalign(&["frobnicate"], &[]).status.code(), Some(64));
    assert_eq!(granalign(&["train", "--seed", "4..1", "--data", "x", "--out", "y"], &[]).status.code(), Some(64));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.fmat");
    let out = dir.path().join("seg.ndjson");
    assert_eq!(granalign(&["vad", "--probs", p(&missing), "--out", p(&out)], &[]).status.code(), Some(2));

    let bad = granalign(&["synth", "--out", p(&dir.path().join("c")), "--speakers-per-group", "0"], &[]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn vad_segments() {
    let dir = tempfile::tempdir().unwrap();
    let probs = dir.path().join("v.fmat");
    let mut v = vec![0.1; 10];
    v.extend(vec![0.9; 40]);
    v.extend(vec![0.1; 10]);
    Matrix::from_f64(v.len(), 1, &v).unwrap().write(&probs).unwrap();
    let out = dir.path().join("seg.ndjson");
    let o = granalign(&["vad", "--probs", p(&probs), "--threshold", "0.5", "--max-seg", "30", "--out", p(&out)], &[]);
    assert!(o.status.success());
    let segs: Vec<serde_json::Value> = ndjson::read(&out).unwrap();
    assert_eq!(segs.len(), 1);
    assert!((segs[0]["start_s"].as_f64().unwrap() - 10.0 * 512.0 / 16000.0).abs() < 1e-9);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, args: &[&str], env: &[(&str, &str)]| -> Vec<u8> {
        let out = dir.path().join(name);
        let mut all = vec!["synth", "--speakers-per-group", "1", "--utterances", "1", "--out", p(&out)];
        all.extend_from_slice(args);
        assert!(granalign(&all, env).status.success());
        fs::read(out.join("planted.ndjson")).unwrap()
    };
    let flag = run("a", &["--seed", "5"], &[]);
    let env = run("b", &[], &[("GRANALIGN_SEED", "5")]);
    let default = run("c", &[], &[]);
    assert_eq!(flag, env);
    assert_ne!(flag, default);
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    out
}

#[test]
fn pipeline_is_reproducible_and_fully_manifested() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert!(granalign(&["synth", "--speakers-per-group", "3", "--utterances", "2", "--out", p(&corpus)], &[])
        .status
        .success());
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = granalign(
            &["pipeline", "--in", p(&corpus), "--seed", "3", "--seeds", "2", "--epochs", "2", "--out", p(&out)],
            &[],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("Model Performance - AUROC and AUPRC"));
        outputs.push(out);
    }
    let a = files(&outputs[0]);
    let b = files(&outputs[1]);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        if x.extension().is_some_and(|e| e == "ndjson") {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
        }
    }

    let m = manifest(&outputs[0].join("manifest.json"));
    assert_eq!(m["seeds"], serde_json::json!([3, 4]));
    let listed: Vec<PathBuf> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| PathBuf::from(o["path"].as_str().unwrap()))
        .collect();
    let unique: BTreeSet<&PathBuf> = listed.iter().collect();
    assert_eq!(unique.len(), listed.len());
    let on_disk: BTreeSet<&PathBuf> = a.iter().filter(|f| !f.ends_with("manifest.json")).collect();
    assert_eq!(unique, on_disk);
    for g in ["phoneme", "syllable", "word"] {
        assert!(outputs[0].join(format!("runs/{g}/seed-4/checkpoint/manifest.ndjson")).is_file());
    }
}
