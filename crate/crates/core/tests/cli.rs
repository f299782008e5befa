use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ghslab"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("lab.cfg");
    fs::write(&p, body).unwrap();
    p
}

const LK_NEG: &str = "[datum]\nfamily = LK_NEG_SINGLE_MIN\n[model]\nlambda = -4\nkappa = 1\np = 2\n";

#[test]
fn lemmas_only_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LK_NEG);
    let out = dir.path().join("out");
    let st = bin()
        .args(["lemmas", "--quiet", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["verdict"], "PASS");
    assert_eq!(m["stages"].as_array().unwrap().len(), 1);
    assert_eq!(m["stages"][0]["stage"], "lemmas");
    // every listed output exists with the recorded hash
    for f in m["outputs"].as_array().unwrap() {
        let bytes = fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(ghslab::output::sha256_hex(&bytes), f["sha256"].as_str().unwrap());
    }
    assert!(out.join("lemmas.csv").exists());
    assert!(!out.join("frames.csv").exists());
    assert!(!out.join(ghslab::output::LOCK_NAME).exists());
    // manifest keys keep declaration order
    let text = fs::read_to_string(out.join("manifest.json")).unwrap();
    let tool = text.find("\"tool\"").unwrap();
    let verdict = text.find("\"verdict\": \"PASS\"").unwrap();
    assert!(tool < verdict);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[model]\nlambda = 0\nkapa = 1\n");
    let o = bin().args(["classify", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("lambda != 0"), "{err}");
    assert!(err.contains("did you mean `kappa`"), "{err}");
    assert!(err.contains("3:1:"), "{err}");

    let o = bin().args(["classify", "--config"]).arg(dir.path().join("missing.cfg")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), LK_NEG);
    let o = bin()
        .args(["solve", "--eta-max-frac", "1.5", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    let o = bin()
        .env(ghslab::expcli::THREADS_ENV, "zero")
        .args(["classify", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failing_verdict_exits_4() {
    // the ||u_x||_2 fit at lambda = -4 does not reproduce the tabled exponent
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LK_NEG);
    let out = dir.path().join("out");
    let st = bin()
        .args(["rates", "--quiet", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(4));
    let rates = fs::read_to_string(out.join("rates.csv")).unwrap();
    assert!(rates.lines().any(|l| l.contains("UxLower") && l.contains("MATCH")));
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{LK_NEG}[eta]\nframes = 8\n"));
    let run = |name: &str| {
        let out = dir.path().join(name);
        let st = bin()
            .env(ghslab::expcli::THREADS_ENV, if name == "a" { "1" } else { "3" })
            .args(["solve", "--quiet", "--eta-max-frac", "0.9", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
        (fs::read(out.join("frames.csv")).unwrap(), fs::read(out.join("frame_last.csv")).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn locked_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LK_NEG);
    let out = dir.path().join("out");
    let _held = ghslab::output::DirLock::acquire(&out).unwrap();
    let o = bin()
        .args(["classify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("locked"));
}
