//! Exit codes and output files of the `slotlab` binary.

use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seeds = [0]
arms = ["decoder"]

[data]
n_id = 60
n_ood = 30

[encoder]
hidden = [8]

[decoder]
hidden = [4]

[autoencoder]
steps = 20
restarts = 1

[supervised]
steps = 20

[search]
steps = 5

[replay]
steps = 10
holdout = 8

[eval.readout]
steps = 20

[theory]
instances = 2
converse_instances = 2
construct_instances = 1
points = 10
"#;

fn slotlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slotlab")).args(args).env("SLOTLAB_THREADS", "1").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by signal")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, format!("{TINY}\n{extra}")).unwrap();
    p.to_str().unwrap().to_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "seeds = [0]\n[search]\nstepz = 3\n").unwrap();
    let o = slotlab(&["gen-data", "--config", path(&cfg), "--out", path(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("search.stepz"));
}

#[test]
fn missing_config_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = slotlab(&["gen-data", "--config", path(&tmp.path().join("nope.toml")), "--out", path(tmp.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_arm_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = slotlab(&["train", "--arm", "nonsense", "--out", path(tmp.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_suite_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let o = slotlab(&["verify-theory", "--config", &cfg, "--suite", "nope", "--out", path(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn below_cubic_dimension_fails_before_any_certificate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("[theory]\n", "[theory]\nd_x = 7\n");
    std::fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("o");
    let o = slotlab(&["verify-theory", "--config", &cfg, "--suite", "construct-M", "--out", path(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.join("certificates").exists());
}

#[test]
fn single_suite_writes_certificates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("o");
    let o = slotlab(&["verify-theory", "--config", &cfg, "--suite", "moore", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("certificates/moore.json").is_file());
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["failed"], 0);
    assert!(summary["passed"].as_u64().unwrap() > 0);
}

#[test]
fn failing_suite_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[theory.relation]\nconverse_floor = 1e6\n");
    let out = tmp.path().join("o");
    let o = slotlab(&["verify-theory", "--config", &cfg, "--suite", "lemma-second", "--out", path(&out)]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("certificates/lemma-second.json").is_file());
}

#[test]
fn search_needs_a_decoder() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("o");
    let o = slotlab(&["train", "--config", &cfg, "--arm", "encoder-only", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ck = out.join("checkpoint.ckpt");
    let o = slotlab(&["search", "--config", &cfg, "--checkpoint", path(&ck), "--out", path(&tmp.path().join("s"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn latents_with_wrong_row_count_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let trained = tmp.path().join("t");
    assert_eq!(code(&slotlab(&["train", "--config", &cfg, "--out", path(&trained)])), 0);
    let ck = trained.join("checkpoint.ckpt");
    let searched = tmp.path().join("s");
    let o = slotlab(&["search", "--config", &cfg, "--checkpoint", path(&ck), "--out", path(&searched)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let latents = searched.join("latents.json");

    // Same file under a config with a different in-domain count.
    let other = tmp.path().join("other.toml");
    std::fs::write(&other, std::fs::read_to_string(&cfg).unwrap().replace("n_id = 60", "n_id = 50")).unwrap();
    let o = slotlab(&[
        "eval",
        "--config",
        path(&other),
        "--checkpoint",
        path(&ck),
        "--latents",
        path(&latents),
        "--out",
        path(&tmp.path().join("e")),
    ]);
    assert_eq!(code(&o), 2);

    let o = slotlab(&[
        "eval",
        "--config",
        &cfg,
        "--checkpoint",
        path(&ck),
        "--latents",
        path(&latents),
        "--out",
        path(&tmp.path().join("e2")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("e2/eval.json").is_file());
}

#[test]
fn full_mask_with_ood_records_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[grid]\nmask = { kind = \"full\" }\n");
    let o = slotlab(&["gen-data", "--config", &cfg, "--out", path(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn divergence_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("[supervised]\n", "[supervised]\nlr = 1e300\n");
    std::fs::write(&cfg, text).unwrap();
    let o = slotlab(&["train", "--config", &cfg, "--arm", "encoder-only", "--out", path(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn seed_override_changes_the_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let gen = |dir: &str, seed: Option<&str>| {
        let out = tmp.path().join(dir);
        let mut args = vec!["gen-data", "--config", &cfg, "--out", path(&out)];
        if let Some(s) = seed {
            args.extend(["--seed-override", s]);
        }
        assert_eq!(code(&slotlab(&args)), 0);
        std::fs::read(out.join("dataset.slds")).unwrap()
    };
    let a = gen("a", None);
    let b = gen("b", None);
    let c = gen("c", Some("7"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}
