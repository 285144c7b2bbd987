use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_acdistill"))
}

fn read_dir(p: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(p)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn list_presets_names_all_bundles() {
    let out = bin().arg("list-presets").output().unwrap();
    assert!(out.status.success());
    let s = String::from_utf8(out.stdout).unwrap();
    for name in ["desk-gauss", "desk-mnist", "paper-mnist"] {
        assert!(s.contains(name), "{s}");
    }
}

#[test]
fn validate_reports_the_offending_field() {
    let out = bin().args(["validate", "desk-gauss", "--alpha", "1.5"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seeds = [0]\ntemperature = \"hot\"\n").unwrap();
    let out = bin().arg("validate").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn validate_echoes_effective_values() {
    let out = bin().args(["validate", "desk-gauss", "--seeds", "4,5"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seeds"], serde_json::json!([4, 5]));
    assert_eq!(v["dataset"], "gauss2d");
}

#[test]
fn output_root_env_and_repeatable_runs() {
    let root = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let dir = root.path().join(sub);
        let out = bin()
            .args(["run", "desk-gauss", "--strategies", "finetune,lwf", "--seeds", "0"])
            .env("ACDISTILL_OUTPUT_ROOT", &dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert!(stdout.lines().any(|l| l.starts_with("finetune")));
        assert!(stdout.lines().any(|l| l.starts_with("lwf")));
        read_dir(&dir)
    };
    let a = run("a");
    let b = run("b");
    assert!(a.contains_key("accuracy.csv") && a.contains_key("bias.json"));
    assert_eq!(a, b);
}

#[test]
fn flag_output_beats_the_environment() {
    let root = tempfile::tempdir().unwrap();
    let flag = root.path().join("flag");
    let env = root.path().join("env");
    let out = bin()
        .args(["run", "desk-gauss", "--strategies", "finetune", "--seeds", "0", "--output"])
        .arg(&flag)
        .env("ACDISTILL_OUTPUT_ROOT", &env)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(flag.join("summary.json").exists());
    assert!(!env.exists());
}
