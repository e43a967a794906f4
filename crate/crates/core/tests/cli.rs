use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qzeno::config::{extract_echoed_spec, parse_spec};

fn qzeno(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qzeno")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const ZENO: &str = "master_seed = 5\n[two_level]\nrabi_frequency = 2.0\nmeasurement_interval = 0.05\nn_steps = 20\nmode = \"dephasing_mc\"\nn_realizations = 64\n";

#[test]
fn echoed_spec_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(tmp.path(), "a.toml", ZENO);
    let first = tmp.path().join("first");
    assert!(qzeno(&["zeno", "--spec", spec.to_str().unwrap(), "--out", first.to_str().unwrap()])
        .status
        .success());
    let csv = std::fs::read_to_string(first.join("two_level.csv")).unwrap();
    let echoed = extract_echoed_spec(&csv).unwrap();
    assert_eq!(parse_spec(&echoed).unwrap(), parse_spec(ZENO).unwrap());

    let again = write(tmp.path(), "b.toml", &echoed);
    let second = tmp.path().join("second");
    assert!(qzeno(&["zeno", "--spec", again.to_str().unwrap(), "--out", second.to_str().unwrap()])
        .status
        .success());
    for name in ["two_level.csv", "summary.json"] {
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn seed_override_changes_monte_carlo_output() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(tmp.path(), "a.toml", ZENO);
    let s = spec.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(qzeno(&["zeno", "--spec", s, "--out", a.to_str().unwrap()]).status.success());
    assert!(qzeno(&["zeno", "--spec", s, "--out", b.to_str().unwrap(), "--seed", "6"]).status.success());
    let ca = std::fs::read_to_string(a.join("two_level.csv")).unwrap();
    let cb = std::fs::read_to_string(b.join("two_level.csv")).unwrap();
    assert_ne!(ca, cb);
    assert!(cb.contains("# master_seed = 6"));
}

#[test]
fn config_errors_are_reported_as_json() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (ZENO.replace("master_seed = 5\n", ""), "master_seed"),
        (format!("{ZENO}bogus = 1\n"), "two_level.bogus"),
        (
            "master_seed = 1\n[rotor]\nkick_strength = 5.0\nn_kicks = 10\nbasis_size = 4096\n".to_string(),
            "4097",
        ),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let spec = write(tmp.path(), &format!("bad{i}.toml"), text);
        let cmd = if text.contains("[rotor]") { "rotor" } else { "zeno" };
        let out = qzeno(&[cmd, "--spec", spec.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2));
        let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["error"]["kind"], "config");
        let msg = err["error"]["message"].as_str().unwrap();
        assert!(msg.contains(needle), "{msg}");
    }
}

#[test]
fn verify_subcommand_passes() {
    let out = qzeno(&["verify"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().count() >= 5 && !text.contains("FAIL"));
}

#[test]
fn bundled_specs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        parse_spec(&text).unwrap();
        n += 1;
    }
    assert!(n >= 5);
}
