use std::process::Command;

fn adasplit(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_adasplit"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn build_lut_prints_table_with_provenance() {
    let out = adasplit(&["build-lut", "--tp-max", "20"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with('#')));
    assert!(text.contains("latency-focused"));
}

#[test]
fn unknown_preset_is_reported() {
    let out = adasplit(&["build-lut", "--weights", "no-such-preset"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-preset"));
}

#[test]
fn weights_from_toml_file() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.toml");
    std::fs::write(&w, "w1 = 1.0\nw2 = 0.0\nw3 = 0.0\n").unwrap();
    let from_file = adasplit(&[
        "build-lut",
        "--weights",
        w.to_str().unwrap(),
        "--constraints",
        "latency-only",
        "--tp-max",
        "60",
    ]);
    let from_preset = adasplit(&[
        "build-lut",
        "--weights",
        "latency-only",
        "--constraints",
        "latency-only",
        "--tp-max",
        "60",
    ]);
    assert!(from_file.status.success() && from_preset.status.success());
    let body = |o: &std::process::Output| {
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(body(&from_file), body(&from_preset));
}

#[test]
fn simulate_then_estimate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("t");
    let sim = adasplit(&[
        "simulate",
        "--scenario",
        "jamming",
        "--duration",
        "5",
        "-o",
        prefix.to_str().unwrap(),
    ]);
    assert!(
        sim.status.success(),
        "{}",
        String::from_utf8_lossy(&sim.stderr)
    );
    let csv = dir.path().join("t.trace.csv");
    assert!(csv.is_file() && dir.path().join("t.iq").is_file());
    let est = adasplit(&["estimate", "--trace", csv.to_str().unwrap()]);
    assert!(
        est.status.success(),
        "{}",
        String::from_utf8_lossy(&est.stderr)
    );
    assert!(
        String::from_utf8_lossy(&est.stdout)
            .lines()
            .filter(|l| !l.starts_with('#'))
            .count()
            > 1
    );
}
