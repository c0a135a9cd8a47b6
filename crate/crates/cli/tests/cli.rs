use std::path::Path;
use std::process::{Command, Output};

fn osid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osid"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn small_demo(dir: &Path) {
    let out = osid(
        dir,
        &[
            "synth",
            "demo",
            "--ubm-speakers",
            "3",
            "--impostors",
            "3",
            "--enrolled",
            "4",
            "--utterances",
            "3",
            "--seconds",
            "1",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: &[&str] = &[
    "--config",
    "demo/osid.conf",
    "--ubm-components",
    "4",
    "--speaker-components",
    "2",
    "--subnn-hidden",
    "8,8",
    "--multiclass-hidden",
    "16,16",
    "--threads",
    "1",
];

fn step(dir: &Path, cmd: &str, extra: &[&str]) -> Output {
    let mut args = vec![cmd];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    osid(dir, &args)
}

#[test]
fn end_to_end_run_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_demo(dir);
    for (cmd, extra) in [
        ("extract", &[][..]),
        ("train-ubm", &[]),
        ("train", &["--arch", "gmm"]),
        ("evaluate", &["--arch", "gmm"]),
        ("train", &["--arch", "subnn"]),
        ("evaluate", &["--arch", "subnn"]),
        ("train", &["--arch", "multiclass"]),
        ("evaluate", &["--arch", "multiclass"]),
        ("report", &[]),
    ] {
        let out = step(dir, cmd, extra);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let report = std::fs::read_to_string(dir.join("demo/out/report.csv")).unwrap();
    assert_eq!(
        report.lines().next(),
        Some("architecture,population_size,csrr,eer,theta_star")
    );
    assert_eq!(report.lines().count(), 7);
    let meta = std::fs::read_to_string(dir.join("demo/out/meta/train-gmm.conf")).unwrap();
    assert!(meta.contains("ubm_components = 4"));
}

#[test]
fn failed_file_gives_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_demo(dir);
    let manifest = dir.join("demo/manifest.csv");
    let mut text = std::fs::read_to_string(&manifest).unwrap();
    text.push_str("ghost,ghost-1,wav/ghost.wav,1\n");
    std::fs::write(&manifest, text).unwrap();
    let out = step(dir, "extract", &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ghost/ghost-1: unreadable"));
}

#[test]
fn fatal_errors_give_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let out = osid(
        tmp.path(),
        &["train", "--manifest", "nope.csv", "--partition", "nope.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = osid(tmp.path(), &["report", "--population-sizes", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = osid(tmp.path(), &["extract", "--arch", "svm"]);
    assert_eq!(out.status.code(), Some(2));
}
