//! Acceptance criterion 13: repeated seeded CLI runs emit byte-identical
//! files, including when the worker count changes.

use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_framekey")
}

fn run_ok(args: &[&str]) {
    let status = Command::new(bin())
        .args(args)
        .status()
        .expect("binary runs");
    assert!(status.success(), "framekey {args:?} failed");
}

#[test]
fn acceptance_13_byte_identical_outputs() {
    let dir = std::env::temp_dir().join(format!("framekey-accept-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = |name: &str| dir.join(name).display().to_string();

    for (protocol, extra) in [
        ("optimal", vec!["--n", "16", "--trials", "500"]),
        ("separable", vec!["--n", "400", "--trials", "50"]),
        ("bb84", vec!["--n", "6", "--trials", "5", "--rounds", "64"]),
        ("ekert", vec!["--n", "8", "--trials", "500", "--rounds", "2000"]),
    ] {
        let a = path(&format!("{protocol}-a.csv"));
        let b = path(&format!("{protocol}-b.csv"));
        let mut args_a: Vec<&str> = vec![protocol, "--seed", "42", "--out", &a, "--jobs", "1"];
        args_a.extend(extra.iter());
        let mut args_b: Vec<&str> = vec![protocol, "--seed", "42", "--out", &b, "--jobs", "4"];
        args_b.extend(extra.iter());
        run_ok(&args_a);
        run_ok(&args_b);
        let bytes_a = std::fs::read(&a).unwrap();
        let bytes_b = std::fs::read(&b).unwrap();
        assert_eq!(bytes_a, bytes_b, "{protocol}: outputs differ across job counts");
        assert!(!bytes_a.is_empty());
    }

    // Sweep output too, in JSON.
    let a = path("sweep-a.json");
    let b = path("sweep-b.json");
    run_ok(&[
        "sweep", "--protocol", "optimal", "--n-list", "8,16,32", "--trials", "400", "--seed",
        "7", "--format", "json", "--out", &a, "--jobs", "1",
    ]);
    run_ok(&[
        "sweep", "--protocol", "optimal", "--n-list", "8,16,32", "--trials", "400", "--seed",
        "7", "--format", "json", "--out", &b, "--jobs", "3",
    ]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    std::fs::remove_dir_all(&dir).ok();
    println!("PASS criterion 13: seeded CLI outputs are byte-identical across job counts");
}

#[test]
fn cli_exit_codes() {
    // Usage error: 1.
    let status = Command::new(bin())
        .args(["optimal", "--n", "2"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    // Unknown eve model through a config file: 1, with a line diagnostic.
    let dir = std::env::temp_dir().join(format!("framekey-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "n = 16\nbogus = 3\n").unwrap();
    let out = Command::new(bin())
        .args(["optimal", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.cfg:2"), "diagnostic missing: {stderr}");
    // Selftest on a healthy build: 0.
    let status = Command::new(bin()).arg("selftest").status().unwrap();
    assert_eq!(status.code(), Some(0));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn cli_config_file_precedence() {
    let dir = std::env::temp_dir().join(format!("framekey-prec-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "n = 8\ntrials = 100\nseed = 5\n").unwrap();
    let from_file = dir.join("file.csv");
    run_ok(&[
        "optimal",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        from_file.to_str().unwrap(),
    ]);
    let overridden = dir.join("flag.csv");
    run_ok(&[
        "optimal",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "200",
        "--out",
        overridden.to_str().unwrap(),
    ]);
    let file_text = std::fs::read_to_string(&from_file).unwrap();
    let flag_text = std::fs::read_to_string(&overridden).unwrap();
    assert!(file_text.contains("optimal,8,100,"));
    assert!(flag_text.contains("optimal,8,200,"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn cli_transcript_export() {
    let dir = std::env::temp_dir().join(format!("framekey-tr-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let transcript = dir.join("rounds.csv");
    let out = dir.join("run.csv");
    run_ok(&[
        "bb84",
        "--n",
        "6",
        "--trials",
        "2",
        "--rounds",
        "64",
        "--seed",
        "11",
        "--transcript",
        transcript.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&transcript).unwrap();
    assert!(text.starts_with("round,sender_kind,"));
    assert_eq!(text.lines().count(), 65); // header + one line per round
    std::fs::remove_dir_all(&dir).ok();
}
