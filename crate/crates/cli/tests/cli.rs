use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_groupsbl"))
}

const CONFIG: &str = "
geometry = ula 8
users = 4
subpaths = 3
pilots = 8
max_iters = 15
sweep = snr_db
values = 0, 10
methods = proposed, individual_sbl, genie
trials = 2
seed = 3
";

#[test]
fn run_writes_all_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(&cfg, CONFIG).unwrap();
    let mut raws = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let status = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--threads", threads, "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let stdout = String::from_utf8_lossy(&status.stdout);
        assert!(stdout.contains("individual_sbl") && stdout.contains("failed runs: 0"), "{stdout}");
        for f in ["raw.csv", "aggregate.csv", "timings.csv", "summary.txt"] {
            assert!(out.join(f).exists(), "{f}");
        }
        raws.push(std::fs::read(out.join("raw.csv")).unwrap());
    }
    assert_eq!(raws[0], raws[1]);
}

#[test]
fn trials_override_applies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = dir.path().join("o");
    let st = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--trials", "1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    let raw = std::fs::read_to_string(out.join("raw.csv")).unwrap();
    // header + 2 values x 1 trial x 3 methods
    assert_eq!(raw.lines().count(), 1 + 6);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "users = 4\nwho = 1\n").unwrap();
    let o = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = bin().args(["sweep", "fig99"]).output().unwrap();
    assert!(!o.status.success());
}
