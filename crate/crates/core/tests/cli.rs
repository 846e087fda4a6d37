use std::path::Path;
use std::process::{Command, Output};

fn itolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itolab")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SINE: &str = "[counterexample]\nseed = 11\nsamples = 4000\nwhich = sine\nladder = 4, 16\nsteps = 256\ntolerance = 0.1\n";

#[test]
fn empty_config_gives_header_only_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "empty.ini", "# nothing\n");
    let out = dir.path().join("out");
    let o = itolab(&["all", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in itolab::config::EXPERIMENTS {
        let text = std::fs::read_to_string(out.join(format!("{name}.csv"))).unwrap();
        assert_eq!(text, "experiment,n,rho,h,statistic,value,stderr,samples,seed,verdict\n");
    }
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases = [
        "[isometry]\nseed = 1\n",
        "[isometry]\nseed = 1\nsamples = 10\nbogus = 3\n",
        "[nowhere]\nseed = 1\nsamples = 10\n",
    ];
    for (k, text) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{k}.ini"), text);
        let o = itolab(&["isometry", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "case {k}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    }
    let o = itolab(&["isometry", "--config", "/no/such/file.ini", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sine_rows_and_worker_independence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sine.ini", SINE);
    let mut csvs = Vec::new();
    for workers in ["1", "2"] {
        let out = dir.path().join(format!("w{workers}"));
        let o = itolab(&["counterexample", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", workers]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(std::fs::read(out.join("counterexample.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let mut rd = csv::Reader::from_reader(csvs[0].as_slice());
    let moments: Vec<f64> = rd
        .records()
        .map(|r| r.unwrap())
        .filter(|r| &r[4] == "sine_second_moment")
        .map(|r| {
            assert_eq!(&r[9], "pass");
            assert_eq!(&r[8], "11");
            r[5].parse().unwrap()
        })
        .collect();
    assert_eq!(moments.len(), 2);
    assert!(moments.iter().all(|m| (m - 0.25).abs() < 0.025));
}

#[test]
fn seed_override_replaces_section_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sine.ini", SINE);
    let run = |tag: &str, extra: &[&str]| {
        let out = dir.path().join(tag);
        let mut args = vec!["counterexample", "--config", &cfg, "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert!(itolab(&args).status.success());
        std::fs::read_to_string(out.join("counterexample.csv")).unwrap()
    };
    let base = run("base", &[]);
    let over = run("over", &["--seed-override", "99"]);
    let again = run("again", &["--seed-override", "99"]);
    assert_ne!(base, over);
    assert_eq!(over, again);
    assert!(over.lines().skip(1).all(|l| l.split(',').nth(8) == Some("99")));
}

#[test]
fn failing_verdict_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // a zero tolerance cannot be met by a Monte Carlo estimate
    let cfg = write(dir.path(), "strict.ini", &SINE.replace("tolerance = 0.1", "tolerance = 0"));
    let out = dir.path().join("out");
    let o = itolab(&["counterexample", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(out.join("counterexample.csv").exists());
}
