use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use torsion_geodesic::cli::{run_command, RunArgs, EXIT_PASS, EXIT_RUNTIME, EXIT_VERIFY};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> PathBuf {
    repo().join("scenarios").join(format!("{name}.json"))
}

fn args(scenarios: Vec<PathBuf>, out: &Path) -> RunArgs {
    RunArgs {
        scenarios,
        out: out.to_owned(),
        mode: None,
        h: None,
        jobs: 1,
        sign: None,
        corrupt_torsion: None,
    }
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn failing(report: &serde_json::Value) -> Vec<String> {
    report["identities"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|i| i["verdict"] == "fail")
        .map(|i| i["name"].as_str().unwrap().to_owned())
        .collect()
}

fn all_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(all_files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn free_particle_passes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        run_command(&args(vec![scenario("free_particle")], tmp.path())),
        EXIT_PASS
    );
    let dir = tmp.path().join("free_particle");
    let r = report(&dir);
    assert_eq!(r["verdict"], "pass");
    assert_eq!(r["sign_convention"], "plus");
    for name in [
        "trajectory_reference.csv",
        "trajectory_geodesic.csv",
        "plot.tsv",
    ] {
        assert!(dir.join(name).is_file(), "{name}");
    }
    let csv = fs::read_to_string(dir.join("trajectory_reference.csv")).unwrap();
    assert!(csv.starts_with("t,x,y,z,vx,vy,vz,tau,p0,goo,isotropy,"));
    assert_eq!(csv.lines().count(), 1002);
}

#[test]
fn corrupted_torsion_fails_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let mut a = args(vec![scenario("uniform_field")], tmp.path());
    a.corrupt_torsion = Some(2.0);
    assert_eq!(run_command(&a), EXIT_VERIFY);
    let r = report(&tmp.path().join("uniform_field"));
    assert_eq!(
        failing(&r),
        ["contracted_consistency", "roundtrip_deviation"]
    );
    assert_eq!(r["run"]["torsion_scale"], 2.0);
}

#[test]
fn turning_point_is_a_runtime_error_with_finite_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        run_command(&args(vec![scenario("harmonic_turning_point")], tmp.path())),
        EXIT_RUNTIME
    );
    let dir = tmp.path().join("harmonic_turning_point");
    let r = report(&dir);
    assert_eq!(r["terminations"][0]["reason"], "turning_point");
    assert_eq!(r["run"]["exit_code"], 1);
    let csv = fs::read_to_string(dir.join("trajectory_reference.csv")).unwrap();
    let rows = csv.lines().count() - 1;
    assert!(rows > 100 && rows < 5001, "{rows}");
    for file in all_files(&dir) {
        let text = fs::read_to_string(&file).unwrap().to_lowercase();
        assert!(
            !text.contains("nan") && !text.contains("inf"),
            "{}",
            file.display()
        );
    }
}

#[test]
fn sweep_is_deterministic_across_worker_counts() {
    let all: Vec<PathBuf> = {
        let mut v: Vec<PathBuf> = fs::read_dir(repo().join("scenarios"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        v.sort();
        v
    };
    assert_eq!(all.len(), 8);
    let (one, four) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut a = args(all.clone(), one.path());
    let code_one = run_command(&a);
    a.out = four.path().to_owned();
    a.jobs = 4;
    let code_four = run_command(&a);
    // The turning-point scenario is in the set.
    assert_eq!((code_one, code_four), (EXIT_RUNTIME, EXIT_RUNTIME));
    let reports: Vec<PathBuf> = all_files(four.path())
        .into_iter()
        .filter(|p| p.ends_with("report.json"))
        .collect();
    assert_eq!(reports.len(), 8);
    let (fa, fb) = (all_files(one.path()), all_files(four.path()));
    assert_eq!(fa.len(), fb.len());
    for (a, b) in fa.iter().zip(&fb) {
        assert_eq!(
            a.strip_prefix(one.path()).unwrap(),
            b.strip_prefix(four.path()).unwrap()
        );
        assert!(
            fs::read(a).unwrap() == fs::read(b).unwrap(),
            "{} differs",
            a.display()
        );
    }
}

#[test]
fn invalid_scenario_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    let text = fs::read_to_string(scenario("free_particle"))
        .unwrap()
        .replace(r#""c": 1.0 }"#, r#""c": 1.0, "energy": 2.0 }"#);
    fs::write(&bad, text).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run_command(&args(vec![bad], &out)), EXIT_RUNTIME);
    assert!(!out.join("free_particle").exists());
}

#[test]
fn reruns_replace_outputs_without_leftovers() {
    let tmp = tempfile::tempdir().unwrap();
    let a = args(vec![scenario("uniform_field")], tmp.path());
    assert_eq!(run_command(&a), EXIT_PASS);
    let mut b = a.clone();
    b.mode = Some(torsion_geodesic::scenario::ModeSelection::Reference);
    assert_eq!(run_command(&b), EXIT_PASS);
    let names: Vec<String> = fs::read_dir(tmp.path().join("uniform_field"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    let mut names = names;
    names.sort();
    assert_eq!(
        names,
        ["plot.tsv", "report.json", "trajectory_reference.csv"]
    );
}

#[test]
fn overrides_change_the_fingerprint() {
    let tmp = tempfile::tempdir().unwrap();
    let a = args(
        vec![scenario("uniform_field")],
        tmp.path().join("a").as_path(),
    );
    let mut b = args(
        vec![scenario("uniform_field")],
        tmp.path().join("b").as_path(),
    );
    b.h = Some(2e-3);
    run_command(&a);
    run_command(&b);
    let (ra, rb) = (
        report(&tmp.path().join("a/uniform_field")),
        report(&tmp.path().join("b/uniform_field")),
    );
    assert_ne!(ra["fingerprint"], rb["fingerprint"]);
    assert_eq!(rb["run"]["h"], 0.002);
}

#[test]
fn forced_minus_sign_fails_consistency() {
    let tmp = tempfile::tempdir().unwrap();
    let mut a = args(vec![scenario("uniform_field")], tmp.path());
    a.sign = Some(torsion_geodesic::scenario::SignChoice::Minus);
    assert_eq!(run_command(&a), EXIT_VERIFY);
    let r = report(&tmp.path().join("uniform_field"));
    assert_eq!(r["sign_convention"], "minus");
    assert_eq!(r["run"]["sign_source"], "override");
    assert_eq!(failing(&r), ["contracted_consistency"]);
}

#[test]
fn golden_example_reproduces_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let docs = repo().join("docs/examples");
    assert_eq!(
        run_command(&args(vec![docs.join("scenario.json")], tmp.path())),
        EXIT_PASS
    );
    let out = tmp.path().join("golden_uniform");
    for name in [
        "trajectory_reference.csv",
        "trajectory_geodesic.csv",
        "report.json",
        "plot.tsv",
    ] {
        let want = fs::read_to_string(docs.join(name)).unwrap();
        let got = fs::read_to_string(out.join(name)).unwrap();
        assert_eq!(got, want, "{name}");
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_torsion-geodesic");
    let tmp = tempfile::tempdir().unwrap();
    let run = |extra: &[&str], name: &str| {
        Command::new(bin)
            .arg("run")
            .arg(scenario(name))
            .arg("--out")
            .arg(tmp.path())
            .args(extra)
            .output()
            .unwrap()
    };
    let ok = run(&[], "free_particle");
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("free_particle: pass"));
    assert_eq!(
        run(&["--corrupt-torsion", "2"], "uniform_field")
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&[], "harmonic_turning_point").status.code(), Some(1));
    let missing = Command::new(bin)
        .args(["run", "/nonexistent.json"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("cannot read"));
    let usage = Command::new(bin).args(["run"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
}
