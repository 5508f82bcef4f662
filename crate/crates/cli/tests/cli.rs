use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const WALK_T2: &str = r#"
horizon = 2

[cost]
comm = 0.8
distortion = { kind = "indicator" }

[energy]
battery_cap = 1
initial = { offset = 1, weights = [1.0] }
harvest = { offset = 0, weights = [1.0] }

[source]
kind = "random_walk"
init = { offset = -1, weights = [0.3333333333333333, 0.3333333333333333, 0.3333333333333334] }
noise = { offset = -1, weights = [0.25, 0.5, 0.25] }
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("instance.toml");
    fs::write(&path, text).unwrap();
    path
}

fn remest(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_remest"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(str::to_string).collect()
}

#[test]
fn free_transmission_has_zero_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let text = WALK_T2.replace("comm = 0.8", "comm = 0.0").replace("horizon = 2", "horizon = 4");
    let cfg = write_config(dir.path(), &text);
    let out = remest(&cfg, dir.path(), &["--command", "solve", "--preset", "no_constraint"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("thresholds.csv");
    assert_eq!(header(&path), ["t", "e", "threshold"]);
    let with_energy: Vec<_> = rows(&path).into_iter().filter(|r| r[1] == "1").collect();
    assert_eq!(with_energy.len(), 4);
    for r in with_energy {
        assert_eq!(r[2].parse::<f64>().unwrap(), 0.0, "{r:?}");
    }
    let resolved = remest::config::parse_spec(dir.path().join("resolved_spec.toml")).unwrap().spec;
    assert_eq!(resolved.harvest, remest::dist::Pmf::point(1));
}

#[test]
fn crosscheck_costs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), WALK_T2);
    let out = remest(&cfg, dir.path(), &["--command", "crosscheck"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("crosscheck.csv");
    assert_eq!(
        header(&path),
        ["solver_cost", "family_cost", "oracle_cost", "solver_family_gap", "solver_oracle_gap", "family_oracle_gap"]
    );
    let r = &rows(&path)[0];
    let v: Vec<f64> = r.iter().map(|s| s.parse().unwrap()).collect();
    assert!((v[0] - v[1]).abs() < 1e-9 && (v[0] - v[2]).abs() < 1e-9, "{v:?}");
}

#[test]
fn same_seed_gives_same_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &WALK_T2.replace("horizon = 2", "horizon = 12"));
    let out = remest(&cfg, dir.path(), &["--command", "simulate", "--seeds", "7,7,8", "--rollouts", "500"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let read = |name: &str| fs::read(dir.path().join(name)).unwrap();
    assert_eq!(read("trace_0_seed7.csv"), read("trace_1_seed7.csv"));
    assert_ne!(read("trace_0_seed7.csv"), read("trace_2_seed8.csv"));
    assert_eq!(header(&dir.path().join("trace_0_seed7.csv")), ["t", "x", "e", "u", "y", "estimate", "stage_cost"]);
    let summary = dir.path().join("summary.csv");
    assert_eq!(header(&summary), ["seed_count", "rollouts", "mean_cost", "std_err", "solver_predicted_cost"]);
    assert_eq!(rows(&summary)[0][..2], ["3", "500"]);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &WALK_T2.replace("horizon = 2", "horizon = 5"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        for cmd in ["solve", "simulate", "props"] {
            let o = remest(&cfg, out, &["--command", cmd, "--seeds", "3,4", "--rollouts", "2000", "--trials", "50"]);
            assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 7, "{names:?}");
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn bad_pmf_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &WALK_T2.replace("[0.25, 0.5, 0.25]", "[0.2, 0.5, 0.2]"));
    let out = remest(&cfg, dir.path(), &["--command", "solve"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("source.noise"), "{err}");
}

#[test]
fn unknown_preset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), WALK_T2);
    let out = remest(&cfg, dir.path(), &["--preset", "unlimited"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn skewed_noise_is_a_structural_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &WALK_T2.replace("[0.25, 0.5, 0.25]", "[0.0, 0.1, 0.9]"));
    let out = remest(&cfg, dir.path(), &["--command", "solve"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t="));
}

#[test]
fn oracle_budget_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), WALK_T2);
    let out = remest(&cfg, dir.path(), &["--command", "oracle", "--budget", "50"]);
    assert_eq!(out.status.code(), Some(4));
    let out = remest(&cfg, dir.path(), &["--command", "oracle", "--dump-costs"]);
    assert!(out.status.success());
    let report = rows(&dir.path().join("oracle_report.csv"));
    assert_eq!(report[0][4], "121");
    assert_eq!(rows(&dir.path().join("strategy_costs.csv")).len(), 121);
}

#[test]
fn minimal_spec_solves_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
horizon = 1

[cost]
comm = 0.5
distortion = { kind = "indicator" }

[energy]
battery_cap = 1
initial = { offset = 1, weights = [1.0] }
harvest = { offset = 0, weights = [1.0] }

[source]
kind = "random_walk"
init = { offset = 3, weights = [1.0] }
noise = { offset = 0, weights = [1.0] }
"#;
    let cfg = write_config(dir.path(), text);
    let out = remest(&cfg, dir.path(), &["--command", "solve", "--plots"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&dir.path().join("values.csv")), ["t", "d_or_r", "e", "J", "U"]);
    for svg in ["thresholds.svg", "values_t1.svg"] {
        assert!(fs::read_to_string(dir.path().join(svg)).unwrap().starts_with("<svg"));
    }
}

#[test]
fn gaussian_instance_solves() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
horizon = 3

[cost]
comm = 1.0
distortion = { kind = "power", k = 2.0 }

[energy]
battery_cap = 1
initial = { offset = 1, weights = [1.0] }
harvest = { offset = 0, weights = [0.5, 0.5] }

[source]
kind = "gaussian_radial"

[source.gaussian]
dim = 2
lambda = 1.0
s1 = 1.0
s2 = 1.0
"#;
    let cfg = write_config(dir.path(), text);
    let out = remest(&cfg, dir.path(), &["--command", "solve", "--radial-h", "0.05"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = remest(&cfg, dir.path(), &["--command", "solve", "--radial-h", "0.05", "--radial-rmax", "2"]);
    assert_eq!(out.status.code(), Some(2));
}
