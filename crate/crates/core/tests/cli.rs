//! Drives the `ccsoc` binary end to end and checks files and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ccsoc"))
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &str = r#"
horizon = 3

[system]
preset = "matrices"
a = [[1.0, 1.0], [0.0, 1.0]]
b = [[0.5], [1.0]]

[[vehicles]]
id = "a"
x0 = [0.0, 0.0]

[controls]
bound = 2.0

[[targets]]
vehicle = "a"
steps = 3
center = [1.0, 0.0]
half_widths = [0.5, 0.5]

[thresholds]
alpha = 0.05

[samples]
count = 200
seed = 1
generator = { kind = "uniform", std = [0.005, 0.005] }
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn gaussian_bundle_solves_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundled("gaussian_rendezvous.cfg");
    let out = dir.path().join("solve");
    let res = run(&["solve", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));

    let sol: Value = serde_json::from_str(&fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["status"], "converged");
    assert_eq!(sol["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(sol["risk"]["pairwise"].as_array().unwrap().len(), 15);
    assert!((sol["risk"]["pairwise"][0]["omega"].as_f64().unwrap() - 0.05 / 15.0).abs() < 1e-15);

    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next().unwrap(), "vehicle,k,x1,x2,x3,x4,x5,x6");
    assert_eq!(lines.count(), 3 * 6);
    assert!(traj.contains("\ndep1,0,80,"));

    let vout = dir.path().join("val");
    let res = run(&[
        "validate", "--config", p(&cfg), "--solution", p(&out.join("solution.json")),
        "--out", p(&vout), "--trials", "2000", "--seed", "3",
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let csv = fs::read_to_string(vout.join("validation.csv")).unwrap();
    assert!(csv.starts_with("group,threshold,trials,satisfied,ratio,passed\n"));
    for g in ["target", "obstacle", "pairwise"] {
        assert!(csv.contains(&format!("{g},0.05,2000,2000,1.0000,true")), "{csv}");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(vout.join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["trials"], 2000);
}

#[test]
fn single_trial_smoke_and_hash_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let out = dir.path().join("s");
    assert_eq!(code(&run(&["solve", "--config", p(&cfg), "--out", p(&out)])), 0);
    let sol = out.join("solution.json");

    let res = run(&["validate", "--config", p(&cfg), "--solution", p(&sol), "--out", p(&dir.path().join("v")), "--trials", "1"]);
    assert!(matches!(code(&res), 0 | 6));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("v/validation.json")).unwrap()).unwrap();
    let ratio = report["groups"][0]["ratio"].as_f64().unwrap();
    assert!(ratio == 0.0 || ratio == 1.0);

    // any byte change to the config breaks the pairing
    let edited = write_config(dir.path(), "small.cfg", &SMALL.replace("seed = 1", "seed = 1 # edited"));
    let res = run(&["validate", "--config", p(&edited), "--solution", p(&sol), "--out", p(&dir.path().join("v2"))]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("config"), "{}", stderr(&res));
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.cfg", SMALL);
    let read = |name: &str| -> (Value, String) {
        let out = dir.path().join(name);
        assert_eq!(code(&run(&["solve", "--config", p(&cfg), "--out", p(&out), "--seed", "11"])), 0);
        let v: Value = serde_json::from_str(&fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
        (v, fs::read_to_string(out.join("trajectory.csv")).unwrap())
    };
    let (a, ta) = read("a");
    let (b, tb) = read("b");
    assert_eq!(a["controls"], b["controls"]);
    assert_eq!(a["objective"], b["objective"]);
    assert_eq!(ta, tb);
}

#[test]
fn risk_below_sample_floor_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "tight.cfg",
        &SMALL.replace("alpha = 0.05", "alpha = 0.0001").replace("count = 200", "count = 100"),
    );
    let res = run(&["solve", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&res), 4);
    let msg = stderr(&res);
    assert!(msg.contains("100 samples") && msg.contains("use at least"), "{msg}");
}

#[test]
fn config_errors_exit_2_with_field_names() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cases = [
        (SMALL.replace("a = [[1.0, 1.0], [0.0, 1.0]]", "a = [[1.0, 1.0], [0.0]]"), "system.a: row 2"),
        (SMALL.replace("half_widths = [0.5, 0.5]", "half_widths = [0.5]"), "targets[0].half_widths"),
        (SMALL.replace("vehicle = \"a\"", "vehicle = \"zz\""), "unknown vehicle `zz`"),
        (SMALL.replace("alpha = 0.05", "alpha = 1.5"), "alpha"),
        (SMALL.replace("[controls]", "[controls]\ncolour = 3"), "colour"),
    ];
    for (text, needle) in cases {
        let cfg = write_config(dir.path(), "bad.cfg", &text);
        let res = run(&["solve", "--config", p(&cfg), "--out", p(&out)]);
        assert_eq!(code(&res), 2, "{needle}");
        assert!(stderr(&res).contains(needle), "{needle}: {}", stderr(&res));
    }
    let res = run(&["solve", "--config", p(&dir.path().join("missing.cfg")), "--out", p(&out)]);
    assert_eq!(code(&res), 2);
    let res = run(&["solve", "--config", p(&bundled("los_rendezvous.cfg")), "--out", p(&out), "--method", "bogus"]);
    assert_eq!(code(&res), 2);
}

#[test]
fn unreachable_target_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "far.cfg", &SMALL.replace("center = [1.0, 0.0]", "center = [50.0, 0.0]"));
    let res = run(&["solve", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&res), 3, "{}", stderr(&res));
}

#[test]
fn los_bundle_runs_all_methods_that_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundled("los_rendezvous.cfg");
    let objective = |method: &str| -> f64 {
        let out = dir.path().join(method);
        let res = run(&["solve", "--config", p(&cfg), "--out", p(&out), "--method", method]);
        assert_eq!(code(&res), 0, "{method}: {}", stderr(&res));
        let v: Value = serde_json::from_str(&fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
        v["objective"].as_f64().unwrap()
    };
    let proposed = objective("proposed");
    let scenario = objective("scenario");
    let cantelli = objective("cantelli");
    assert!(scenario <= proposed);
    assert!(cantelli <= proposed);

    let out = dir.path().join("uniform");
    assert_eq!(code(&run(&["solve", "--config", p(&cfg), "--out", p(&out), "--risk-mode", "uniform"])), 0);
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    assert!(proposed <= v["objective"].as_f64().unwrap());
}

#[test]
fn bound_check_table_and_threshold_marker() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&["bound-check", "--out", p(dir.path()), "--samples", "10,100,1000", "--lambda-min", "0.1", "--lambda-max", "20"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let table = fs::read_to_string(dir.path().join("bound_table.csv")).unwrap();
    let mut rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3 * 201);
    for ns in ["10", "100", "1000"] {
        let mine: Vec<&Vec<&str>> = rows.iter().filter(|r| r[0] == ns).collect();
        let floor: f64 = mine[0][3].parse().unwrap();
        let n: f64 = ns.parse().unwrap();
        assert!((floor - 1.0 / (n + 1.0)).abs() < 1e-15);
        let last: f64 = mine.last().unwrap()[2].parse().unwrap();
        assert!(last > floor && last < floor * 10.0, "{ns}: {last}");
        let bounds: Vec<f64> = mine.iter().map(|r| r[2].parse().unwrap()).collect();
        assert!(bounds.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(mine.iter().filter(|r| r[4] == "theta").count(), 1);
    }
    rows.retain(|r| r[4] == "theta" && r[0] == "100");
    let theta: f64 = rows[0][1].parse().unwrap();
    assert!((theta - 0.566_793_244_268_779_1).abs() < 1e-12);

    let res = run(&["bound-check", "--out", p(dir.path()), "--lambda-min", "5", "--lambda-max", "1"]);
    assert_eq!(code(&res), 2);
}

#[test]
fn bound_check_empirical_suite() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&[
        "bound-check", "--out", p(dir.path()), "--samples", "10", "--empirical", "exponential,uniform",
        "--trials", "10000", "--seed", "5",
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let csv = fs::read_to_string(dir.path().join("tail_report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
    assert!(!csv.contains("false"));
    let res = run(&["bound-check", "--out", p(dir.path()), "--empirical", "--trials", "10"]);
    assert_eq!(code(&res), 2, "fewer than 10^4 trials must be refused");
}

#[test]
fn gen_samples_round_trips_through_a_csv_config() {
    let dir = tempfile::tempdir().unwrap();
    let gaussian = bundled("gaussian_rendezvous.cfg");
    let out = dir.path().join("g");
    assert_eq!(code(&run(&["gen-samples", "--config", p(&gaussian), "--out", p(&out)])), 0);
    for id in ["dep1", "dep2", "dep3"] {
        let text = fs::read_to_string(out.join(format!("samples_{id}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 5001);
        assert!(text.starts_with("w_t0_d1,w_t0_d2"));
    }
    let again = dir.path().join("g2");
    assert_eq!(code(&run(&["gen-samples", "--config", p(&gaussian), "--out", p(&again)])), 0);
    assert_eq!(fs::read(out.join("samples_dep2.csv")).unwrap(), fs::read(again.join("samples_dep2.csv")).unwrap());

    let res = run(&["gen-samples", "--config", p(&gaussian), "--out", p(&out), "--count", "1"]);
    assert_eq!(code(&res), 2);

    // the same problem fed from the CSV files solves to the same controls
    let small = write_config(dir.path(), "small.cfg", SMALL);
    let sout = dir.path().join("s");
    assert_eq!(code(&run(&["gen-samples", "--config", p(&small), "--out", p(&sout)])), 0);
    let csv_cfg = SMALL.replace(
        "generator = { kind = \"uniform\", std = [0.005, 0.005] }",
        "csv = [\"s/samples_a.csv\"]",
    );
    let csv_path = write_config(dir.path(), "from_csv.cfg", &csv_cfg);
    let a = dir.path().join("sol_gen");
    let b = dir.path().join("sol_csv");
    assert_eq!(code(&run(&["solve", "--config", p(&small), "--out", p(&a)])), 0);
    let res = run(&["solve", "--config", p(&csv_path), "--out", p(&b)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let va: Value = serde_json::from_str(&fs::read_to_string(a.join("solution.json")).unwrap()).unwrap();
    let vb: Value = serde_json::from_str(&fs::read_to_string(b.join("solution.json")).unwrap()).unwrap();
    assert_eq!(va["controls"], vb["controls"]);

    // CSV-sourced scenarios validate by resampling their rows
    let res = run(&[
        "validate", "--config", p(&csv_path), "--solution", p(&b.join("solution.json")),
        "--out", p(&dir.path().join("vcsv")), "--trials", "500",
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    // and cannot run the known-moment baseline
    let res = run(&["solve", "--config", p(&csv_path), "--out", p(&b), "--method", "cantelli"]);
    assert_eq!(code(&res), 2);
}

#[test]
fn help_and_unknown_subcommand() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}
