use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const CONFIG: &str = "\
# mixed-equilibrium market
w = 100
alpha = 0.1
r_s = 0.17
r_b = 0.19
u = 0.2
d = -0.1
delta = 0.95
v = 40
n0 = 200
rounds = 3000
stride = 250
replications = 3
seed = 11
";

fn finrep(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finrep"))
        .args(args)
        .current_dir(dir)
        .env_remove("FINREP_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_is_deterministic_and_independent_of_jobs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.cfg", CONFIG);
    let mut outputs = Vec::new();
    for (out, jobs) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let o = finrep(&["simulate", &cfg, "--out", out, "--jobs", jobs], tmp.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(read_dir_sorted(&tmp.path().join(out)));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["summary.csv", "trajectory_000.csv", "trajectory_001.csv", "trajectory_002.csv"]);

    let other_seed = finrep(&["simulate", &cfg, "--out", "d", "--seed", "12"], tmp.path());
    assert!(other_seed.status.success());
    assert_ne!(read_dir_sorted(&tmp.path().join("d")), outputs[0]);
}

#[test]
fn trajectories_stay_in_unit_interval() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.cfg", &format!("{CONFIG}kind = random\n"));
    let o = finrep(&["simulate", &cfg, "--out", "out"], tmp.path());
    assert!(o.status.success());
    for (name, bytes) in read_dir_sorted(&tmp.path().join("out")) {
        if !name.starts_with("trajectory_") {
            continue;
        }
        let text = String::from_utf8(bytes).unwrap();
        let mut rows = text.lines().filter(|l| !l.starts_with('#'));
        assert_eq!(rows.next(), Some("t,n1,n2,eps"));
        let mut count = 0;
        for row in rows {
            let eps: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
            assert!((0.0..=1.0).contains(&eps), "{name}: {row}");
            count += 1;
        }
        assert_eq!(count, 3000 / 250 + 1);
    }
    let summary = fs::read_to_string(tmp.path().join("out/summary.csv")).unwrap();
    assert!(summary.starts_with("config_hash,kind,eps_star_theory,eps_final_mean,eps_final_std"));
    assert!(summary.lines().nth(1).unwrap().contains(",random,"));
}

#[test]
fn config_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("garbage.cfg", format!("{CONFIG}this line has no equals sign\n")),
        ("unknown.cfg", format!("{CONFIG}colour = blue\n")),
        ("duplicate.cfg", format!("{CONFIG}v = 41\n")),
        ("missing.cfg", CONFIG.replace("delta = 0.95\n", "")),
        ("invalid.cfg", CONFIG.replace("alpha = 0.1", "alpha = 1.5")),
        ("kind.cfg", format!("{CONFIG}kind = sideways\n")),
    ];
    for (name, text) in cases {
        let cfg = write_config(tmp.path(), name, &text);
        for verb in ["simulate", "equilibria", "predict", "compare"] {
            let o = finrep(&[verb, &cfg, "--out", "out"], tmp.path());
            assert_eq!(o.status.code(), Some(1), "{verb} {name}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let cfg = write_config(tmp.path(), "ok.cfg", CONFIG);
    for args in [
        vec!["simulate", "does-not-exist.cfg"],
        vec!["simulate", &cfg, "--replications", "0"],
        vec!["simulate", &cfg, "--bogus-flag"],
        vec!["table", "7"],
        vec!["frobnicate"],
    ] {
        let o = finrep(&args, tmp.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
    assert_eq!(finrep(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn table_exit_code_reflects_tolerances() {
    let tmp = TempDir::new().unwrap();
    for k in ["1", "2", "3"] {
        let o = finrep(&["table", k, "--out", "out"], tmp.path());
        assert_eq!(o.status.code(), Some(0), "table {k}: {}", String::from_utf8_lossy(&o.stdout));
        let csv = fs::read_to_string(tmp.path().join(format!("out/table{k}.csv"))).unwrap();
        assert_eq!(csv.as_bytes(), o.stdout.as_slice());
        assert!(csv.starts_with("table,config,quantity,reference,computed,abs_diff,check,pass,note"));
        assert!(!csv.contains(",false,"));
    }
    let o = finrep(&["table", "4", "--out", "out", "--replications", "2"], tmp.path());
    let csv = String::from_utf8(o.stdout).unwrap();
    let expected = if csv.contains(",false,") { 2 } else { 0 };
    assert_eq!(o.status.code(), Some(expected));
    assert_eq!(csv.lines().count(), 1 + 4 * 4);
}

#[test]
fn output_directory_precedence() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.cfg", &format!("{CONFIG}output = from-config\n"));
    let run = |env: Option<&str>, out: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_finrep"));
        cmd.args(["equilibria", &cfg]).current_dir(tmp.path()).env_remove("FINREP_OUTPUT_DIR");
        if let Some(e) = env {
            cmd.env("FINREP_OUTPUT_DIR", tmp.path().join(e));
        }
        if let Some(o) = out {
            cmd.args(["--out", o]);
        }
        assert!(cmd.output().unwrap().status.success());
    };
    run(None, None);
    assert!(tmp.path().join("from-config/equilibria.csv").exists());
    run(Some("from-env"), None);
    assert!(tmp.path().join("from-env/equilibria.csv").exists());
    run(Some("ignored"), Some("from-flag"));
    assert!(tmp.path().join("from-flag/equilibria.csv").exists());
    assert!(!tmp.path().join("ignored").exists());
}

#[test]
fn equilibria_predict_and_compare() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.cfg", CONFIG);
    let o = finrep(&["equilibria", &cfg, "--out", "out"], tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("eps_star,kind,stability,phi1,phi2,clause"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3, "{text}");
    assert!(rows[0].starts_with("0,pure_all_risky,unstable"));
    assert!(rows[1].starts_with("0.333333,mixed,stable"));
    assert!(rows[2].starts_with("1,pure_all_risk_free,unstable"));

    let o = finrep(&["predict", &cfg], tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("kind=average clause=1c eps_star=0.333"), "{text}");

    let o = finrep(&["compare", &cfg, "--out", "out"], tmp.path());
    let csv = fs::read_to_string(tmp.path().join("out/comparison.csv")).unwrap();
    assert_eq!(csv.as_bytes(), o.stdout.as_slice());
    assert_eq!(o.status.code(), Some(0), "{csv}");
}
