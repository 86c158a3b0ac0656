use std::process::{Command, Output};

fn minl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minl"))
        .args(args)
        .env_remove("MINL_CUTOFF")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_line(o: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().last().expect("an error line");
    serde_json::from_str(line).expect("error line is JSON")
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

#[test]
fn help_succeeds() {
    let o = minl(&["--help"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("--preset"));
}

#[test]
fn anchor_simulation_prints_a_described_csv() {
    let o = minl(&["simulate", "--preset", "fig6"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = stdout(&o);
    assert!(csv.lines().next().unwrap().starts_with("# experiment fig6-simulate"));
    assert!(csv.contains("S_dB = 10 log10(var / 0.25)"));
    let s = column(&csv, "s1_db")[0];
    let p = column(&csv, "probability")[0];
    assert!((s + 1.25).abs() < 0.02 && (p - 0.30).abs() < 0.01, "{s} {p}");
}

#[test]
fn output_file_gets_a_sidecar_with_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let o = minl(&["xi_sweep", "--set", "xi_points=9", "--seed", "42", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 42);
    assert_eq!(meta["params"]["xi_points"], "9");
    assert_eq!(column(&std::fs::read_to_string(&path).unwrap(), "xi").len(), 9);
}

#[test]
fn same_seed_same_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let path = dir.path().join(name);
        let o = minl(&[
            "optimize", "--set", "starts=3", "--set", "event=both", "--seed", "9", "--threads", "2", "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        let stem = path.file_stem().unwrap().to_str().unwrap().to_string();
        texts.push(std::fs::read_to_string(dir.path().join(format!("{stem}_main.csv"))).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn loss_sweep_is_monotone_and_asymmetric() {
    let o = minl(&["loss_sweep", "--preset", "fig8", "--set", "loss_points=3"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = stdout(&o);
    let (rb, ra, s) = (column(&csv, "rb_total"), column(&csv, "ra_total"), column(&csv, "s1_db"));
    let at = |b: f64, a: f64| {
        let k = (0..s.len()).find(|&k| (rb[k] - b).abs() < 1e-12 && (ra[k] - a).abs() < 1e-12).unwrap();
        s[k]
    };
    for x in [0.05, 0.1] {
        assert!(at(x, 0.0) > at(0.0, x));
        assert!(at(x, 0.0) > at(x - 0.05, 0.0));
        assert!(at(0.0, x) > at(0.0, x - 0.05));
    }
}

#[test]
fn config_file_then_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# anchor with a different first splitter\nt1 = 0.5\nphi = 3pi/2\n").unwrap();
    let o = minl(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(column(&stdout(&o), "t1"), vec![0.5]);
    let o = minl(&["simulate", "--config", cfg.to_str().unwrap(), "--set", "t1=0.6"]);
    assert_eq!(column(&stdout(&o), "t1"), vec![0.6]);
}

#[test]
fn validation_errors_exit_one() {
    for args in [
        vec!["teleport"],
        vec!["simulate", "--set", "t1"],
        vec!["simulate", "--set", "t1=1.5"],
        vec!["simulate", "--set", "colour=red"],
        vec!["simulate", "--preset", "fig99"],
        vec!["simulate", "--threads", "0"],
        vec!["optimize", "--set", "p_crit=0"],
    ] {
        let o = minl(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert_eq!(error_line(&o)["error"], "validation", "{args:?}");
    }
}

#[test]
fn numerical_failures_exit_two() {
    let o = minl(&["optimize", "--set", "event=both", "--set", "p_crit=1", "--set", "starts=2"]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_line(&o);
    assert_eq!(e["error"], "numerical");
    assert!(e["message"].as_str().unwrap().contains("feasible"));

    let o = minl(&["simulate", "--set", "alpha=3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_line(&o)["message"].as_str().unwrap().contains("cutoff"));
}

#[test]
fn cutoff_comes_from_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_minl"))
        .args(["simulate", "--preset", "fig6"])
        .env("MINL_CUTOFF", "16")
        .output()
        .unwrap();
    assert!(stdout(&o).contains("cutoff 16"));
    let o = Command::new(env!("CARGO_BIN_EXE_minl"))
        .args(["simulate"])
        .env("MINL_CUTOFF", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
